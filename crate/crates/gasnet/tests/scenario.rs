use std::fs;

use gasnet::config::{LoadedScenario, ScenarioConfig, REFERENCE_CONFIG, REFERENCE_NETWORK};
use gasnet::matrix_io::{system_from_blocks, system_from_json, system_to_blocks, system_to_json};
use gasnet::report::{emit_reports, emit_stage_reports, write_trace_csv};
use gasnet::run::{build, run_scenario, simulate, Controller, Plant};
use gasnet::Error;
use gasnet_core::linalg::Matrix;
use gasnet_core::lti::{LtiSystem, SignalLabel, Timebase};
use gasnet_core::pipeline::Stage;
use gasnet_core::scenario::ScenarioTrace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scenario_in(dir: &std::path::Path, config: &str, network: &str) -> std::path::PathBuf {
    fs::write(dir.join("gctf_loop.net"), network).unwrap();
    let p = dir.join("loop.toml");
    fs::write(&p, config).unwrap();
    p
}

#[test]
fn config_loads_network_next_to_it() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_in(dir.path(), REFERENCE_CONFIG, REFERENCE_NETWORK);
    let sc = LoadedScenario::load(&path).unwrap();
    assert_eq!(sc.config, ScenarioConfig::reference());
    assert_eq!(sc.network_source, REFERENCE_NETWORK);

    let missing = LoadedScenario::load(&dir.path().join("nope.toml"));
    assert!(matches!(missing, Err(Error::Io { .. })));
    fs::remove_file(dir.path().join("gctf_loop.net")).unwrap();
    assert!(matches!(LoadedScenario::load(&path), Err(Error::Io { .. })));
}

#[test]
fn runs_are_bit_identical() {
    let a = run_scenario(LoadedScenario::reference()).unwrap();
    let b = run_scenario(LoadedScenario::reference()).unwrap();
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = emit_reports(&a, da.path()).unwrap();
    let fb = emit_reports(&b, db.path()).unwrap();
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn halving_the_substep_keeps_sample_values() {
    let sc = LoadedScenario::reference();
    let art = build(&sc).unwrap();
    let coarse = sc.config.simulation_settings();
    let fine = gasnet_core::scenario::SimulationSettings { substeps: 2 * coarse.substeps, ..coarse };
    for controller in Controller::ALL {
        let a = simulate(&art, &coarse, controller, Plant::Filtered).unwrap();
        let b = simulate(&art, &fine, controller, Plant::Filtered).unwrap();
        let ra = a.sample_rows(coarse.substeps);
        let rb = b.sample_rows(fine.substeps);
        assert_eq!(ra.len(), rb.len());
        for (&i, &j) in ra.iter().zip(&rb) {
            assert_eq!(a.time[i], b.time[j]);
            for k in 0..a.outputs.ncols() {
                let (x, y) = (a.outputs[(i, k)], b.outputs[(j, k)]);
                assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0), "{controller} t={} {x} vs {y}", a.time[i]);
            }
        }
    }
}

#[test]
fn empty_trace_writes_header_only() {
    let trace = ScenarioTrace {
        time: vec![],
        output_names: vec!["p_suc".into()],
        outputs: Matrix::zeros(0, 1),
        command_names: vec!["q_f".into()],
        commands: Matrix::zeros(0, 1),
        disturbance_name: "q_d".into(),
        disturbance: vec![],
        controller_state_norm: vec![],
    };
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    write_trace_csv(&trace, &p).unwrap();
    assert_eq!(fs::read_to_string(&p).unwrap(), "time,p_suc,q_f,q_d,controller_state_norm\n");
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let art = build(&LoadedScenario::reference()).unwrap();
    let err = emit_stage_reports("gctf_loop", &art, &blocker).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
}

#[test]
fn zero_target_order_stops_at_reduce() {
    let mut sc = LoadedScenario::reference();
    sc.config.reduction.order = 0;
    match build(&sc) {
        Err(Error::Pipeline(e)) => assert_eq!(e.stage, Stage::Reduce, "{e}"),
        other => panic!("expected a reduce failure, got {:?}", other.map(|a| a.orders)),
    }
}

#[test]
fn dangling_port_stops_at_validate() {
    let mut sc = LoadedScenario::reference();
    sc.network_source = REFERENCE_NETWORK.replace("link P10.right J1.p1\n", "");
    match build(&sc) {
        Err(Error::Pipeline(e)) => {
            assert_eq!(e.stage, Stage::Validate);
            assert!(e.diagnostics.iter().any(|d| d.rule.to_string() == "rule-IV"), "{e}");
        }
        other => panic!("expected a validate failure, got {:?}", other.map(|a| a.orders)),
    }
}

#[test]
fn system_files_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let (n, m, p) = (rng.gen_range(1..8), rng.gen_range(1..4), rng.gen_range(1..4));
        let mut draw = |r: usize, c: usize| Matrix::from_fn(r, c, |_, _| rng.gen_range(-1e3..1e3) * 10f64.powi(rng.gen_range(-8..8)));
        let (a, b, c, d) = (draw(n, n), draw(n, m), draw(p, n), draw(p, m));
        let ins = (0..m).map(|i| SignalLabel::flow(format!("q{i}"))).collect();
        let outs = (0..p).map(|i| SignalLabel::pressure(format!("p{i}"))).collect();
        let sys = LtiSystem::new(a, b, c, d, Timebase::Discrete(0.25), ins, outs).unwrap();
        let back = system_from_json(&system_to_json(&sys)).unwrap();
        assert!((back.a() - sys.a()).max_abs() <= 1e-12 * sys.a().max_abs());
        assert_eq!(back, sys);
        let blocks = system_from_blocks(&system_to_blocks(&sys), Timebase::Discrete(0.25)).unwrap();
        for (x, y) in [(blocks.a(), sys.a()), (blocks.b(), sys.b()), (blocks.c(), sys.c()), (blocks.d(), sys.d())] {
            assert!((x - y).max_abs() <= 1e-12 * y.max_abs().max(1.0));
        }
    }
}

#[test]
fn report_directory_has_every_stage() {
    let run = run_scenario(LoadedScenario::reference()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_reports(&run, dir.path()).unwrap();
    let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for want in ["close.model.json", "reduce.json", "design.json", "simulate.json", "summary.txt", "simulate.lqgi.filtered.csv"] {
        assert!(names.iter().any(|n| n == want), "{want} missing from {names:?}");
    }
    let reduced = system_from_json(&fs::read_to_string(dir.path().join("gctf_loop/reduce.model.json")).unwrap()).unwrap();
    assert_eq!(reduced, run.artifacts.reduced);
    let csv = fs::read_to_string(dir.path().join("gctf_loop/simulate.lqg.filtered.csv")).unwrap();
    let trace = &run.trace(Controller::Lqg, Plant::Filtered).unwrap().trace;
    assert_eq!(csv.lines().count(), trace.len() + 1);
}
