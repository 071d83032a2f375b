//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use gasnet::config::LoadedScenario;
use gasnet::run::{run_scenario, Controller, Plant, ScenarioRun};
use gasnet_core::components::{build_component, pipe, ExternalKind, PipeParams};
use gasnet_core::conservation::{check_blocking_zero_qp, check_conservation, BlockingZero};
use gasnet_core::interconnect::compile;
use gasnet_core::linalg::{inverse, solve, CMatrix, Matrix};
use gasnet_core::lqg::{dare_residual, lqr_gain, solve_dare, spectral_radius};
use gasnet_core::lti::{dc_gain, eval_tf, poles};
use gasnet_core::netdsl::{check_source, NetworkDescription};
use gasnet_core::reduction::{butterworth_lowpass, log_grid, sigma_max};
use gasnet_core::synth::{random_network, SynthOptions};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PIPE_DC_TOL: f64 = 1e-9;
const RESONANCE_HZ: f64 = 6.25;
const RESONANCE_TOL_HZ: f64 = 0.01;
const TOL_QQ: f64 = 1e-6;
const TOL_QP: f64 = 1e-5;
const MIN_SLOPE: f64 = 0.9;
const ZERO_POLE_TOL: f64 = 1e-8;
const MIN_RAMP_R2: f64 = 0.999;
const FILTER_TOL: f64 = 1e-9;
const GOLDEN_TOL: f64 = 1e-10;
const DARE_TOL: f64 = 1e-9;
const BALANCE_TOL: f64 = 1e-6;
const TRACKING_TOL: f64 = 1e-4;
const CLOSURE_TOL: f64 = 1e-8;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn one_boundary() -> SynthOptions {
    SynthOptions { require_flow_external: true, max_pressure_externals: Some(1), ..SynthOptions::default() }
}

/// Steady-state pipe gains from the momentum balance with `dq/dx = 0`.
fn pipe_dc(p: &PipeParams) -> [[f64; 2]; 2] {
    let g = p.lambda * p.c * p.c * p.x / (p.dm * p.area * p.area);
    let r = p.q_bar / p.p_bar;
    [[1.0 + 0.5 * g * r * r, -g * r], [0.0, 1.0]]
}

fn pipe_dc_gain() -> Outcome {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = PipeParams::circular(
            r.gen_range(1.0..200.0),
            r.gen_range(0.05..1.5),
            r.gen_range(0.0..0.05),
            r.gen_range(250.0..500.0),
            r.gen_range(5e5..8e6),
            r.gen_range(-50.0..50.0),
        );
        let g = dc_gain(&pipe(&p).map_err(|e| e.to_string())?.system).finite().ok_or("pipe has a pole at the origin")?;
        let want = pipe_dc(&p);
        for i in 0..2 {
            for j in 0..2 {
                let err = (g[(i, j)] - want[i][j]).abs() / want[i][j].abs().max(1.0);
                worst = worst.max(err);
            }
        }
    }
    ensure(worst <= PIPE_DC_TOL, || format!("worst relative error {worst:.2e}"))?;
    Ok(format!("100 pipes, worst relative error {worst:.2e}"))
}

fn pipe_resonance() -> Outcome {
    let x = 10.0;
    let p = PipeParams::circular(x, 0.2, 0.02, RESONANCE_HZ * 2.0 * PI * x, 2e6, 5.0);
    let ev = poles(&pipe(&p).map_err(|e| e.to_string())?.system).map_err(|e| e.to_string())?;
    let f = ev.iter().map(|z| z.im.abs() / (2.0 * PI)).fold(0.0, f64::max);
    ensure((f - RESONANCE_HZ).abs() <= RESONANCE_TOL_HZ, || format!("resonance at {f:.4} Hz"))?;
    ensure(ev.iter().all(|z| z.re < 0.0), || "undamped pole".into())?;
    Ok(format!("resonance {f:.4} Hz"))
}

fn random_conservation() -> Outcome {
    let mut r = rng(3);
    let opts = SynthOptions { require_pressure_external: true, ..one_boundary() };
    let (mut qq, mut qp, mut checked) = (0.0f64, 0.0f64, 0);
    for _ in 0..200 {
        let d = random_network(&mut r, &opts).map_err(|e| e.to_string())?;
        let net = compile(&d).map_err(|e| e.to_string())?;
        let rep = check_conservation(&net.closed, &net.partition).map_err(|e| e.to_string())?;
        if rep.applicable {
            checked += 1;
            qq = qq.max(rep.qq_row_residual);
            qp = qp.max(rep.qp_norm);
        }
    }
    ensure(qq <= TOL_QQ && qp <= TOL_QP, || format!("qq {qq:.2e} qp {qp:.2e}"))?;
    ensure(checked == 200, || format!("only {checked} networks could be checked"))?;
    Ok(format!("200 networks; max qq {qq:.2e}, max qp {qp:.2e}"))
}

fn blocking_zero_slope() -> Outcome {
    let mut r = rng(4);
    let opts = SynthOptions { require_pressure_external: true, ..one_boundary() };
    let mut lowest = f64::INFINITY;
    for _ in 0..20 {
        let d = random_network(&mut r, &opts).map_err(|e| e.to_string())?;
        let net = compile(&d).map_err(|e| e.to_string())?;
        match check_blocking_zero_qp(&net.closed, &net.partition).map_err(|e| e.to_string())? {
            BlockingZero::Checked { slope, norms, .. } => {
                // identically vanishing blocks carry no slope information
                if norms.iter().any(|&(_, n)| n >= 1e-12) {
                    lowest = lowest.min(slope);
                }
            }
            BlockingZero::NotApplicable => return Err("network without a pressure input".into()),
        }
    }
    ensure(lowest >= MIN_SLOPE, || format!("slope {lowest:.3}"))?;
    Ok(format!("20 networks, lowest log-log slope {lowest:.3}"))
}

fn reference_integrator(run: &ScenarioRun) -> Outcome {
    let ev = poles(&run.artifacts.network.closed).map_err(|e| e.to_string())?;
    let zeros = ev.iter().filter(|z| z.norm() <= ZERO_POLE_TOL).count();
    let unstable = ev.iter().filter(|z| z.norm() > ZERO_POLE_TOL && z.re >= 0.0).count();
    let integ = &run.artifacts.conservation.integrator;
    ensure(zeros == 1, || format!("{zeros} poles at the origin"))?;
    ensure(unstable == 0, || format!("{unstable} other poles off the open left half-plane"))?;
    ensure(integ.ramp_r2 >= MIN_RAMP_R2, || format!("ramp r2 {}", integ.ramp_r2))?;
    Ok(format!("order {}, one pole at the origin, ramp slope {:.4e} Pa/s, r2 {:.6}", ev.len(), integ.ramp_slope, integ.ramp_r2))
}

fn sensor_filters(run: &ScenarioRun) -> Outcome {
    let cfg = &run.scenario.config.sensors;
    let art = &run.artifacts;
    let want = art.network.closed.order() + cfg.outputs.len() * cfg.filter_order;
    ensure(art.filtered.order() == want, || format!("filtered order {} != {want}", art.filtered.order()))?;
    let f = butterworth_lowpass(cfg.filter_order, cfg.cutoff_hz).map_err(|e| e.to_string())?;
    let g0 = eval_tf(&f, Complex64::new(0.0, 0.0)).map_err(|e| e.to_string())?[(0, 0)].norm();
    let gc = eval_tf(&f, Complex64::new(0.0, 2.0 * PI * cfg.cutoff_hz)).map_err(|e| e.to_string())?[(0, 0)].norm();
    ensure((g0 - 1.0).abs() <= FILTER_TOL, || format!("|H(0)| = {g0}"))?;
    ensure((gc - 0.5f64.sqrt()).abs() <= FILTER_TOL, || format!("|H(j wc)| = {gc}"))?;
    Ok(format!("{} + {} = {want} states; |H(0)| {g0:.12}, |H(j wc)| {gc:.12}", art.network.closed.order(), want - art.network.closed.order()))
}

fn reduction(run: &ScenarioRun) -> Outcome {
    let art = &run.artifacts;
    let rep = &art.reduction;
    let r = run.scenario.config.reduction.order;
    ensure(art.reduced.order() == r, || format!("reduced order {}", art.reduced.order()))?;
    let ev = poles(&art.reduced).map_err(|e| e.to_string())?;
    let zeros = ev.iter().filter(|z| z.norm() <= ZERO_POLE_TOL).count();
    ensure(zeros == 1, || format!("{zeros} poles at the origin after reduction"))?;
    ensure(art.reduced.d().max_abs() == 0.0, || "reduced model has a feedthrough".into())?;
    let ns_kept = r - rep.unstable_block_order;
    let discarded: f64 = rep.hankel_singular_values[ns_kept..].iter().sum();
    let bound = 2.0 * discarded;
    let ts = run.scenario.config.sampling.sample_time;
    let mut worst: f64 = 0.0;
    for w in log_grid(1e-4, PI / ts, 200) {
        let s = Complex64::new(0.0, w);
        let full = eval_tf(&art.filtered, s).map_err(|e| e.to_string())?;
        let red = eval_tf(&art.reduced, s).map_err(|e| e.to_string())?;
        worst = worst.max(sigma_max(&(&full - &red)));
    }
    ensure(worst <= bound, || format!("error {worst:.4e} exceeds bound {bound:.4e}"))?;
    Ok(format!("order {r}, achieved {worst:.4e} <= 2 x discarded {bound:.4e}"))
}

fn riccati() -> Outcome {
    let one = Matrix::from_rows(&[&[1.0]]);
    let p = solve_dare(&one, &one, &one, &one).map_err(|e| e.to_string())?[(0, 0)];
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    ensure((p - phi).abs() <= GOLDEN_TOL, || format!("scalar solution {p}"))?;
    let mut r = rng(8);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = r.gen_range(1..=10);
        let m = r.gen_range(1..=n.min(3));
        let s = 1.2 / (n as f64).sqrt();
        let a = Matrix::from_fn(n, n, |_, _| r.gen_range(-s..s));
        let b = Matrix::from_fn(n, m, |_, _| r.gen_range(-1.0..1.0));
        let c = Matrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
        let q = &(&c.transpose() * &c) + &Matrix::identity(n).scale(0.1);
        let rr = Matrix::diag(&(0..m).map(|_| r.gen_range(0.1..2.0)).collect::<Vec<_>>());
        let p = solve_dare(&a, &b, &q, &rr).map_err(|e| e.to_string())?;
        let res = dare_residual(&a, &b, &q, &rr, &p).map_err(|e| e.to_string())? / p.norm_fro().max(1.0);
        worst = worst.max(res);
        // closed loop from the textbook gain formula
        let bt = b.transpose();
        let k = &inverse(&(&rr + &(&(&bt * &p) * &b))).map_err(|e| e.to_string())? * &(&(&bt * &p) * &a);
        let k_lib = lqr_gain(&a, &b, &q, &rr).map_err(|e| e.to_string())?;
        ensure((&k - &k_lib).max_abs() <= 1e-8 * k.max_abs().max(1.0), || "gain mismatch".into())?;
        let rho = spectral_radius(&(&a - &(&b * &k))).map_err(|e| e.to_string())?;
        ensure(rho < 1.0, || format!("closed-loop radius {rho}"))?;
    }
    ensure(worst <= DARE_TOL, || format!("relative residual {worst:.2e}"))?;
    Ok(format!("golden ratio to {:.1e}; 50 systems, worst relative residual {worst:.2e}", (p - phi).abs()))
}

fn lqg_offset(run: &ScenarioRun) -> Outcome {
    let radius = run.artifacts.design.lqg_loop_radius;
    ensure(radius < 1.0, || format!("loop radius {radius}"))?;
    let t = run.trace(Controller::Lqg, Plant::Filtered).ok_or("missing trace")?;
    let bal = t.summary.balance.as_ref().ok_or_else(|| format!("did not settle (drift {:.2e})", t.summary.drift))?;
    ensure(bal.residual <= BALANCE_TOL, || format!("balance residual {:.2e}", bal.residual))?;
    let offsets: Vec<String> = t.summary.final_outputs.iter().map(|(n, v)| format!("{n} {v:.4e} Pa")).collect();
    let (_, peak) = t.summary.peak_outputs[0];
    let (_, fin) = t.summary.final_outputs[0];
    ensure(fin.abs() > 1e-3 * peak, || format!("no offset ({fin:.2e})"))?;
    Ok(format!("radius {radius:.4}, offset {}, balance residual {:.2e}", offsets.join(", "), bal.residual))
}

fn lqg_integral(run: &ScenarioRun) -> Outcome {
    let art = &run.artifacts;
    let tracked = run.scenario.config.control.tracked.len();
    let want = art.reduced.order() + tracked;
    ensure(art.lqg_integral.order == want, || format!("controller order {}", art.lqg_integral.order))?;
    ensure(art.design.lqg_integral_loop_radius < 1.0, || "unstable loop".into())?;
    let t = run.trace(Controller::LqgIntegral, Plant::Filtered).ok_or("missing trace")?;
    let mut worst: f64 = 0.0;
    for (name, _) in t.summary.final_outputs.iter().filter(|(n, _)| run.scenario.config.control.tracked.contains(n)) {
        let y = t.trace.output(name).ok_or("missing output")?;
        let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = y.last().unwrap().abs() / peak;
        worst = worst.max(err);
    }
    ensure(worst <= TRACKING_TOL, || format!("relative tracking error {worst:.2e}"))?;
    let lqg = run.trace(Controller::Lqg, Plant::Filtered).ok_or("missing trace")?;
    Ok(format!(
        "order {want}, relative tracking error {worst:.2e}; settling {:.1} s vs {:.1} s without integral action",
        t.summary.settling_time, lqg.summary.settling_time
    ))
}

fn dsl_fixtures() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures");
    let mut entries: Vec<PathBuf> = fs::read_dir(&dir).map_err(|e| e.to_string())?.map(|e| e.unwrap().path()).collect();
    entries.retain(|p| p.extension().is_some_and(|x| x == "net"));
    entries.sort();
    let mut sources: Vec<(String, String)> = Vec::new();
    for p in &entries {
        sources.push((p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(p).map_err(|e| e.to_string())?));
    }
    sources.push(("gctf_loop.net".into(), format!("# expect: ok\n{}", gasnet::config::REFERENCE_NETWORK)));
    let (mut rejected, mut accepted) = (0, 0);
    for (name, src) in &sources {
        let expected = src.lines().next().and_then(|l| l.strip_prefix("# expect:")).ok_or(format!("{name}: no expectation"))?.trim();
        match check_source(src) {
            Ok((desc, counts)) => {
                ensure(expected == "ok", || format!("{name} accepted, expected {expected}"))?;
                let pressures = desc.externals.iter().filter(|e| e.kind == ExternalKind::PressureIn).count();
                let flows = desc.externals.len() - pressures;
                let links = desc.links.len();
                ensure(
                    counts.n_up == pressures
                        && counts.n_zq == pressures
                        && counts.n_uq == flows
                        && counts.n_zp == flows
                        && [counts.n_wp_int, counts.n_yp_int, counts.n_wq_int, counts.n_yq_int] == [links; 4],
                    || format!("{name}: counts {counts:?}"),
                )?;
                accepted += 1;
            }
            Err(diags) => {
                let got: Vec<String> = diags.iter().map(|d| format!("{} {}", d.line, d.rule)).collect();
                ensure(got.join(" ") == expected, || format!("{name}: got `{}`, expected `{expected}`", got.join(" ")))?;
                rejected += 1;
            }
        }
    }
    Ok(format!("{rejected} rejected with the expected diagnostics, {accepted} accepted with consistent counts"))
}

/// Element equations, link equalities and boundary gains solved together
/// at one complex frequency.
fn signal_domain_tf(desc: &NetworkDescription, s: Complex64) -> Result<CMatrix, String> {
    let comps = desc.components.iter().map(|c| build_component(&c.kind, &c.params)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let tfs = comps.iter().map(|c| c.system.eval_tf(s)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let mut off = vec![0];
    for c in &comps {
        off.push(off.last().unwrap() + c.system.n_inputs());
    }
    let n = *off.last().unwrap();
    let locate = |inst: &str, port: &str| {
        let ci = desc.component_index(inst).unwrap();
        (ci, comps[ci].port(port).unwrap())
    };
    let output_row = |ci: usize, o: usize| {
        let mut row = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..comps[ci].system.n_inputs() {
            row[off[ci] + k] = tfs[ci][(o, k)];
        }
        row
    };
    let ne = desc.externals.len();
    let mut lhs = CMatrix::identity(n);
    let mut rhs = CMatrix::zeros(n, ne);
    for l in &desc.links {
        for (me, peer) in [(&l.a, &l.b), (&l.b, &l.a)] {
            let (ci, p) = locate(&me.instance, &me.port);
            let (cj, q) = locate(&peer.instance, &peer.port);
            for (k, v) in output_row(cj, q.output_index).into_iter().enumerate() {
                lhs[(off[ci] + p.input_index, k)] -= v;
            }
        }
    }
    for (e, ext) in desc.externals.iter().enumerate() {
        let (ci, p) = locate(&ext.port.instance, &ext.port.port);
        let gain = match ext.kind {
            ExternalKind::PressureIn => 1.0,
            ExternalKind::FlowIn => -ext.sign,
        };
        rhs[(off[ci] + p.input_index, e)] = Complex64::new(gain, 0.0);
    }
    let w = solve(&lhs, &rhs).map_err(|e| format!("{e:?}"))?;
    let mut z = CMatrix::zeros(ne, ne);
    for (e, ext) in desc.externals.iter().enumerate() {
        let (ci, p) = locate(&ext.port.instance, &ext.port.port);
        let row = output_row(ci, p.output_index);
        for j in 0..ne {
            z[(e, j)] = (0..n).map(|k| row[k] * w[(k, j)]).sum();
        }
    }
    Ok(z)
}

fn closure_oracle() -> Outcome {
    let mut r = rng(12);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = random_network(&mut r, &SynthOptions::default()).map_err(|e| e.to_string())?;
        let net = compile(&d).map_err(|e| e.to_string())?;
        for _ in 0..10 {
            let s = Complex64::new(r.gen_range(-0.5..2.0), r.gen_range(-30.0..30.0));
            let got = net.closed.eval_tf(s).map_err(|e| e.to_string())?;
            let want = signal_domain_tf(&d, s)?;
            let scale = want.as_slice().iter().fold(0.0f64, |m, z| m.max(z.norm())).max(1e-300);
            for (g, w) in got.as_slice().iter().zip(want.as_slice()) {
                worst = worst.max((g - w).norm() / scale);
            }
        }
    }
    ensure(worst <= CLOSURE_TOL, || format!("relative mismatch {worst:.2e}"))?;
    Ok(format!("20 networks x 10 frequencies, worst relative mismatch {worst:.2e}"))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let run = match run_scenario(LoadedScenario::reference()) {
        Ok(r) => r,
        Err(e) => {
            println!("reference scenario failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!("reference scenario built in {:.2} s", start.elapsed().as_secs_f64());
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("pipe steady-state gain", Box::new(pipe_dc_gain)),
        ("lossless pipe resonance", Box::new(pipe_resonance)),
        ("mass conservation on random networks", Box::new(random_conservation)),
        ("pressure-to-flow blocking zero", Box::new(blocking_zero_slope)),
        ("reference network integrator", Box::new(|| reference_integrator(&run))),
        ("sensor filters", Box::new(|| sensor_filters(&run))),
        ("balanced truncation", Box::new(|| reduction(&run))),
        ("discrete Riccati solver", Box::new(riccati)),
        ("LQG steady-state offset", Box::new(|| lqg_offset(&run))),
        ("LQG with integral action", Box::new(|| lqg_integral(&run))),
        ("network description checks", Box::new(dsl_fixtures)),
        ("interconnection against signal-domain oracle", Box::new(closure_oracle)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({secs:.2} s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} ({secs:.2} s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
