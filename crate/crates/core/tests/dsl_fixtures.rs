use std::fs;
use std::path::PathBuf;

use gasnet_core::components::ExternalKind;
use gasnet_core::interconnect::compile;
use gasnet_core::netdsl::{check_source, emit, parse};

fn fixtures() -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "net"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

/// `# expect: ok` or `# expect: <line> <rule> ...` on the first line.
fn expectation(src: &str) -> Option<Vec<(usize, String)>> {
    let expected = src.lines().next().unwrap().strip_prefix("# expect:").unwrap().trim();
    if expected == "ok" {
        return None;
    }
    let words: Vec<&str> = expected.split_whitespace().collect();
    Some(words.chunks(2).map(|c| (c[0].parse().unwrap(), c[1].to_string())).collect())
}

#[test]
fn fixtures_report_expected_diagnostics() {
    let all = fixtures();
    assert!(all.len() >= 10);
    for (name, src) in &all {
        match (expectation(src), check_source(src)) {
            (None, Ok(_)) => {}
            (Some(want), Err(diags)) => {
                let got: Vec<(usize, String)> = diags.iter().map(|d| (d.line, d.rule.to_string())).collect();
                assert_eq!(got, want, "{name}: {diags:#?}");
            }
            (None, Err(d)) => panic!("{name} should be accepted: {d:#?}"),
            (Some(_), Ok(_)) => panic!("{name} should be rejected"),
        }
    }
}

#[test]
fn accepted_fixtures_satisfy_count_identities() {
    for (name, src) in fixtures().iter().filter(|(_, s)| expectation(s).is_none()) {
        let (desc, counts) = check_source(src).unwrap();
        // counted straight from the declarations
        let pressures = desc.externals.iter().filter(|e| e.kind == ExternalKind::PressureIn).count();
        let flows = desc.externals.len() - pressures;
        assert_eq!((counts.n_up, counts.n_zq), (pressures, pressures), "{name}");
        assert_eq!((counts.n_uq, counts.n_zp), (flows, flows), "{name}");
        let links = desc.links.len();
        assert_eq!((counts.n_wp_int, counts.n_yp_int, counts.n_wq_int, counts.n_yq_int), (links, links, links, links), "{name}");
        let net = compile(&desc).unwrap();
        assert_eq!(net.partition.counts(), counts, "{name}");
        assert_eq!(net.closed.n_inputs(), desc.externals.len());
        assert_eq!(parse(&emit(&desc)).unwrap(), desc);
    }
}

#[test]
fn diagnostics_carry_columns() {
    let src = "component valve V1 { R=1 }\nlink V1.left   V1.lft\n";
    let d = check_source(src).unwrap_err();
    assert_eq!((d[0].line, d[0].column), (2, 1));
}
