//! Report files for a scenario run, written to `<out>/<scenario>/<stage>.<ext>`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gasnet_core::linalg::Matrix;
use gasnet_core::lti::{discretize_zoh, eval_tf, LtiSystem};
use gasnet_core::pipeline::{DesignSummary, PipelineArtifacts, StageOrder};
use gasnet_core::reduction::log_grid;
use gasnet_core::scenario::ScenarioTrace;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix_io::system_to_json;
use crate::run::{ScenarioRun, TraceRecord, TraceSummary};

/// Frequency grid of the Bode data (Hz).
pub const BODE_RANGE: (f64, f64, usize) = (1e-3, 10.0, 200);
/// Impulse response horizon (s) and step.
pub const IMPULSE_HORIZON: f64 = 60.0;
pub const IMPULSE_STEP: f64 = 0.1;

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

/// One header row, then one row per entry of `rows`.
pub fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn trace_header(trace: &ScenarioTrace) -> Vec<String> {
    let mut h = vec!["time".to_string()];
    h.extend(trace.output_names.iter().cloned());
    h.extend(trace.command_names.iter().cloned());
    h.push(trace.disturbance_name.clone());
    h.push("controller_state_norm".to_string());
    h
}

/// Trace as CSV; an empty trace gives the header alone.
pub fn write_trace_csv(trace: &ScenarioTrace, path: &Path) -> Result<()> {
    let rows = (0..trace.len()).map(|j| {
        let mut r = vec![trace.time[j]];
        r.extend_from_slice(trace.outputs.row(j));
        r.extend_from_slice(trace.commands.row(j));
        r.push(trace.disturbance[j]);
        r.push(trace.controller_state_norm[j]);
        r
    });
    write_csv(path, &trace_header(trace), rows)
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

#[derive(Serialize)]
struct DesignReport<'a> {
    orders: &'a [StageOrder],
    summary: &'a DesignSummary,
    command_signs: &'a [f64],
    disturbance_sign: f64,
    lqg_gain: Vec<Vec<f64>>,
    lqg_estimator_gain: Vec<Vec<f64>>,
    lqg_integral_gain: Vec<Vec<f64>>,
}

/// Magnitude from the disturbance to every measured output of each model.
fn bode_rows(models: &[(&str, &LtiSystem)], disturbance: usize) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut header = vec!["freq_hz".to_string()];
    for (tag, sys) in models {
        header.extend(sys.output_labels().iter().map(|l| format!("{tag}.{}", l.name)));
    }
    let (lo, hi, n) = BODE_RANGE;
    let rows = log_grid(lo, hi, n)
        .into_iter()
        .map(|f| {
            let s = Complex64::new(0.0, 2.0 * std::f64::consts::PI * f);
            let mut r = vec![f];
            for (_, sys) in models {
                match eval_tf(sys, s) {
                    Ok(t) => r.extend((0..t.nrows()).map(|i| t[(i, disturbance)].norm())),
                    Err(_) => r.extend(std::iter::repeat_n(f64::NAN, sys.n_outputs())),
                }
            }
            r
        })
        .collect();
    (header, rows)
}

/// `y(t) = C e^{A t} b` for the disturbance column `b`.
fn impulse_rows(models: &[(&str, &LtiSystem)], disturbance: usize) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut header = vec!["time".to_string()];
    let steps = (IMPULSE_HORIZON / IMPULSE_STEP).round() as usize + 1;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (tag, sys) in models {
        header.extend(sys.output_labels().iter().map(|l| format!("{tag}.{}", l.name)));
        let ad = discretize_zoh(sys, IMPULSE_STEP).map_err(|e| Error::Format(e.to_string()))?;
        let mut x = sys.b().col_vec(disturbance);
        let mut cols = vec![Vec::with_capacity(steps); sys.n_outputs()];
        for _ in 0..steps {
            let y = sys.c().mul_vec(&x);
            for (c, v) in cols.iter_mut().zip(y) {
                c.push(v);
            }
            x = ad.a().mul_vec(&x);
        }
        columns.extend(cols);
    }
    let rows = (0..steps)
        .map(|k| std::iter::once(k as f64 * IMPULSE_STEP).chain(columns.iter().map(|c| c[k])).collect())
        .collect();
    Ok((header, rows))
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.to_rows()
}

pub fn summary_text(name: &str, art: &PipelineArtifacts, traces: &[TraceRecord]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario {name}");
    let orders: Vec<String> = art.orders.iter().map(|o| format!("{} {}", o.stage, o.order)).collect();
    let _ = writeln!(s, "orders: {}", orders.join(", "));
    let integ = &art.conservation.integrator;
    let _ = writeln!(
        s,
        "integrator: {} pole(s) at the origin, others stable: {}, ramp slope {:.6e} Pa/s (r2 {:.6})",
        integ.zero_pole_count, integ.others_stable, integ.ramp_slope, integ.ramp_r2
    );
    let c = &art.conservation.network;
    if c.applicable {
        let _ = writeln!(s, "conservation: {} (qq {:.3e}, qp {:.3e})", c.conserves_mass, c.qq_row_residual, c.qp_norm);
    } else {
        let _ = writeln!(s, "conservation: not applicable (no pressure inputs)");
    }
    let r = &art.reduction;
    let _ = writeln!(
        s,
        "reduction: order {} ({} unstable), bound {:.6e}, achieved {:.6e}",
        r.retained_order, r.unstable_block_order, r.error_bound, r.achieved_error
    );
    let d = &art.design;
    let _ = writeln!(
        s,
        "design: lqg order {} radius {:.6}, lqg-i order {} radius {:.6}",
        d.lqg_order, d.lqg_loop_radius, d.lqg_integral_order, d.lqg_integral_loop_radius
    );
    for t in traces {
        let m = &t.summary;
        let finals: Vec<String> = m.final_outputs.iter().map(|(n, v)| format!("{n}={v:.6e}")).collect();
        let balance = match &m.balance {
            Some(b) => format!("balance residual {:.3e}", b.residual),
            None => format!("not settled (drift {:.3e})", m.drift),
        };
        let _ = writeln!(s, "{} on {}: final {}; settling {:.1} s; {balance}", m.controller, m.plant, finals.join(" "), m.settling_time);
    }
    s
}

/// Stage reports of a pipeline run under `out/<name>/`: models, checks,
/// reduction and design data, Bode and impulse grids, and `summary.txt`.
pub fn emit_stage_reports(name: &str, art: &PipelineArtifacts, out: &Path) -> Result<Vec<PathBuf>> {
    emit(name, art, &[], out)
}

/// Everything in [`emit_stage_reports`] plus one CSV per closed-loop trace
/// and `simulate.json` with their summaries.
pub fn emit_reports(run: &ScenarioRun, out: &Path) -> Result<Vec<PathBuf>> {
    emit(run.name(), &run.artifacts, &run.traces, out)
}

fn emit(name: &str, art: &PipelineArtifacts, traces: &[TraceRecord], out: &Path) -> Result<Vec<PathBuf>> {
    let dir = out.join(name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut written = Vec::new();
    let mut put = |file: &str, body: String| -> Result<()> {
        let p = dir.join(file);
        write_file(&p, body.as_bytes())?;
        written.push(p);
        Ok(())
    };

    put("close.model.json", system_to_json(&art.network.closed))?;
    put("conservation.json", to_json(&art.conservation)?)?;
    put("filter.model.json", system_to_json(&art.filtered))?;
    put("reduce.json", to_json(&art.reduction)?)?;
    put("reduce.model.json", system_to_json(&art.reduced))?;
    put("discretize.model.json", system_to_json(&art.discrete))?;
    put(
        "design.json",
        to_json(&DesignReport {
            orders: &art.orders,
            summary: &art.design,
            command_signs: &art.command_signs,
            disturbance_sign: art.disturbance_sign,
            lqg_gain: rows_of(&art.lqg.k),
            lqg_estimator_gain: rows_of(&art.lqg.l),
            lqg_integral_gain: rows_of(&art.lqg_integral.k),
        })?,
    )?;
    put("design.lqg.model.json", system_to_json(&art.lqg.system))?;
    put("design.lqgi.model.json", system_to_json(&art.lqg_integral.system))?;
    if !traces.is_empty() {
        let summaries: Vec<&TraceSummary> = traces.iter().map(|t| &t.summary).collect();
        put("simulate.json", to_json(&summaries)?)?;
    }
    put("summary.txt", summary_text(name, art, traces))?;

    let dist = art.command_signs.len();
    let models = [("unfiltered", &art.unfiltered), ("filtered", &art.filtered), ("reduced", &art.reduced)];
    let csvs = [("filter.bode.csv", bode_rows(&models, dist)), ("reduce.impulse.csv", impulse_rows(&models, dist)?)];
    for (file, (header, rows)) in csvs {
        let p = dir.join(file);
        write_csv(&p, &header, rows)?;
        written.push(p);
    }
    let p = dir.join("reduce.hsv.csv");
    let hsv = art.reduction.hankel_singular_values.iter().enumerate().map(|(i, v)| vec![(i + 1) as f64, *v]);
    write_csv(&p, &["index".to_string(), "hankel_singular_value".to_string()], hsv)?;
    written.push(p);
    for t in traces {
        let p = dir.join(format!("simulate.{}.{}.csv", t.summary.controller, t.summary.plant));
        write_trace_csv(&t.trace, &p)?;
        written.push(p);
    }
    Ok(written)
}
