//! JSON form of [`LtiSystem`] and plain-text matrix blocks.
//!
//! JSON: `{"A": [[..], ..], "B": .., "C": .., "D": .., "timebase": ..,
//! "input_labels": [..], "output_labels": [..]}` with row-major nested arrays.
//! Shapes of empty blocks follow from `A` and the label counts.
//!
//! Text blocks:
//!
//! ```text
//! # comment
//! A 2 2
//! 0 1
//! -4 -0.5
//! ```

use std::fmt::Write as _;

use gasnet_core::linalg::Matrix;
use gasnet_core::lti::{LtiSystem, SignalLabel, Timebase};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemJson {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    pub timebase: Timebase,
    pub input_labels: Vec<SignalLabel>,
    pub output_labels: Vec<SignalLabel>,
}

impl From<&LtiSystem> for SystemJson {
    fn from(sys: &LtiSystem) -> Self {
        SystemJson {
            a: sys.a().to_rows(),
            b: sys.b().to_rows(),
            c: sys.c().to_rows(),
            d: sys.d().to_rows(),
            timebase: sys.timebase(),
            input_labels: sys.input_labels().to_vec(),
            output_labels: sys.output_labels().to_vec(),
        }
    }
}

fn dense(name: &str, rows: &[Vec<f64>], r: usize, c: usize) -> Result<Matrix> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Format(format!("{name} must be {r}x{c}")));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl SystemJson {
    pub fn into_system(self) -> Result<LtiSystem> {
        let (n, m, p) = (self.a.len(), self.input_labels.len(), self.output_labels.len());
        let a = dense("A", &self.a, n, n)?;
        let b = dense("B", &self.b, n, m)?;
        let c = dense("C", &self.c, p, n)?;
        let d = dense("D", &self.d, p, m)?;
        LtiSystem::new(a, b, c, d, self.timebase, self.input_labels, self.output_labels).map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn system_to_json(sys: &LtiSystem) -> String {
    serde_json::to_string_pretty(&SystemJson::from(sys)).expect("system serializes")
}

pub fn system_from_json(text: &str) -> Result<LtiSystem> {
    serde_json::from_str::<SystemJson>(text)?.into_system()
}

/// Named matrices as text blocks. Values use the shortest representation
/// that parses back to the same `f64`.
pub fn write_blocks(blocks: &[(&str, &Matrix)]) -> String {
    let mut out = String::new();
    for (name, m) in blocks {
        let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    out
}

pub fn read_blocks(text: &str) -> Result<Vec<(String, Matrix)>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut out = Vec::new();
    while let Some((lineno, header)) = lines.next() {
        let parts: Vec<&str> = header.split_whitespace().collect();
        let (name, r, c) = match parts.as_slice() {
            [name, r, c] => match (r.parse::<usize>(), c.parse::<usize>()) {
                (Ok(r), Ok(c)) => (name.to_string(), r, c),
                _ => return Err(Error::Format(format!("line {lineno}: bad block size"))),
            },
            _ => return Err(Error::Format(format!("line {lineno}: expected `<name> <rows> <cols>`"))),
        };
        let mut data = Vec::with_capacity(r * c);
        for _ in 0..r {
            let (ln, row) = lines.next().ok_or_else(|| Error::Format(format!("block {name}: missing rows")))?;
            let vals: std::result::Result<Vec<f64>, _> = row.split_whitespace().map(str::parse::<f64>).collect();
            let vals = vals.map_err(|_| Error::Format(format!("line {ln}: not a number")))?;
            if vals.len() != c {
                return Err(Error::Format(format!("line {ln}: expected {c} values, found {}", vals.len())));
            }
            data.extend(vals);
        }
        out.push((name, Matrix::from_vec(r, c, data)));
    }
    Ok(out)
}

/// The four realization matrices as text blocks.
pub fn system_to_blocks(sys: &LtiSystem) -> String {
    write_blocks(&[("A", sys.a()), ("B", sys.b()), ("C", sys.c()), ("D", sys.d())])
}

/// Rebuilds a system from `A B C D` blocks with generic labels.
pub fn system_from_blocks(text: &str, timebase: Timebase) -> Result<LtiSystem> {
    let blocks = read_blocks(text)?;
    let get = |n: &str| {
        blocks.iter().find(|(k, _)| k == n).map(|(_, m)| m.clone()).ok_or_else(|| Error::Format(format!("missing block {n}")))
    };
    let (a, b, c, d) = (get("A")?, get("B")?, get("C")?, get("D")?);
    let ins = (0..b.ncols()).map(|i| SignalLabel::flow(format!("u{}", i + 1))).collect();
    let outs = (0..c.nrows()).map(|i| SignalLabel::pressure(format!("y{}", i + 1))).collect();
    LtiSystem::new(a, b, c, d, timebase, ins, outs).map_err(|e| Error::Format(e.to_string()))
}
