//! Random valid networks for property testing.
//!
//! Components are joined by a random spanning tree of p/q links plus a few
//! extra links; every port left over becomes an external. Draws that fail
//! validation or closure are discarded and redrawn.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::components::{build_component, ExternalKind, PortKind};
use crate::interconnect::compile;
use crate::netdsl::{ComponentDecl, ExternalDecl, LinkDecl, NetworkDescription, PortRef, Span};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub min_components: usize,
    pub max_components: usize,
    /// Probability of each extra link attempt beyond the spanning tree.
    pub extra_link_prob: f64,
    pub require_pressure_external: bool,
    pub require_flow_external: bool,
    /// Extra p/q links are added until at most this many p-ports stay free.
    pub max_pressure_externals: Option<usize>,
    pub max_attempts: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            min_components: 3,
            max_components: 8,
            extra_link_prob: 0.3,
            require_pressure_external: false,
            require_flow_external: false,
            max_pressure_externals: None,
            max_attempts: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthExhausted;

impl core::fmt::Display for SynthExhausted {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "no valid network drawn within the attempt budget")
    }
}

/// Draws until a network validates and closes with a well-posed interconnection.
pub fn random_network<R: Rng>(rng: &mut R, opts: &SynthOptions) -> Result<NetworkDescription, SynthExhausted> {
    for _ in 0..opts.max_attempts {
        if let Some(d) = draw(rng, opts) {
            if compile(&d).is_ok() {
                return Ok(d);
            }
        }
    }
    Err(SynthExhausted)
}

fn draw<R: Rng>(rng: &mut R, opts: &SynthOptions) -> Option<NetworkDescription> {
    let n = rng.gen_range(opts.min_components..=opts.max_components);
    let mut desc = NetworkDescription::default();
    let mut free: Vec<Vec<(String, PortKind)>> = Vec::with_capacity(n);
    for i in 0..n {
        let (kind, params) = random_component(rng);
        let comp = build_component(kind, &params).ok()?;
        let name = format!("{}{}", prefix(kind), i + 1);
        free.push(comp.ports.iter().map(|p| (p.port_id.clone(), p.kind)).collect());
        desc.components.push(ComponentDecl { name, kind: kind.to_string(), params, span: Span::default() });
    }

    for i in 1..n {
        let mut options = Vec::new();
        for (pi, &(_, ki)) in free[i].iter().enumerate() {
            for (j, ports) in free.iter().enumerate().take(i) {
                for (pj, &(_, kj)) in ports.iter().enumerate() {
                    if ki != kj {
                        options.push((pi, j, pj));
                    }
                }
            }
        }
        let &(pi, j, pj) = options.choose(rng)?;
        link(&mut desc, &mut free, (i, pi), (j, pj));
    }

    for _ in 0..n {
        if !rng.gen_bool(opts.extra_link_prob) {
            continue;
        }
        let mut options = Vec::new();
        for i in 0..n {
            for (pi, &(_, ki)) in free[i].iter().enumerate() {
                for (j, ports) in free.iter().enumerate().skip(i + 1) {
                    for (pj, &(_, kj)) in ports.iter().enumerate() {
                        if ki != kj {
                            options.push((i, pi, j, pj));
                        }
                    }
                }
            }
        }
        if let Some(&(i, pi, j, pj)) = options.choose(rng) {
            link(&mut desc, &mut free, (i, pi), (j, pj));
        }
    }

    if let Some(cap) = opts.max_pressure_externals {
        loop {
            let free_p: Vec<(usize, usize)> = ports_of(&free, PortKind::P);
            if free_p.len() <= cap {
                break;
            }
            let free_q = ports_of(&free, PortKind::Q);
            let pairs: Vec<_> = free_p.iter().flat_map(|&a| free_q.iter().filter(move |b| b.0 != a.0).map(move |&b| (a, b))).collect();
            let &(a, b) = pairs.choose(rng)?;
            link(&mut desc, &mut free, a, b);
        }
    }

    let mut ext = 0;
    for (ci, ports) in free.iter().enumerate() {
        for (port, kind) in ports {
            ext += 1;
            let inst = desc.components[ci].name.clone();
            let (signal, ekind, sign) = match kind {
                PortKind::P => (format!("p_x{ext}"), ExternalKind::PressureIn, 1.0),
                PortKind::Q => (format!("q_x{ext}"), ExternalKind::FlowIn, if rng.gen_bool(0.5) { 1.0 } else { -1.0 }),
            };
            desc.externals.push(ExternalDecl {
                signal,
                kind: ekind,
                port: PortRef { instance: inst, port: port.clone() },
                sign,
                output: None,
                span: Span::default(),
            });
        }
    }
    let has = |k| desc.externals.iter().any(|e| e.kind == k);
    if desc.externals.is_empty()
        || (opts.require_pressure_external && !has(ExternalKind::PressureIn))
        || (opts.require_flow_external && !has(ExternalKind::FlowIn))
    {
        return None;
    }
    Some(desc)
}

fn ports_of(free: &[Vec<(String, PortKind)>], kind: PortKind) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (ci, ports) in free.iter().enumerate() {
        for (pi, p) in ports.iter().enumerate() {
            if p.1 == kind {
                out.push((ci, pi));
            }
        }
    }
    out
}

fn link(desc: &mut NetworkDescription, free: &mut [Vec<(String, PortKind)>], a: (usize, usize), b: (usize, usize)) {
    let pa = free[a.0].remove(a.1).0;
    let pb = free[b.0].remove(b.1).0;
    desc.links.push(LinkDecl {
        a: PortRef { instance: desc.components[a.0].name.clone(), port: pa },
        b: PortRef { instance: desc.components[b.0].name.clone(), port: pb },
        span: Span::default(),
    });
}

fn prefix(kind: &str) -> &'static str {
    match kind {
        "pipe" => "P",
        "txline" => "T",
        "junction" => "J",
        "valve" => "V",
        _ => "C",
    }
}

fn random_component<R: Rng>(rng: &mut R) -> (&'static str, BTreeMap<String, f64>) {
    let mut p = BTreeMap::new();
    let mut put = |k: &str, v: f64| {
        p.insert(k.to_string(), v);
    };
    let kind = match rng.gen_range(0..10) {
        0..=2 => "pipe",
        3 => "txline",
        4..=6 => "junction",
        7..=8 => "valve",
        _ => "compressor",
    };
    match kind {
        "pipe" => {
            put("X", rng.gen_range(5.0..30.0));
            put("Dm", rng.gen_range(0.15..0.4));
            put("lambda", rng.gen_range(0.005..0.02));
            put("c", rng.gen_range(300.0..450.0));
            put("p_bar", rng.gen_range(1.5e6..5e6));
            put("q_bar", rng.gen_range(1.0..8.0));
        }
        "txline" => {
            put("R", rng.gen_range(0.01..1.0));
            put("L", rng.gen_range(2.0..50.0));
            put("C", rng.gen_range(1e-7..1e-6));
            put("X", rng.gen_range(1.0..20.0));
        }
        "junction" => {
            let q = rng.gen_range(1..=3usize);
            let j = rng.gen_range(0..=2usize);
            put("V", rng.gen_range(0.5..5.0));
            put("c", rng.gen_range(300.0..450.0));
            put("q_ports", q as f64);
            put("p_ports", j as f64);
            for k in 1..=j {
                put(&format!("R{k}"), rng.gen_range(50.0..2e3));
            }
        }
        "valve" => put("R", rng.gen_range(0.0..2e3)),
        _ => {
            put("Pi", rng.gen_range(0.8..1.5));
            put("k_q", rng.gen_range(-1e3..0.0));
        }
    }
    drop(put);
    (kind, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netdsl::{emit, parse};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn draws_are_valid_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let opts = SynthOptions { require_pressure_external: true, ..SynthOptions::default() };
        for _ in 0..20 {
            let d = random_network(&mut rng, &opts).unwrap();
            assert!((3..=8).contains(&d.components.len()));
            assert!(d.externals.iter().any(|e| e.kind == ExternalKind::PressureIn));
            assert_eq!(parse(&emit(&d)).unwrap(), d);
        }
    }
}
