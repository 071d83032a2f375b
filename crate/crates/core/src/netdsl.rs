//! Line-oriented network description language.
//!
//! ```text
//! # comment
//! component pipe P1 { X=10 Dm=0.2 lambda=0.02 c=350 p_bar=2e6 q_bar=5 }
//! link P1.right J1.p1
//! external flow_in q_f J1.q2 sign=+1 output=p_dstl
//! external pressure_in p_s P1.left
//! ```

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::components::{build_component, Component, ExternalKind, PortKind, KINDS};
use crate::lti::SignalKind;

/// 1-based source position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PortRef {
    pub instance: String,
    pub port: String,
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.instance, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDecl {
    pub name: String,
    pub kind: String,
    pub params: BTreeMap<String, f64>,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkDecl {
    pub a: PortRef,
    pub b: PortRef,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalDecl {
    pub signal: String,
    pub kind: ExternalKind,
    pub port: PortRef,
    /// `+1` for mass entering the network.
    pub sign: f64,
    /// Name of the paired external output; defaults to `<signal>_out`.
    pub output: Option<String>,
    #[serde(skip)]
    pub span: Span,
}

impl ExternalDecl {
    pub fn output_name(&self) -> String {
        self.output.clone().unwrap_or_else(|| format!("{}_out", self.signal))
    }
}

/// Parsed network. Equality ignores source positions.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NetworkDescription {
    pub components: Vec<ComponentDecl>,
    pub links: Vec<LinkDecl>,
    pub externals: Vec<ExternalDecl>,
}

impl PartialEq for NetworkDescription {
    fn eq(&self, other: &Self) -> bool {
        fn strip<T: Clone>(v: &[T], f: impl Fn(&mut T)) -> Vec<T> {
            v.iter().cloned().map(|mut x| {
                f(&mut x);
                x
            }).collect()
        }
        strip(&self.components, |c| c.span = Span::default()) == strip(&other.components, |c| c.span = Span::default())
            && strip(&self.links, |l| l.span = Span::default()) == strip(&other.links, |l| l.span = Span::default())
            && strip(&self.externals, |e| e.span = Span::default())
                == strip(&other.externals, |e| e.span = Span::default())
    }
}

impl NetworkDescription {
    pub fn component_index(&self, name: &str) -> Option<usize> {
        self.components.iter().position(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    Syntax,
    UnknownComponentKind,
    DuplicateName,
    InvalidParameter,
    UnknownInstance,
    UnknownPort,
    DuplicatePortUse,
    /// Links join a p-port to a q-port; externals bind matching port kinds.
    RuleI,
    /// Pressure signals pair with pressure signals, flows with flows.
    RuleII,
    /// Binding one signal of a port binds its partner.
    RuleIII,
    /// Every port is bound.
    RuleIV,
    /// A delay-free cycle through direct feedthrough.
    AlgebraicLoop,
    CountMismatch,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::Syntax => "syntax",
            Rule::UnknownComponentKind => "unknown-kind",
            Rule::DuplicateName => "duplicate-name",
            Rule::InvalidParameter => "invalid-parameter",
            Rule::UnknownInstance => "unknown-instance",
            Rule::UnknownPort => "unknown-port",
            Rule::DuplicatePortUse => "duplicate-port-use",
            Rule::RuleI => "rule-I",
            Rule::RuleII => "rule-II",
            Rule::RuleIII => "rule-III",
            Rule::RuleIV => "rule-IV",
            Rule::AlgebraicLoop => "algebraic-loop",
            Rule::CountMismatch => "count-mismatch",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    pub line: usize,
    pub column: usize,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: [{}] {}", self.line, self.column, self.rule, self.message)
    }
}

fn diag(span: Span, rule: Rule, message: impl Into<String>) -> ParseDiagnostic {
    ParseDiagnostic { line: span.line, column: span.column, rule, message: message.into() }
}

fn sorted(mut d: Vec<ParseDiagnostic>) -> Vec<ParseDiagnostic> {
    d.sort_by(|a, b| (a.line, a.column, a.rule).cmp(&(b.line, b.column, b.rule)));
    d
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Word(&'a str),
    Open,
    Close,
    Eq,
}

fn tokenize(line: &str, lineno: usize) -> Vec<(Tok<'_>, Span)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let col = |byte: usize| line[..byte].chars().count() + 1;
    for (i, ch) in line.char_indices() {
        let special = matches!(ch, '{' | '}' | '=');
        if ch.is_whitespace() || special {
            if let Some(s) = start.take() {
                out.push((Tok::Word(&line[s..i]), Span { line: lineno, column: col(s) }));
            }
            if special {
                let t = match ch {
                    '{' => Tok::Open,
                    '}' => Tok::Close,
                    _ => Tok::Eq,
                };
                out.push((t, Span { line: lineno, column: col(i) }));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((Tok::Word(&line[s..]), Span { line: lineno, column: col(s) }));
    }
    out
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_portref(word: &str, span: Span) -> Result<PortRef, ParseDiagnostic> {
    match word.split_once('.') {
        Some((inst, port)) if is_ident(inst) && is_ident(port) => {
            Ok(PortRef { instance: inst.to_string(), port: port.to_string() })
        }
        _ => Err(diag(span, Rule::Syntax, format!("expected <instance>.<port>, found `{word}`"))),
    }
}

/// `key=value` pairs from a token slice.
fn parse_pairs<'a>(toks: &[(Tok<'a>, Span)]) -> Result<Vec<(&'a str, &'a str, Span, Span)>, ParseDiagnostic> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        match (&toks[i], toks.get(i + 1), toks.get(i + 2)) {
            ((Tok::Word(k), ks), Some((Tok::Eq, _)), Some((Tok::Word(v), vs))) => {
                out.push((*k, *v, *ks, *vs));
                i += 3;
            }
            ((_, s), _, _) => {
                return Err(diag(*s, Rule::Syntax, "expected key=value"));
            }
        }
    }
    Ok(out)
}

/// Parses a network description, collecting every diagnostic.
pub fn parse(source: &str) -> Result<NetworkDescription, Vec<ParseDiagnostic>> {
    let mut desc = NetworkDescription::default();
    let mut diags = Vec::new();
    let mut names: BTreeMap<String, Span> = BTreeMap::new();
    let mut signals: BTreeMap<String, Span> = BTreeMap::new();

    for (idx, raw) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let toks = tokenize(line, lineno);
        let Some((Tok::Word(head), head_span)) = toks.first().cloned() else {
            if let Some((_, s)) = toks.first() {
                diags.push(diag(*s, Rule::Syntax, "expected a statement keyword"));
            }
            continue;
        };
        match head {
            "component" => match parse_component(&toks, head_span) {
                Ok(decl) => {
                    if !KINDS.contains(&decl.kind.as_str()) {
                        diags.push(diag(toks[1].1, Rule::UnknownComponentKind, format!("unknown component kind `{}`", decl.kind)));
                    }
                    if let Some(prev) = names.get(&decl.name) {
                        diags.push(diag(toks[2].1, Rule::DuplicateName, format!("instance `{}` already declared on line {}", decl.name, prev.line)));
                    } else {
                        names.insert(decl.name.clone(), toks[2].1);
                    }
                    desc.components.push(decl);
                }
                Err(d) => diags.push(d),
            },
            "link" => {
                if toks.len() != 3 {
                    diags.push(diag(head_span, Rule::Syntax, "expected `link <instance>.<port> <instance>.<port>`"));
                    continue;
                }
                let refs: Vec<_> = toks[1..].iter().map(|(t, s)| match t {
                    Tok::Word(w) => parse_portref(w, *s),
                    _ => Err(diag(*s, Rule::Syntax, "expected a port reference")),
                }).collect();
                match (refs[0].clone(), refs[1].clone()) {
                    (Ok(a), Ok(b)) => desc.links.push(LinkDecl { a, b, span: head_span }),
                    (a, b) => diags.extend(a.err().into_iter().chain(b.err())),
                }
            }
            "external" => match parse_external(&toks, head_span) {
                Ok(decl) => {
                    for (name, span) in [(decl.signal.clone(), toks[2].1), (decl.output_name(), toks[2].1)] {
                        if let Some(prev) = signals.get(&name) {
                            diags.push(diag(span, Rule::DuplicateName, format!("signal `{name}` already declared on line {}", prev.line)));
                        } else {
                            signals.insert(name, span);
                        }
                    }
                    desc.externals.push(decl);
                }
                Err(d) => diags.push(d),
            },
            other => diags.push(diag(head_span, Rule::Syntax, format!("unknown statement `{other}`"))),
        }
    }

    // Instance names and port uniqueness are resolvable without a registry.
    let mut uses: BTreeMap<PortRef, (Span, String)> = BTreeMap::new();
    let mut check_ref = |r: &PortRef, partner: String, span: Span, diags: &mut Vec<ParseDiagnostic>| {
        if !names.contains_key(&r.instance) {
            diags.push(diag(span, Rule::UnknownInstance, format!("no component named `{}`", r.instance)));
        }
        match uses.get(r) {
            None => {
                uses.insert(r.clone(), (span, partner));
            }
            Some((prev, p)) if *p == partner => {
                diags.push(diag(span, Rule::DuplicatePortUse, format!("port `{r}` already bound on line {}", prev.line)));
            }
            Some((prev, p)) => diags.push(diag(span, Rule::RuleIII, format!(
                "port `{r}` is bound to `{p}` on line {}; its pressure and flow signals must share one partner",
                prev.line
            ))),
        }
    };
    for l in &desc.links {
        check_ref(&l.a, l.b.to_string(), l.span, &mut diags);
        check_ref(&l.b, l.a.to_string(), l.span, &mut diags);
    }
    for e in &desc.externals {
        check_ref(&e.port, format!("external {}", e.signal), e.span, &mut diags);
    }

    if diags.is_empty() {
        Ok(desc)
    } else {
        Err(sorted(diags))
    }
}

fn parse_component(toks: &[(Tok<'_>, Span)], head: Span) -> Result<ComponentDecl, ParseDiagnostic> {
    let usage = "expected `component <kind> <name> { key=value ... }`";
    let (kind, name) = match (toks.get(1), toks.get(2)) {
        (Some((Tok::Word(k), _)), Some((Tok::Word(n), ns))) => {
            if !is_ident(n) {
                return Err(diag(*ns, Rule::Syntax, format!("invalid instance name `{n}`")));
            }
            (*k, *n)
        }
        _ => return Err(diag(head, Rule::Syntax, usage)),
    };
    match toks.get(3) {
        Some((Tok::Open, _)) => {}
        Some((_, s)) => return Err(diag(*s, Rule::Syntax, "expected `{`")),
        None => return Err(diag(head, Rule::Syntax, usage)),
    }
    let close = match toks.iter().rposition(|(t, _)| *t == Tok::Close) {
        Some(c) if c == toks.len() - 1 => c,
        Some(c) => return Err(diag(toks[c + 1].1, Rule::Syntax, "unexpected text after `}`")),
        None => return Err(diag(toks[toks.len() - 1].1, Rule::Syntax, "missing `}`")),
    };
    let mut params = BTreeMap::new();
    for (k, v, ks, vs) in parse_pairs(&toks[4..close])? {
        let value: f64 = v.parse().map_err(|_| diag(vs, Rule::Syntax, format!("`{v}` is not a number")))?;
        if params.insert(k.to_string(), value).is_some() {
            return Err(diag(ks, Rule::DuplicateName, format!("parameter `{k}` given twice")));
        }
    }
    Ok(ComponentDecl { name: name.to_string(), kind: kind.to_string(), params, span: head })
}

fn parse_external(toks: &[(Tok<'_>, Span)], head: Span) -> Result<ExternalDecl, ParseDiagnostic> {
    let usage = "expected `external <pressure_in|flow_in> <signal> <instance>.<port> [sign=±1] [output=<name>]`";
    let (kind_word, ks) = match toks.get(1) {
        Some((Tok::Word(w), s)) => (*w, *s),
        _ => return Err(diag(head, Rule::Syntax, usage)),
    };
    let kind = match kind_word {
        "pressure_in" => ExternalKind::PressureIn,
        "flow_in" => ExternalKind::FlowIn,
        other => return Err(diag(ks, Rule::Syntax, format!("unknown external kind `{other}`"))),
    };
    let signal = match toks.get(2) {
        Some((Tok::Word(w), s)) => {
            if !is_ident(w) {
                return Err(diag(*s, Rule::Syntax, format!("invalid signal name `{w}`")));
            }
            w.to_string()
        }
        _ => return Err(diag(head, Rule::Syntax, usage)),
    };
    let port = match toks.get(3) {
        Some((Tok::Word(w), s)) => parse_portref(w, *s)?,
        _ => return Err(diag(head, Rule::Syntax, usage)),
    };
    let mut sign = 1.0;
    let mut output = None;
    for (k, v, kspan, vspan) in parse_pairs(&toks[4..])? {
        match k {
            "sign" => {
                sign = match v {
                    "1" | "+1" => 1.0,
                    "-1" => -1.0,
                    _ => return Err(diag(vspan, Rule::Syntax, "sign must be +1 or -1")),
                };
                if kind == ExternalKind::PressureIn && sign < 0.0 {
                    return Err(diag(vspan, Rule::Syntax, "pressure externals take no sign"));
                }
            }
            "output" => {
                if !is_ident(v) {
                    return Err(diag(vspan, Rule::Syntax, format!("invalid output name `{v}`")));
                }
                output = Some(v.to_string());
            }
            other => return Err(diag(kspan, Rule::Syntax, format!("unknown external option `{other}`"))),
        }
    }
    Ok(ExternalDecl { signal, kind, port, sign, output, span: head })
}

/// Canonical text form; `parse(&emit(d)) == Ok(d)`.
pub fn emit(desc: &NetworkDescription) -> String {
    let mut out = String::new();
    for c in &desc.components {
        let _ = write!(out, "component {} {} {{", c.kind, c.name);
        for (k, v) in &c.params {
            let _ = write!(out, " {k}={v:?}");
        }
        out.push_str(" }\n");
    }
    for l in &desc.links {
        let _ = writeln!(out, "link {} {}", l.a, l.b);
    }
    for e in &desc.externals {
        let kind = match e.kind {
            ExternalKind::PressureIn => "pressure_in",
            ExternalKind::FlowIn => "flow_in",
        };
        let _ = write!(out, "external {kind} {} {}", e.signal, e.port);
        if e.sign < 0.0 {
            out.push_str(" sign=-1");
        }
        if let Some(o) = &e.output {
            let _ = write!(out, " output={o}");
        }
        out.push('\n');
    }
    out
}

/// Instantiated components, index-aligned with the description.
#[derive(Debug, Clone)]
pub struct PortRegistry {
    pub components: Vec<Component>,
}

impl PortRegistry {
    pub fn build(desc: &NetworkDescription) -> Result<Self, Vec<ParseDiagnostic>> {
        let mut comps = Vec::new();
        let mut diags = Vec::new();
        for c in &desc.components {
            match build_component(&c.kind, &c.params) {
                Ok(comp) => comps.push(comp),
                Err(e) => diags.push(diag(c.span, Rule::InvalidParameter, format!("{}: {e}", c.name))),
            }
        }
        if diags.is_empty() {
            Ok(PortRegistry { components: comps })
        } else {
            Err(sorted(diags))
        }
    }
}

/// How one port of the network is bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Binding {
    Link { peer_comp: usize, peer_port: usize },
    External(usize),
}

/// Resolves every port binding. Indices: (component, port position).
pub(crate) fn resolve_bindings(
    desc: &NetworkDescription,
    reg: &PortRegistry,
) -> Result<BTreeMap<(usize, usize), Binding>, Vec<ParseDiagnostic>> {
    let mut diags = Vec::new();
    let mut find = |r: &PortRef, span: Span| -> Option<(usize, usize)> {
        let Some(ci) = desc.component_index(&r.instance) else {
            diags.push(diag(span, Rule::UnknownInstance, format!("no component named `{}`", r.instance)));
            return None;
        };
        match reg.components[ci].ports.iter().position(|p| p.port_id == r.port) {
            Some(pi) => Some((ci, pi)),
            None => {
                let ports: Vec<&str> = reg.components[ci].ports.iter().map(|p| p.port_id.as_str()).collect();
                diags.push(diag(span, Rule::UnknownPort, format!(
                    "`{}` ({}) has no port `{}`; ports are {}",
                    r.instance, desc.components[ci].kind, r.port, ports.join(", ")
                )));
                None
            }
        }
    };
    let mut map = BTreeMap::new();
    let mut bind = |key: (usize, usize), b: Binding, span: Span, diags_out: &mut Vec<ParseDiagnostic>| {
        match map.insert(key, b) {
            None => {}
            Some(old) if old == b => diags_out.push(diag(span, Rule::DuplicatePortUse, "port bound more than once")),
            Some(_) => diags_out.push(diag(
                span,
                Rule::RuleIII,
                "port already bound elsewhere; its pressure and flow signals would have different partners",
            )),
        }
    };
    let mut pending = Vec::new();
    for l in &desc.links {
        let (a, b) = (find(&l.a, l.span), find(&l.b, l.span));
        if let (Some(a), Some(b)) = (a, b) {
            pending.push((a, Binding::Link { peer_comp: b.0, peer_port: b.1 }, l.span));
            pending.push((b, Binding::Link { peer_comp: a.0, peer_port: a.1 }, l.span));
        }
    }
    for (ei, e) in desc.externals.iter().enumerate() {
        if let Some(p) = find(&e.port, e.span) {
            pending.push((p, Binding::External(ei), e.span));
        }
    }
    let mut dup = Vec::new();
    for (k, b, s) in pending {
        bind(k, b, s, &mut dup);
    }
    diags.extend(dup);
    if diags.is_empty() {
        Ok(map)
    } else {
        Err(sorted(diags))
    }
}

/// Checks the interconnection rules. Returns the instantiated registry on success.
pub fn validate_rules(desc: &NetworkDescription) -> Result<PortRegistry, Vec<ParseDiagnostic>> {
    let reg = PortRegistry::build(desc)?;
    let bindings = resolve_bindings(desc, &reg)?;
    let mut diags = Vec::new();

    for l in &desc.links {
        let a = port_of(desc, &reg, &l.a);
        let b = port_of(desc, &reg, &l.b);
        if a.kind == b.kind {
            let k = if a.kind == PortKind::P { "p-port" } else { "q-port" };
            diags.push(diag(l.span, Rule::RuleI, format!("link joins two {k}s `{}` and `{}`", l.a, l.b)));
            continue;
        }
        // each port output drives the other port's input
        if a.output_signal.kind != b.input_signal.kind || b.output_signal.kind != a.input_signal.kind {
            diags.push(diag(l.span, Rule::RuleII, format!("signal types of `{}` and `{}` do not pair", l.a, l.b)));
        }
    }
    for e in &desc.externals {
        let p = port_of(desc, &reg, &e.port);
        let (want, what) = match e.kind {
            ExternalKind::PressureIn => (PortKind::P, "pressure_in binds a p-port"),
            ExternalKind::FlowIn => (PortKind::Q, "flow_in binds a q-port"),
        };
        if p.kind != want {
            diags.push(diag(e.span, Rule::RuleI, format!("`{}`: {what}", e.port)));
        }
        let expect = if e.kind == ExternalKind::PressureIn { SignalKind::Pressure } else { SignalKind::Flow };
        if p.input_signal.kind != expect {
            diags.push(diag(e.span, Rule::RuleII, format!("`{}` input is not a {:?} signal", e.port, expect)));
        }
    }
    for (ci, comp) in reg.components.iter().enumerate() {
        for (pi, port) in comp.ports.iter().enumerate() {
            if !bindings.contains_key(&(ci, pi)) {
                diags.push(diag(desc.components[ci].span, Rule::RuleIV, format!(
                    "port `{}.{}` is not connected",
                    desc.components[ci].name, port.port_id
                )));
            }
        }
    }
    if diags.is_empty() {
        diags.extend(feedthrough_cycles(desc, &reg, &bindings));
    }
    if diags.is_empty() {
        Ok(reg)
    } else {
        Err(sorted(diags))
    }
}

fn port_of<'r>(desc: &NetworkDescription, reg: &'r PortRegistry, r: &PortRef) -> &'r crate::components::PortSpec {
    let ci = desc.component_index(&r.instance).expect("resolved");
    reg.components[ci].port(&r.port).expect("resolved")
}

/// Structural algebraic-loop detection. Nodes are component inputs; an edge
/// runs from input `i` of X to input `j` of Y when X feeds `i` through to an
/// output routed by a link into `j`.
fn feedthrough_cycles(
    desc: &NetworkDescription,
    reg: &PortRegistry,
    bindings: &BTreeMap<(usize, usize), Binding>,
) -> Vec<ParseDiagnostic> {
    let mut node_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (ci, comp) in reg.components.iter().enumerate() {
        for i in 0..comp.system.n_inputs() {
            let id = node_of.len();
            node_of.insert((ci, i), id);
        }
    }
    let n = node_of.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut via_link: Vec<Vec<Option<usize>>> = vec![Vec::new(); n];
    let link_index = |ci: usize, pi: usize| -> Option<usize> {
        let r = PortRef { instance: desc.components[ci].name.clone(), port: reg.components[ci].ports[pi].port_id.clone() };
        desc.links.iter().position(|l| l.a == r || l.b == r)
    };
    for (ci, comp) in reg.components.iter().enumerate() {
        for &(inp, out) in &comp.feedthrough {
            let Some(pi) = comp.ports.iter().position(|p| p.output_index == out) else { continue };
            if let Some(Binding::Link { peer_comp, peer_port }) = bindings.get(&(ci, pi)) {
                let target_input = reg.components[*peer_comp].ports[*peer_port].input_index;
                let from = node_of[&(ci, inp)];
                adj[from].push(node_of[&(*peer_comp, target_input)]);
                via_link[from].push(link_index(ci, pi));
            }
        }
    }
    // iterative DFS with colours
    let mut colour = vec![0u8; n];
    let mut reported: BTreeSet<usize> = BTreeSet::new();
    let mut diags = Vec::new();
    for root in 0..n {
        if colour[root] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        colour[root] = 1;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if *next < adj[v].len() {
                let w = adj[v][*next];
                let link = via_link[v][*next];
                *next += 1;
                if colour[w] == 1 {
                    if let Some(li) = link {
                        if reported.insert(li) {
                            let l = &desc.links[li];
                            diags.push(diag(l.span, Rule::AlgebraicLoop, format!(
                                "link `{}` - `{}` closes a cycle of direct feedthrough",
                                l.a, l.b
                            )));
                        }
                    }
                } else if colour[w] == 0 {
                    colour[w] = 1;
                    stack.push((w, 0));
                }
            } else {
                colour[v] = 2;
                stack.pop();
            }
        }
    }
    diags
}

/// Signal counts of the external/internal partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PortCounts {
    pub n_up: usize,
    pub n_uq: usize,
    pub n_zp: usize,
    pub n_zq: usize,
    pub n_yp_int: usize,
    pub n_yq_int: usize,
    pub n_wp_int: usize,
    pub n_wq_int: usize,
}

/// Counts signals by type and scope and checks the identities
/// `n_up = n_zq`, `n_zp = n_uq`, `n_wp~ = n_yp~`, `n_wq~ = n_yq~`.
pub fn count_check(desc: &NetworkDescription, reg: &PortRegistry) -> Result<PortCounts, Vec<ParseDiagnostic>> {
    let bindings = resolve_bindings(desc, reg)?;
    let mut c = PortCounts::default();
    for (&(ci, pi), b) in &bindings {
        let port = &reg.components[ci].ports[pi];
        let (inp, out) = (port.input_signal.kind, port.output_signal.kind);
        match b {
            Binding::External(_) => {
                match inp {
                    SignalKind::Pressure => c.n_up += 1,
                    SignalKind::Flow => c.n_uq += 1,
                }
                match out {
                    SignalKind::Pressure => c.n_zp += 1,
                    SignalKind::Flow => c.n_zq += 1,
                }
            }
            Binding::Link { .. } => {
                match inp {
                    SignalKind::Pressure => c.n_wp_int += 1,
                    SignalKind::Flow => c.n_wq_int += 1,
                }
                match out {
                    SignalKind::Pressure => c.n_yp_int += 1,
                    SignalKind::Flow => c.n_yq_int += 1,
                }
            }
        }
    }
    let mut diags = Vec::new();
    let span = desc.components.first().map(|c| c.span).unwrap_or_default();
    for (ok, what) in [
        (c.n_up == c.n_zq, "n_up != n_zq"),
        (c.n_zp == c.n_uq, "n_zp != n_uq"),
        (c.n_wp_int == c.n_yp_int, "internal pressure input/output counts differ"),
        (c.n_wq_int == c.n_yq_int, "internal flow input/output counts differ"),
    ] {
        if !ok {
            diags.push(diag(span, Rule::CountMismatch, what));
        }
    }
    if diags.is_empty() {
        Ok(c)
    } else {
        Err(diags)
    }
}

/// Parse, rule validation and count identities, stopping at the first
/// phase that reports diagnostics.
pub fn check_source(source: &str) -> Result<(NetworkDescription, PortCounts), Vec<ParseDiagnostic>> {
    let desc = parse(source)?;
    let reg = validate_rules(&desc)?;
    let counts = count_check(&desc, &reg)?;
    Ok((desc, counts))
}

#[cfg(test)]
mod tests {
    use super::*;

    const PIPE: &str = "component pipe P1 { X=10 Dm=0.2 lambda=0.02 c=350 p_bar=2e6 q_bar=5 }";

    #[test]
    fn smallest_file() {
        let src = format!("{PIPE}\nexternal pressure_in p_in P1.left\nexternal flow_in q_out P1.right sign=-1\n");
        let d = parse(&src).unwrap();
        assert_eq!((d.components.len(), d.links.len(), d.externals.len()), (1, 0, 2));
        let reg = validate_rules(&d).unwrap();
        let c = count_check(&d, &reg).unwrap();
        assert_eq!((c.n_up, c.n_zq, c.n_uq, c.n_zp), (1, 1, 1, 1));
    }

    #[test]
    fn self_link_is_duplicate_use() {
        let src = format!("{PIPE}\nlink P1.right P1.right\n");
        let d = parse(&src).unwrap_err();
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].line, d[0].rule), (2, Rule::DuplicatePortUse));
    }

    #[test]
    fn collects_all_errors_in_order() {
        let src = "component widget W { }\nlonk a b\ncomponent valve V { R=1 }\ncomponent valve V { R=2 }\n";
        let d = parse(src).unwrap_err();
        let rules: Vec<_> = d.iter().map(|x| (x.line, x.rule)).collect();
        assert_eq!(rules, vec![(1, Rule::UnknownComponentKind), (2, Rule::Syntax), (4, Rule::DuplicateName)]);
        assert_eq!(d[0].column, 11);
    }

    #[test]
    fn round_trip() {
        let src = format!("{PIPE}\n# tap\nexternal pressure_in p_in   P1.left\nexternal flow_in q_out P1.right sign=-1 output=p_end\n");
        let d = parse(&src).unwrap();
        assert_eq!(parse(&emit(&d)).unwrap(), d);
    }

    #[test]
    fn valve_pair_loop_detected() {
        let src = "component valve V1 { R=1 }\ncomponent valve V2 { R=2 }\nlink V1.right V2.left\nlink V2.right V1.left\n";
        let d = parse(src).unwrap();
        let e = validate_rules(&d).unwrap_err();
        assert!(e.iter().any(|x| x.rule == Rule::AlgebraicLoop), "{e:?}");
    }
}
