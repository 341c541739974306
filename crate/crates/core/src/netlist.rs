//! Netlist text format.
//!
//! ```text
//! # comment
//! .title Emitter-degenerated input stage
//! .model npn rb=5 ic=8m beta=150 cpi=0.49p cbc=0 t=300
//! Q1 in c e model=npn
//! L1 e 0 0.28n
//! RS c 0 50
//! G1 out 0 in 0 40m        # out+ out- ctrl+ ctrl- gm
//! .port in 0 z0=50
//! ```
//!
//! The first letter of an element label selects its kind (R, C, L, G, V, I,
//! Q). Values accept engineering suffixes. Extensions used when writing
//! expanded circuits: a trailing `noiseless` flag on resistors, `.temp`, and
//! `.noise <label> <n+> <n-> psd=<A^2/Hz>` for shot-noise sources.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::circuit::{Circuit, Component, ComponentKind, HybridPiParams, NoiseSource, Port, DEFAULT_TEMPERATURE};
use crate::error::{Error, Result, SemanticKind};
use crate::units::{format_exact, parse_value};

/// Default current gain for `.model` lines that omit `beta`.
pub const DEFAULT_BETA: f64 = 150.0;

#[derive(Debug, Clone, Copy)]
struct Tok<'a> {
    text: &'a str,
    col: usize,
}

fn tokenize(line: &str) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Tok { text: &line[s..i], col: s + 1 });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Tok { text: &line[s..], col: s + 1 });
    }
    out
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Syntax { line, col, msg: msg.into() }
}

fn semantic(line: usize, col: usize, kind: SemanticKind, msg: impl Into<String>) -> Error {
    Error::Semantic { line, col, kind, msg: msg.into() }
}

fn value_of(tok: Tok<'_>, line: usize) -> Result<f64> {
    parse_number(tok.text).ok_or_else(|| syntax(line, tok.col, format!("bad number '{}'", tok.text)))
}

fn parse_number(s: &str) -> Option<f64> {
    match s.to_ascii_lowercase().as_str() {
        "inf" | "+inf" => Some(f64::INFINITY),
        _ => parse_value(s),
    }
}

fn key_value<'a>(tok: Tok<'a>, line: usize) -> Result<(String, Tok<'a>)> {
    let (k, v) = tok
        .text
        .split_once('=')
        .ok_or_else(|| syntax(line, tok.col, format!("expected key=value, got '{}'", tok.text)))?;
    Ok((
        k.to_ascii_lowercase(),
        Tok { text: v, col: tok.col + k.len() + 1 },
    ))
}

struct ModelDef {
    line: usize,
    col: usize,
    params: HybridPiParams,
}

fn parse_model(toks: &[Tok<'_>], line: usize) -> Result<(String, ModelDef)> {
    let name = toks
        .get(1)
        .ok_or_else(|| syntax(line, toks[0].col, ".model needs a name"))?;
    let mut kv: HashMap<String, (f64, usize)> = HashMap::new();
    for tok in &toks[2..] {
        if !tok.text.contains('=') {
            // device type keyword such as NPN
            continue;
        }
        let (k, v) = key_value(*tok, line)?;
        kv.insert(k, (value_of(v, line)?, v.col));
    }
    let get = |k: &str| kv.get(k).map(|&(v, _)| v);
    let bad = |msg: String| semantic(line, name.col, SemanticKind::InvalidParameter, msg);
    let ic = get("ic").ok_or_else(|| bad(format!("model {} needs ic=", name.text)))?;
    let t = get("t").unwrap_or(DEFAULT_TEMPERATURE);
    let beta = get("beta").unwrap_or(DEFAULT_BETA);
    let rb = get("rb").unwrap_or(0.0);
    let cbc = get("cbc").unwrap_or(0.0);
    let mut params = match (get("cpi"), get("ft")) {
        (Some(cpi), _) => HybridPiParams::from_bias(ic, t, beta, rb, cpi, cbc),
        (None, Some(ft)) => HybridPiParams::from_bias_ft(ic, t, beta, rb, ft, cbc),
        (None, None) => return Err(bad(format!("model {} needs cpi= or ft=", name.text))),
    }
    .map_err(|e| bad(format!("model {}: {e}", name.text)))?;
    params.ro = get("ro");
    params.validate().map_err(|e| bad(e.to_string()))?;
    Ok((
        name.text.to_string(),
        ModelDef { line, col: name.col, params },
    ))
}

/// Parses netlist text into a validated [`Circuit`].
pub fn parse_netlist(text: &str) -> Result<Circuit> {
    let lines: Vec<(usize, Vec<Tok<'_>>)> = text
        .lines()
        .enumerate()
        .map(|(i, raw)| {
            let raw = raw.strip_suffix('\r').unwrap_or(raw);
            let body = raw.split('#').next().unwrap_or("");
            (i + 1, tokenize(body))
        })
        .filter(|(_, t)| !t.is_empty())
        .collect();

    let mut models: HashMap<String, ModelDef> = HashMap::new();
    for (line, toks) in &lines {
        if toks[0].text.eq_ignore_ascii_case(".model") {
            let (name, def) = parse_model(toks, *line)?;
            if models.contains_key(&name) {
                return Err(semantic(*line, def.col, SemanticKind::DuplicateLabel, format!("model {name}")));
            }
            models.insert(name, def);
        }
    }

    let mut c = Circuit::new("");
    let mut positions: HashMap<String, (usize, usize)> = HashMap::new();
    for (line, toks) in &lines {
        let line = *line;
        let head = toks[0];
        if head.text.starts_with('*') {
            continue;
        }
        if let Some(directive) = head.text.strip_prefix('.') {
            match directive.to_ascii_lowercase().as_str() {
                "model" => {}
                "end" => break,
                "title" => {
                    c.title = toks[1..].iter().map(|t| t.text).collect::<Vec<_>>().join(" ");
                }
                "temp" => {
                    let t = toks.get(1).ok_or_else(|| syntax(line, head.col, ".temp needs a value"))?;
                    c.temperature = value_of(*t, line)?;
                    if !(c.temperature > 0.0) {
                        return Err(semantic(line, t.col, SemanticKind::NonPositiveValue, "temperature"));
                    }
                }
                "port" => {
                    if toks.len() < 3 {
                        return Err(syntax(line, head.col, ".port needs two nodes"));
                    }
                    let mut z0 = 50.0;
                    for tok in &toks[3..] {
                        let (k, v) = key_value(*tok, line)?;
                        if k != "z0" {
                            return Err(syntax(line, tok.col, format!("unknown port option '{k}'")));
                        }
                        z0 = value_of(v, line)?;
                        if !(z0 > 0.0) {
                            return Err(semantic(line, v.col, SemanticKind::NonPositiveValue, "z0"));
                        }
                    }
                    let pos = c.node(toks[1].text);
                    let neg = c.node(toks[2].text);
                    if pos == neg {
                        return Err(semantic(line, toks[1].col, SemanticKind::InvalidParameter, "port terminals coincide"));
                    }
                    c.ports.push(Port { pos, neg, z0 });
                }
                "noise" => {
                    if toks.len() != 5 {
                        return Err(syntax(line, head.col, ".noise <label> <n+> <n-> psd=<value>"));
                    }
                    let (k, v) = key_value(toks[4], line)?;
                    if k != "psd" {
                        return Err(syntax(line, toks[4].col, "expected psd="));
                    }
                    let psd = value_of(v, line)?;
                    if !(psd >= 0.0) {
                        return Err(semantic(line, v.col, SemanticKind::NonPositiveValue, "psd"));
                    }
                    let pos = c.node(toks[2].text);
                    let neg = c.node(toks[3].text);
                    c.noise_sources.push(NoiseSource { label: toks[1].text.to_string(), pos, neg, psd });
                }
                other => return Err(syntax(line, head.col, format!("unknown directive .{other}"))),
            }
            continue;
        }

        let label = head.text;
        let letter = label.chars().next().unwrap().to_ascii_uppercase();
        let upper = label.to_ascii_uppercase();
        if let Some(&(pl, _)) = positions.get(&upper) {
            return Err(semantic(
                line,
                head.col,
                SemanticKind::DuplicateLabel,
                format!("{label} already defined on line {pl}"),
            ));
        }
        positions.insert(upper, (line, head.col));

        let args = &toks[1..];
        let need = |n: usize| -> Result<()> {
            if args.len() < n {
                Err(syntax(line, head.col, format!("{label}: expected at least {n} fields")))
            } else {
                Ok(())
            }
        };
        let (kind, nodes): (ComponentKind, &[Tok<'_>]) = match letter {
            'R' | 'C' | 'L' => {
                need(3)?;
                let v = value_of(args[2], line)?;
                if !(v > 0.0 && v.is_finite()) {
                    return Err(semantic(line, args[2].col, SemanticKind::NonPositiveValue, format!("{label} = {}", args[2].text)));
                }
                let mut noisy = true;
                for extra in &args[3..] {
                    if letter == 'R' && extra.text.eq_ignore_ascii_case("noiseless") {
                        noisy = false;
                    } else {
                        return Err(syntax(line, extra.col, format!("unexpected field '{}'", extra.text)));
                    }
                }
                let kind = match letter {
                    'R' => ComponentKind::Resistor { ohms: v, noisy },
                    'C' => ComponentKind::Capacitor { farads: v },
                    _ => ComponentKind::Inductor { henries: v },
                };
                (kind, &args[..2])
            }
            'V' | 'I' => {
                need(3)?;
                let mut rest = &args[2..];
                if rest.len() == 2 && rest[0].text.eq_ignore_ascii_case("ac") {
                    rest = &rest[1..];
                }
                if rest.len() != 1 {
                    return Err(syntax(line, args[2].col, format!("{label}: expected one value")));
                }
                let v = value_of(rest[0], line)?;
                let kind = if letter == 'V' {
                    ComponentKind::VSource { volts: v }
                } else {
                    ComponentKind::ISource { amps: v }
                };
                (kind, &args[..2])
            }
            'G' => {
                need(5)?;
                if args.len() > 5 {
                    return Err(syntax(line, args[5].col, "unexpected field"));
                }
                let gm = value_of(args[4], line)?;
                if !gm.is_finite() {
                    return Err(semantic(line, args[4].col, SemanticKind::InvalidParameter, "transconductance must be finite"));
                }
                (ComponentKind::Vccs { gm }, &args[..4])
            }
            'Q' => {
                need(4)?;
                if args.len() > 4 {
                    return Err(semantic(line, args[4].col, SemanticKind::BadTerminalCount, format!("{label} takes base, collector, emitter and a model")));
                }
                let mtok = args[3];
                let name = match mtok.text.split_once('=') {
                    Some((k, v)) if k.eq_ignore_ascii_case("model") => v,
                    Some(_) => return Err(syntax(line, mtok.col, "expected model=<name>")),
                    None => mtok.text,
                };
                let def = models
                    .get(name)
                    .ok_or_else(|| semantic(line, mtok.col, SemanticKind::UnknownModel, name.to_string()))?;
                let _ = (def.line, def.col);
                (ComponentKind::Bjt { model: name.to_string(), params: def.params }, &args[..3])
            }
            _ => return Err(syntax(line, head.col, format!("unknown element kind '{letter}'"))),
        };
        let terminals = nodes.iter().map(|t| c.node(t.text)).collect();
        c.components.push(Component { label: label.to_string(), kind, terminals });
    }

    c.validate().map_err(|e| locate(e, &c, &positions))?;
    Ok(c)
}

// Attach a line/column to validation errors raised after parsing.
fn locate(e: Error, c: &Circuit, positions: &HashMap<String, (usize, usize)>) -> Error {
    match e {
        Error::Semantic { kind, msg, .. } => {
            let hit = c.components.iter().find(|comp| {
                kind == SemanticKind::DanglingNode
                    && comp.terminals.iter().any(|&t| msg.contains(c.node_name(t)) && !t.is_ground())
                    || msg.starts_with(&comp.label)
            });
            let (line, col) = hit
                .and_then(|comp| positions.get(&comp.label.to_ascii_uppercase()).copied())
                .unwrap_or((0, 0));
            Error::Semantic { line, col, kind, msg }
        }
        other => other,
    }
}

/// Writes a circuit in the netlist format accepted by [`parse_netlist`].
/// Values are printed in shortest round-trip form.
pub fn write_netlist(c: &Circuit) -> String {
    let mut s = String::new();
    if !c.title.is_empty() {
        let _ = writeln!(s, ".title {}", c.title.replace(['\n', '\r', '#'], " "));
    }
    if c.temperature != DEFAULT_TEMPERATURE {
        let _ = writeln!(s, ".temp {}", format_exact(c.temperature));
    }

    // model names must be unique per parameter set
    let mut models: Vec<(String, HybridPiParams)> = Vec::new();
    let mut names = Vec::with_capacity(c.components.len());
    for comp in &c.components {
        if let ComponentKind::Bjt { model, params } = &comp.kind {
            let found = models.iter().find(|(n, p)| p == params && (n == model || n.starts_with(&format!("{model}_"))));
            let name = match found {
                Some((n, _)) => n.clone(),
                None => {
                    let mut n = model.clone();
                    let mut k = 2;
                    while models.iter().any(|(m, _)| *m == n) {
                        n = format!("{model}_{k}");
                        k += 1;
                    }
                    models.push((n.clone(), *params));
                    n
                }
            };
            names.push(Some(name));
        } else {
            names.push(None);
        }
    }
    for (name, p) in &models {
        let _ = write!(
            s,
            ".model {name} rb={} ic={} beta={} cpi={} cbc={} t={}",
            format_exact(p.rb),
            format_exact(p.ic),
            fmt_num(p.beta),
            format_exact(p.cpi),
            format_exact(p.cbc),
            format_exact(p.t)
        );
        if let Some(ro) = p.ro {
            let _ = write!(s, " ro={}", format_exact(ro));
        }
        s.push('\n');
    }

    for (comp, model) in c.components.iter().zip(&names) {
        let nodes: Vec<&str> = comp.terminals.iter().map(|&t| c.node_name(t)).collect();
        let _ = write!(s, "{} {}", comp.label, nodes.join(" "));
        match &comp.kind {
            ComponentKind::Bjt { .. } => {
                let _ = write!(s, " model={}", model.as_deref().unwrap_or(""));
            }
            ComponentKind::Resistor { ohms, noisy } => {
                let _ = write!(s, " {}", format_exact(*ohms));
                if !noisy {
                    s.push_str(" noiseless");
                }
            }
            other => {
                let _ = write!(s, " {}", format_exact(other.value().unwrap_or(0.0)));
            }
        }
        s.push('\n');
    }
    for p in &c.ports {
        let _ = writeln!(
            s,
            ".port {} {} z0={}",
            c.node_name(p.pos),
            c.node_name(p.neg),
            format_exact(p.z0)
        );
    }
    for n in &c.noise_sources {
        let _ = writeln!(
            s,
            ".noise {} {} {} psd={}",
            n.label,
            c.node_name(n.pos),
            c.node_name(n.neg),
            format_exact(n.psd)
        );
    }
    s
}

fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format_exact(v)
    }
}
