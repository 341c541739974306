//! Linear small-signal circuit model.
//!
//! A [`Circuit`] is a list of labelled components over named nodes plus an
//! ordered list of ports. Node 0 is ground and always exists. BJT instances
//! carry a [`HybridPiParams`] set and are replaced by their linear
//! equivalent with [`expand_devices`] before any matrix analysis.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SemanticKind};

/// Elementary charge, C.
pub const Q_ELECTRON: f64 = 1.602_176_634e-19;
/// Boltzmann constant, J/K.
pub const K_BOLTZMANN: f64 = 1.380_649e-23;
/// Temperature used when none is given.
pub const DEFAULT_TEMPERATURE: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const GROUND: NodeId = NodeId(0);

    pub fn is_ground(self) -> bool {
        self.0 == 0
    }
}

/// Small-signal hybrid-pi parameter set of a bipolar transistor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridPiParams {
    /// Base series resistance, ohms.
    pub rb: f64,
    /// Transconductance, siemens.
    pub gm: f64,
    /// Current gain. `f64::INFINITY` removes r_pi and base shot noise.
    pub beta: f64,
    /// Base-emitter capacitance, farads.
    pub cpi: f64,
    /// Base-collector capacitance, farads.
    pub cbc: f64,
    /// Bias collector current, amps.
    pub ic: f64,
    /// Temperature, kelvin.
    pub t: f64,
    /// Optional output resistance; `None` is infinite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ro: Option<f64>,
}

impl HybridPiParams {
    /// Builds a parameter set from the bias point; `gm` follows from `ic` and `t`.
    pub fn from_bias(ic: f64, t: f64, beta: f64, rb: f64, cpi: f64, cbc: f64) -> Result<Self> {
        let p = HybridPiParams {
            rb,
            gm: gm_from_bias(ic, t)?,
            beta,
            cpi,
            cbc,
            ic,
            t,
            ro: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// Like [`from_bias`](Self::from_bias) but sizes `cpi` for a transit
    /// frequency `ft` in hertz.
    pub fn from_bias_ft(ic: f64, t: f64, beta: f64, rb: f64, ft: f64, cbc: f64) -> Result<Self> {
        let gm = gm_from_bias(ic, t)?;
        let cpi = cpi_from_ft(gm, 2.0 * std::f64::consts::PI * ft, cbc)?;
        Self::from_bias(ic, t, beta, rb, cpi, cbc)
    }

    /// Unity-current-gain angular frequency g_m / (C_pi + C_bc).
    pub fn omega_t(&self) -> f64 {
        self.gm / (self.cpi + self.cbc)
    }

    /// Base bias current I_C / beta.
    pub fn ib(&self) -> f64 {
        self.ic / self.beta
    }

    /// r_pi = beta / g_m (infinite when beta is).
    pub fn rpi(&self) -> f64 {
        self.beta / self.gm
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Domain(m.to_string()));
        if !(self.rb >= 0.0 && self.rb.is_finite()) {
            return bad("r_b must be finite and non-negative");
        }
        if !(self.gm > 0.0 && self.gm.is_finite()) {
            return bad("g_m must be positive and finite");
        }
        if !(self.beta > 1.0) {
            return bad("beta must exceed 1");
        }
        if !(self.cpi >= 0.0 && self.cbc >= 0.0) {
            return bad("C_pi and C_bc must be non-negative");
        }
        let wt = self.omega_t();
        if !(wt > 0.0 && wt.is_finite()) {
            return bad("omega_T = g_m/(C_pi + C_bc) must be positive and finite");
        }
        if !(self.ic >= 0.0 && self.t > 0.0) {
            return bad("I_C must be non-negative and T positive");
        }
        if let Some(ro) = self.ro {
            if !(ro > 0.0) {
                return bad("r_o must be positive");
            }
        }
        Ok(())
    }
}

/// g_m = q I_C / (k T).
pub fn gm_from_bias(ic: f64, t: f64) -> Result<f64> {
    if !(ic > 0.0 && ic.is_finite()) {
        return Err(Error::Domain(format!("I_C must be positive, got {ic}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("T must be positive, got {t}")));
    }
    Ok(Q_ELECTRON * ic / (K_BOLTZMANN * t))
}

/// C_pi = g_m / omega_T - C_bc.
pub fn cpi_from_ft(gm: f64, omega_t: f64, cbc: f64) -> Result<f64> {
    if !(gm > 0.0 && omega_t > 0.0 && cbc >= 0.0) {
        return Err(Error::Domain(
            "g_m and omega_T must be positive, C_bc non-negative".into(),
        ));
    }
    let cpi = gm / omega_t - cbc;
    if !(cpi > 0.0) {
        return Err(Error::Domain(format!(
            "C_bc = {cbc:e} F leaves no room for C_pi at omega_T = {omega_t:e} rad/s"
        )));
    }
    Ok(cpi)
}

/// omega_T = g_m / (C_pi + C_bc).
pub fn omega_t(gm: f64, cpi: f64, cbc: f64) -> f64 {
    gm / (cpi + cbc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ComponentKind {
    /// `noisy = false` marks device-internal resistors whose noise is
    /// modelled elsewhere (r_pi carries base shot noise, not thermal noise).
    Resistor { ohms: f64, noisy: bool },
    Capacitor { farads: f64 },
    Inductor { henries: f64 },
    /// Terminals: out+, out-, ctrl+, ctrl-. Current gm*v(ctrl) flows out+ -> out- through the source.
    Vccs { gm: f64 },
    /// AC voltage source, terminals n+, n-.
    VSource { volts: f64 },
    /// AC current source; current flows n+ -> n- through the source.
    ISource { amps: f64 },
    /// Terminals: base, collector, emitter.
    Bjt { model: String, params: HybridPiParams },
}

impl ComponentKind {
    pub fn terminal_count(&self) -> usize {
        match self {
            ComponentKind::Vccs { .. } => 4,
            ComponentKind::Bjt { .. } => 3,
            _ => 2,
        }
    }

    pub fn letter(&self) -> char {
        match self {
            ComponentKind::Resistor { .. } => 'R',
            ComponentKind::Capacitor { .. } => 'C',
            ComponentKind::Inductor { .. } => 'L',
            ComponentKind::Vccs { .. } => 'G',
            ComponentKind::VSource { .. } => 'V',
            ComponentKind::ISource { .. } => 'I',
            ComponentKind::Bjt { .. } => 'Q',
        }
    }

    /// The principal scalar value (None for BJTs).
    pub fn value(&self) -> Option<f64> {
        match *self {
            ComponentKind::Resistor { ohms, .. } => Some(ohms),
            ComponentKind::Capacitor { farads } => Some(farads),
            ComponentKind::Inductor { henries } => Some(henries),
            ComponentKind::Vccs { gm } => Some(gm),
            ComponentKind::VSource { volts } => Some(volts),
            ComponentKind::ISource { amps } => Some(amps),
            ComponentKind::Bjt { .. } => None,
        }
    }

    fn set_value(&mut self, v: f64) -> bool {
        match self {
            ComponentKind::Resistor { ohms, .. } => *ohms = v,
            ComponentKind::Capacitor { farads } => *farads = v,
            ComponentKind::Inductor { henries } => *henries = v,
            ComponentKind::Vccs { gm } => *gm = v,
            ComponentKind::VSource { volts } => *volts = v,
            ComponentKind::ISource { amps } => *amps = v,
            ComponentKind::Bjt { .. } => return false,
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub label: String,
    pub kind: ComponentKind,
    pub terminals: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub pos: NodeId,
    pub neg: NodeId,
    /// Reference impedance, ohms.
    pub z0: f64,
}

/// A noise current source attached by device expansion (shot noise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSource {
    pub label: String,
    pub pos: NodeId,
    pub neg: NodeId,
    /// One-sided current spectral density, A^2/Hz.
    pub psd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub title: String,
    nodes: Vec<String>,
    pub components: Vec<Component>,
    pub ports: Vec<Port>,
    pub noise_sources: Vec<NoiseSource>,
    /// Temperature for resistor thermal noise, kelvin.
    pub temperature: f64,
}

impl Default for Circuit {
    fn default() -> Self {
        Circuit::new("")
    }
}

fn is_ground_name(name: &str) -> bool {
    name == "0" || name.eq_ignore_ascii_case("gnd")
}

impl Circuit {
    pub fn new(title: &str) -> Self {
        Circuit {
            title: title.to_string(),
            nodes: vec!["0".to_string()],
            components: Vec::new(),
            ports: Vec::new(),
            noise_sources: Vec::new(),
            temperature: DEFAULT_TEMPERATURE,
        }
    }

    /// Returns the id of `name`, creating the node if needed.
    pub fn node(&mut self, name: &str) -> NodeId {
        if let Some(id) = self.find_node(name) {
            return id;
        }
        self.nodes.push(name.to_string());
        NodeId(self.nodes.len() - 1)
    }

    pub fn find_node(&self, name: &str) -> Option<NodeId> {
        if is_ground_name(name) {
            return Some(NodeId::GROUND);
        }
        self.nodes.iter().position(|n| n == name).map(NodeId)
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.0]
    }

    /// Number of nodes including ground.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn component(&self, label: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.label == label)
    }

    pub fn has_devices(&self) -> bool {
        self.components
            .iter()
            .any(|c| matches!(c.kind, ComponentKind::Bjt { .. }))
    }

    /// Appends a component; terminals are node names.
    pub fn add(&mut self, label: &str, kind: ComponentKind, terminals: &[&str]) -> &mut Self {
        let terminals = terminals.iter().map(|t| self.node(t)).collect();
        self.components.push(Component {
            label: label.to_string(),
            kind,
            terminals,
        });
        self
    }

    pub fn resistor(&mut self, label: &str, a: &str, b: &str, ohms: f64) -> &mut Self {
        self.add(label, ComponentKind::Resistor { ohms, noisy: true }, &[a, b])
    }

    pub fn capacitor(&mut self, label: &str, a: &str, b: &str, farads: f64) -> &mut Self {
        self.add(label, ComponentKind::Capacitor { farads }, &[a, b])
    }

    pub fn inductor(&mut self, label: &str, a: &str, b: &str, henries: f64) -> &mut Self {
        self.add(label, ComponentKind::Inductor { henries }, &[a, b])
    }

    pub fn vsource(&mut self, label: &str, a: &str, b: &str, volts: f64) -> &mut Self {
        self.add(label, ComponentKind::VSource { volts }, &[a, b])
    }

    pub fn isource(&mut self, label: &str, a: &str, b: &str, amps: f64) -> &mut Self {
        self.add(label, ComponentKind::ISource { amps }, &[a, b])
    }

    pub fn vccs(&mut self, label: &str, out: (&str, &str), ctrl: (&str, &str), gm: f64) -> &mut Self {
        self.add(label, ComponentKind::Vccs { gm }, &[out.0, out.1, ctrl.0, ctrl.1])
    }

    pub fn bjt(&mut self, label: &str, model: &str, b: &str, c: &str, e: &str, params: HybridPiParams) -> &mut Self {
        let kind = ComponentKind::Bjt {
            model: model.to_string(),
            params,
        };
        self.add(label, kind, &[b, c, e])
    }

    pub fn port(&mut self, pos: &str, neg: &str, z0: f64) -> &mut Self {
        let pos = self.node(pos);
        let neg = self.node(neg);
        self.ports.push(Port { pos, neg, z0 });
        self
    }

    /// Replaces the scalar value of a component (R/L/C/G/V/I).
    pub fn set_value(&mut self, label: &str, value: f64) -> Result<()> {
        let comp = self
            .components
            .iter_mut()
            .find(|c| c.label.eq_ignore_ascii_case(label))
            .ok_or_else(|| Error::MissingParameter(format!("no component labelled {label}")))?;
        if !comp.kind.set_value(value) {
            return Err(Error::Usage(format!("{label} has no scalar value")));
        }
        self.validate()
    }

    /// Checks element values, labels, terminal counts and connectivity.
    pub fn validate(&self) -> Result<()> {
        let sem = |kind, msg: String| Error::Semantic {
            line: 0,
            col: 0,
            kind,
            msg,
        };
        let mut labels = HashSet::new();
        for c in &self.components {
            if !labels.insert(c.label.to_ascii_uppercase()) {
                return Err(sem(SemanticKind::DuplicateLabel, c.label.clone()));
            }
            if c.terminals.len() != c.kind.terminal_count() {
                return Err(sem(
                    SemanticKind::BadTerminalCount,
                    format!("{} needs {} terminals", c.label, c.kind.terminal_count()),
                ));
            }
            if let Some(v) = c.kind.value() {
                let passive = matches!(
                    c.kind,
                    ComponentKind::Resistor { .. }
                        | ComponentKind::Capacitor { .. }
                        | ComponentKind::Inductor { .. }
                );
                if passive && !(v > 0.0 && v.is_finite()) {
                    return Err(sem(
                        SemanticKind::NonPositiveValue,
                        format!("{} = {v}", c.label),
                    ));
                }
                if !v.is_finite() {
                    return Err(sem(
                        SemanticKind::InvalidParameter,
                        format!("{} = {v}", c.label),
                    ));
                }
            }
            if let ComponentKind::Bjt { params, .. } = &c.kind {
                params
                    .validate()
                    .map_err(|e| sem(SemanticKind::InvalidParameter, format!("{}: {e}", c.label)))?;
            }
        }
        for p in &self.ports {
            if !(p.z0 > 0.0 && p.z0.is_finite()) {
                return Err(sem(
                    SemanticKind::NonPositiveValue,
                    format!("port reference impedance {}", p.z0),
                ));
            }
            if p.pos == p.neg {
                return Err(Error::Port("port terminals coincide".into()));
            }
        }
        let floating = self.floating_nodes();
        if !floating.is_empty() {
            let names: Vec<&str> = floating.iter().map(|&n| self.node_name(n)).collect();
            return Err(sem(
                SemanticKind::DanglingNode,
                format!("{} not connected to ground", names.join(", ")),
            ));
        }
        Ok(())
    }

    /// Nodes with no element path to ground. VCCS outputs and current
    /// sources do not conduct; ports count as their z0 termination.
    pub fn floating_nodes(&self) -> Vec<NodeId> {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut union = |a: NodeId, b: NodeId| {
            let (ra, rb) = (find(&mut parent, a.0), find(&mut parent, b.0));
            if ra != rb {
                parent[ra] = rb;
            }
        };
        let mut used = vec![false; n];
        used[0] = true;
        for c in &self.components {
            for t in &c.terminals {
                used[t.0] = true;
            }
            match c.kind {
                ComponentKind::Vccs { .. } | ComponentKind::ISource { .. } => {}
                ComponentKind::Bjt { .. } => {
                    union(c.terminals[0], c.terminals[1]);
                    union(c.terminals[0], c.terminals[2]);
                }
                _ => union(c.terminals[0], c.terminals[1]),
            }
        }
        for p in &self.ports {
            used[p.pos.0] = true;
            used[p.neg.0] = true;
            union(p.pos, p.neg);
        }
        for s in &self.noise_sources {
            used[s.pos.0] = true;
            used[s.neg.0] = true;
        }
        let ground = find(&mut parent, 0);
        (1..n)
            .filter(|&i| used[i] && find(&mut parent, i) != ground)
            .map(NodeId)
            .collect()
    }

    /// Drops node names that no component, port or noise source references
    /// and renumbers the rest, preserving order.
    pub(crate) fn compact_nodes(&mut self) {
        let n = self.nodes.len();
        let mut used = vec![false; n];
        used[0] = true;
        for c in &self.components {
            for t in &c.terminals {
                used[t.0] = true;
            }
        }
        for p in &self.ports {
            used[p.pos.0] = true;
            used[p.neg.0] = true;
        }
        for s in &self.noise_sources {
            used[s.pos.0] = true;
            used[s.neg.0] = true;
        }
        if used.iter().all(|&u| u) {
            return;
        }
        let mut map = vec![0usize; n];
        let mut names = Vec::new();
        for i in 0..n {
            if used[i] {
                map[i] = names.len();
                names.push(self.nodes[i].clone());
            }
        }
        self.nodes = names;
        let remap = |id: &mut NodeId| id.0 = map[id.0];
        for c in &mut self.components {
            c.terminals.iter_mut().for_each(remap);
        }
        for p in &mut self.ports {
            remap(&mut p.pos);
            remap(&mut p.neg);
        }
        for s in &mut self.noise_sources {
            remap(&mut s.pos);
            remap(&mut s.neg);
        }
    }

    /// Label -> index map.
    pub fn label_index(&self) -> HashMap<String, usize> {
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| (c.label.clone(), i))
            .collect()
    }
}

/// Replaces every BJT with its hybrid-pi subnetwork.
///
/// For a device `Q` with terminals (b, c, e) the result contains
/// `RB.Q` (b to internal node `Q.bi`), `RPI.Q` and `CPI.Q` (bi to e),
/// `CBC.Q` (bi to c), `GM.Q` (c to e, controlled by v(bi, e)) and, when set,
/// `RO.Q` (c to e). Zero-valued capacitors and infinite resistances are
/// omitted. Base and collector shot noise are attached as noise sources
/// across bi-e and c-e. Unreferenced node names are dropped.
pub fn expand_devices(c: &Circuit) -> Circuit {
    if !c.has_devices() {
        let mut out = c.clone();
        out.compact_nodes();
        return out;
    }
    let mut out = Circuit {
        title: c.title.clone(),
        nodes: c.nodes.clone(),
        components: Vec::with_capacity(c.components.len() + 4),
        ports: c.ports.clone(),
        noise_sources: c.noise_sources.clone(),
        temperature: c.temperature,
    };
    for comp in &c.components {
        let ComponentKind::Bjt { params: p, .. } = &comp.kind else {
            out.components.push(comp.clone());
            continue;
        };
        let q = &comp.label;
        let (b, col, e) = (comp.terminals[0], comp.terminals[1], comp.terminals[2]);
        let bi_name = format!("{q}.bi");
        let bi = if p.rb > 0.0 {
            out.nodes.push(bi_name);
            let bi = NodeId(out.nodes.len() - 1);
            out.components.push(Component {
                label: format!("RB.{q}"),
                kind: ComponentKind::Resistor { ohms: p.rb, noisy: true },
                terminals: vec![b, bi],
            });
            bi
        } else {
            b
        };
        let rpi = p.rpi();
        if rpi.is_finite() {
            out.components.push(Component {
                label: format!("RPI.{q}"),
                kind: ComponentKind::Resistor { ohms: rpi, noisy: false },
                terminals: vec![bi, e],
            });
        }
        if p.cpi > 0.0 {
            out.components.push(Component {
                label: format!("CPI.{q}"),
                kind: ComponentKind::Capacitor { farads: p.cpi },
                terminals: vec![bi, e],
            });
        }
        if p.cbc > 0.0 {
            out.components.push(Component {
                label: format!("CBC.{q}"),
                kind: ComponentKind::Capacitor { farads: p.cbc },
                terminals: vec![bi, col],
            });
        }
        out.components.push(Component {
            label: format!("GM.{q}"),
            kind: ComponentKind::Vccs { gm: p.gm },
            terminals: vec![col, e, bi, e],
        });
        if let Some(ro) = p.ro {
            out.components.push(Component {
                label: format!("RO.{q}"),
                kind: ComponentKind::Resistor { ohms: ro, noisy: true },
                terminals: vec![col, e],
            });
        }
        let ib = p.ib();
        if ib > 0.0 {
            out.noise_sources.push(NoiseSource {
                label: format!("IB.{q}"),
                pos: bi,
                neg: e,
                psd: 2.0 * Q_ELECTRON * ib,
            });
        }
        if p.ic > 0.0 {
            out.noise_sources.push(NoiseSource {
                label: format!("IC.{q}"),
                pos: col,
                neg: e,
                psd: 2.0 * Q_ELECTRON * p.ic,
            });
        }
    }
    out.compact_nodes();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn device() -> HybridPiParams {
        HybridPiParams::from_bias(1e-3, 300.0, 150.0, 5.0, 0.2e-12, 20e-15).unwrap()
    }

    #[test]
    fn gm_at_one_milliamp() {
        let gm = gm_from_bias(1e-3, 300.0).unwrap();
        // q/(kT) at 300 K = 38.6817 V^-1
        assert!((gm - 0.038_681_7).abs() < 1e-7, "{gm}");
        let gm2 = gm_from_bias(2e-3, 300.0).unwrap();
        assert_eq!(gm2, 2.0 * gm);
        assert!(gm_from_bias(0.0, 300.0).is_err());
        assert!(gm_from_bias(1e-3, 0.0).is_err());
    }

    #[test]
    fn gm_monotone() {
        let a = gm_from_bias(1e-3, 300.0).unwrap();
        assert!(gm_from_bias(1.1e-3, 300.0).unwrap() > a);
        assert!(gm_from_bias(1e-3, 310.0).unwrap() < a);
    }

    #[test]
    fn cpi_from_transit_frequency() {
        let w = 2.0 * std::f64::consts::PI * 40e9;
        let cpi = cpi_from_ft(0.04, w, 0.0).unwrap();
        assert!((cpi - 1.591_549e-13).abs() < 1e-18);
        assert!(cpi_from_ft(0.04, w, cpi).is_err());
        let cbc = 30e-15;
        let cpi = cpi_from_ft(0.04, w, cbc).unwrap();
        assert!((omega_t(0.04, cpi, cbc) / w - 1.0).abs() < 1e-14);
    }

    #[test]
    fn expansion_structure() {
        let mut c = Circuit::new("ce");
        c.bjt("Q1", "npn", "b", "c", "e", device())
            .resistor("RB", "b", "0", 1e3)
            .resistor("RC", "c", "0", 1e3)
            .resistor("RE", "e", "0", 10.0);
        let x = expand_devices(&c);
        assert_eq!(x.node_count(), c.node_count() + 1);
        let added: Vec<_> = x.components.iter().filter(|k| k.label.ends_with(".Q1")).collect();
        assert_eq!(added.len(), 5);
        let vccs: Vec<_> = added
            .iter()
            .filter(|k| matches!(k.kind, ComponentKind::Vccs { .. }))
            .collect();
        assert_eq!(vccs.len(), 1);
        assert_eq!(vccs[0].kind.value(), Some(device().gm));
        assert!(!x.has_devices());
        assert_eq!(x.ports, c.ports);
        assert_eq!(expand_devices(&x), x);
        assert_eq!(x.noise_sources.len(), 2);
    }

    #[test]
    fn expansion_identity_without_devices() {
        let mut c = Circuit::new("r");
        c.resistor("R1", "1", "0", 50.0).port("1", "0", 50.0);
        assert_eq!(expand_devices(&c), c);
    }

    #[test]
    fn dangling_node_detected() {
        let mut c = Circuit::new("");
        c.resistor("R1", "1", "99", 50.0);
        match c.validate() {
            Err(Error::Semantic { kind, msg, .. }) => {
                assert_eq!(kind, SemanticKind::DanglingNode);
                assert!(msg.contains("99"));
            }
            other => panic!("{other:?}"),
        }
    }
}
