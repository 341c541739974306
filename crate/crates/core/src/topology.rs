//! Built-in small-signal topologies.
//!
//! Bias networks are reduced to their AC behaviour: ideal bias sources are
//! open, supplies are AC ground, self-bias resistors stay as resistors.
//!
//! Node names used by every builder: `in` (first device base), `out`
//! (output collector). With coupling capacitors `CIN`/`COUT` present the
//! ports sit on `rf_in`/`rf_out` instead.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytic::{InputStageParams, OutputStageParams};
use crate::circuit::{cpi_from_ft, gm_from_bias, Circuit, HybridPiParams, DEFAULT_TEMPERATURE};
use crate::error::{Error, Result};
use crate::netlist::DEFAULT_BETA;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    TwoStageFig1,
    CurrentReuseFig2,
    FullLnaFig8,
    InputStageFig3,
    OutputStageFig7,
}

impl Topology {
    pub const ALL: [Topology; 5] = [
        Topology::TwoStageFig1,
        Topology::CurrentReuseFig2,
        Topology::FullLnaFig8,
        Topology::InputStageFig3,
        Topology::OutputStageFig7,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Topology::TwoStageFig1 => "two_stage_fig1",
            Topology::CurrentReuseFig2 => "current_reuse_fig2",
            Topology::FullLnaFig8 => "full_lna_fig8",
            Topology::InputStageFig3 => "input_stage_fig3",
            Topology::OutputStageFig7 => "output_stage_fig7",
        }
    }

    /// Elements that must be present in the parameter set.
    pub fn required(self) -> &'static [&'static str] {
        match self {
            Topology::TwoStageFig1 => &["L1", "R1", "L2", "C2", "RB3", "L4"],
            Topology::CurrentReuseFig2 => &["L1", "R1", "L2", "C2", "C3", "RB3", "L4"],
            Topology::FullLnaFig8 => &["L1", "R1", "L2", "C2", "C3", "RF", "L3", "R2", "C4", "L4"],
            Topology::InputStageFig3 => &["L1"],
            Topology::OutputStageFig7 => &["RF", "LF", "R2", "C4", "RL", "L4"],
        }
    }

    /// Elements used when present.
    pub fn optional(self) -> &'static [&'static str] {
        match self {
            Topology::InputStageFig3 | Topology::OutputStageFig7 => &[],
            _ => &["RL", "CIN", "COUT", "CB2"],
        }
    }

    pub fn devices(self) -> &'static [&'static str] {
        match self {
            Topology::InputStageFig3 => &["Q1"],
            Topology::OutputStageFig7 => &["Q3"],
            _ => &["Q1", "Q2", "Q3"],
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Topology::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Topology::ALL.iter().map(|t| t.name()).collect();
                Error::Usage(format!("unknown topology '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

/// Bias point and parasitics of one transistor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    /// Collector current, amps.
    pub ic: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub rb: f64,
    /// Transit frequency in hertz; used when `cpi` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ft: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpi: Option<f64>,
    #[serde(default)]
    pub cbc: f64,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ro: Option<f64>,
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

fn default_t() -> f64 {
    DEFAULT_TEMPERATURE
}

fn default_z0() -> f64 {
    50.0
}

impl DeviceSpec {
    pub fn to_params(&self) -> Result<HybridPiParams> {
        let gm = gm_from_bias(self.ic, self.t)?;
        let cpi = match (self.cpi, self.ft) {
            (Some(c), _) => c,
            (None, Some(ft)) => cpi_from_ft(gm, 2.0 * std::f64::consts::PI * ft, self.cbc)?,
            (None, None) => return Err(Error::MissingParameter("device needs 'cpi' or 'ft'".into())),
        };
        let p = HybridPiParams { rb: self.rb, gm, beta: self.beta, cpi, cbc: self.cbc, ic: self.ic, t: self.t, ro: self.ro };
        p.validate()?;
        Ok(p)
    }

    fn set(&mut self, key: &str, v: f64) -> Result<()> {
        match key.to_ascii_lowercase().as_str() {
            "ic" => self.ic = v,
            "beta" => self.beta = v,
            "rb" => self.rb = v,
            "ft" => {
                self.ft = Some(v);
                self.cpi = None;
            }
            "cpi" => self.cpi = Some(v),
            "cbc" => self.cbc = v,
            "t" => self.t = v,
            "ro" => self.ro = Some(v),
            _ => return Err(Error::Usage(format!("unknown device parameter '{key}'"))),
        }
        Ok(())
    }
}

/// Element values and device data for a built-in topology (JSON file format).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyParams {
    /// Where the numbers come from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    /// Device shared by all transistors unless overridden in `devices`.
    pub device: DeviceSpec,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub devices: BTreeMap<String, DeviceSpec>,
    /// Element label -> value in SI units.
    pub elements: BTreeMap<String, f64>,
    #[serde(default = "default_z0")]
    pub z0: f64,
}

impl TopologyParams {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    /// Shipped default design for a topology.
    pub fn builtin(t: Topology) -> Self {
        let text = match t {
            Topology::TwoStageFig1 => include_str!("../designs/two_stage_fig1.json"),
            Topology::CurrentReuseFig2 => include_str!("../designs/current_reuse_fig2.json"),
            Topology::FullLnaFig8 => include_str!("../designs/full_lna_fig8.json"),
            Topology::InputStageFig3 => include_str!("../designs/input_stage_fig3.json"),
            Topology::OutputStageFig7 => include_str!("../designs/output_stage_fig7.json"),
        };
        Self::from_json(text).expect("shipped design parses")
    }

    pub fn device_for(&self, q: &str) -> &DeviceSpec {
        self.devices.get(q).unwrap_or(&self.device)
    }

    pub fn get(&self, label: &str) -> Result<f64> {
        self.elements
            .get(label)
            .copied()
            .ok_or_else(|| Error::MissingParameter(format!("element '{label}'")))
    }

    /// Sets an element value, `device.<param>` or `<Q>.<param>`.
    pub fn set(&mut self, key: &str, v: f64) -> Result<()> {
        if let Some((head, param)) = key.split_once('.') {
            if head.eq_ignore_ascii_case("device") {
                return self.device.set(param, v);
            }
            let q = head.to_ascii_uppercase();
            let mut spec = *self.device_for(&q);
            spec.set(param, v)?;
            self.devices.insert(q, spec);
            return Ok(());
        }
        self.elements.insert(key.to_string(), v);
        Ok(())
    }
}

/// Small-signal circuit of a built-in topology with 50-ohm-class ports.
pub fn build_topology(which: Topology, params: &TopologyParams) -> Result<Circuit> {
    for label in which.required() {
        params.get(label)?;
    }
    let allowed: Vec<&str> = which.required().iter().chain(which.optional()).copied().collect();
    if let Some(extra) = params.elements.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::Usage(format!("element '{extra}' is not part of {which}")));
    }
    let dev = |q: &str| params.device_for(q).to_params();
    let e = |l: &str| params.get(l).expect("checked above");
    let opt = |l: &str| params.elements.get(l).copied();
    let mut c = Circuit::new(which.name());
    let z0 = params.z0;

    match which {
        Topology::InputStageFig3 => {
            c.bjt("Q1", "npn", "in", "out", "e1", dev("Q1")?).inductor("L1", "e1", "0", e("L1"));
            c.port("in", "0", z0).port("out", "0", z0);
        }
        Topology::OutputStageFig7 => {
            output_stage_elements(&mut c, dev("Q3")?, e("RF"), e("LF"), e("R2"), e("C4"), e("RL"), e("L4"));
            c.port("in", "0", z0).port("out", "0", z0);
        }
        Topology::TwoStageFig1 | Topology::CurrentReuseFig2 | Topology::FullLnaFig8 => {
            // cascode input stage
            c.bjt("Q1", "npn", "in", "x1", "e1", dev("Q1")?)
                .inductor("L1", "e1", "0", e("L1"))
                .bjt("Q2", "npn", "b2", "x2", "x1", dev("Q2")?)
                .resistor("R1", "b2", "0", e("R1"));
            if let Some(cb) = opt("CB2") {
                c.capacitor("CB2", "b2", "0", cb);
            }
            // interstage
            match which {
                Topology::TwoStageFig1 => {
                    c.inductor("L2", "x2", "0", e("L2"));
                }
                _ => {
                    c.inductor("L2", "x2", "e3p", e("L2")).capacitor("C3", "e3p", "0", e("C3"));
                }
            }
            c.capacitor("C2", "x2", "b3", e("C2"));
            // output stage
            let q3 = dev("Q3")?;
            match which {
                Topology::TwoStageFig1 => {
                    c.bjt("Q3", "npn", "b3", "out", "0", q3).resistor("RB3", "b3", "0", e("RB3"));
                }
                Topology::CurrentReuseFig2 => {
                    c.bjt("Q3", "npn", "b3", "out", "e3p", q3).resistor("RB3", "b3", "0", e("RB3"));
                }
                _ => {
                    c.bjt("Q3", "npn", "b3", "out", "e3", q3)
                        .resistor("R2", "e3", "e3p", e("R2"))
                        .capacitor("C4", "e3", "e3p", e("C4"))
                        .resistor("RF", "b3", "fb", e("RF"))
                        .inductor("L3", "fb", "out", e("L3"));
                }
            }
            c.inductor("L4", "out", "0", e("L4"));
            if let Some(rl) = opt("RL") {
                c.resistor("RL", "out", "0", rl);
            }
            let pin = match opt("CIN") {
                Some(v) => {
                    c.capacitor("CIN", "rf_in", "in", v);
                    "rf_in"
                }
                None => "in",
            };
            let pout = match opt("COUT") {
                Some(v) => {
                    c.capacitor("COUT", "out", "rf_out", v);
                    "rf_out"
                }
                None => "out",
            };
            c.port(pin, "0", z0).port(pout, "0", z0);
        }
    }
    c.validate()?;
    Ok(c)
}

#[allow(clippy::too_many_arguments)]
fn output_stage_elements(c: &mut Circuit, q3: HybridPiParams, rf: f64, lf: f64, r2: f64, c4: f64, rl: f64, l4: f64) {
    c.bjt("Q3", "npn", "in", "out", "e3", q3)
        .resistor("RF", "in", "fb", rf)
        .inductor("LF", "fb", "out", lf)
        .resistor("R2", "e3", "0", r2)
        .capacitor("C4", "e3", "0", c4)
        .resistor("RL", "out", "0", rl)
        .inductor("L4", "out", "0", l4);
}

/// Input stage with the idealized device of the closed forms (no r_pi,
/// no C_bc). Port 1 has the source resistance as reference impedance.
pub fn input_stage_circuit(p: &InputStageParams) -> Result<Circuit> {
    let mut c = Circuit::new("input stage");
    c.bjt("Q1", "ideal", "in", "out", "e1", p.device());
    if p.l > 0.0 {
        c.inductor("L1", "e1", "0", p.l);
    } else {
        c.resistor("RE0", "e1", "0", 1e-12);
    }
    c.port("in", "0", p.rs).port("out", "0", 50.0);
    c.validate()?;
    Ok(c)
}

/// Output stage with the idealized device (`r_b = 0`, no r_pi, no C_bc).
/// Its transimpedance is `v(out) / i(in)`.
pub fn output_stage_circuit(p: &OutputStageParams) -> Result<Circuit> {
    let q3 = HybridPiParams {
        rb: 0.0,
        gm: p.gm3,
        beta: f64::INFINITY,
        cpi: p.cpi3,
        cbc: 0.0,
        ic: p.gm3 * crate::circuit::K_BOLTZMANN * DEFAULT_TEMPERATURE / crate::circuit::Q_ELECTRON,
        t: DEFAULT_TEMPERATURE,
        ro: None,
    };
    let mut c = Circuit::new("output stage");
    output_stage_elements(&mut c, q3, p.rf, p.lf, p.r2, p.c4, p.rl, p.l4);
    c.port("in", "0", 50.0).port("out", "0", 50.0);
    c.validate()?;
    Ok(c)
}
