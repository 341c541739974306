//! Two-port noise: closed-form device expressions and a circuit-level oracle.
//!
//! All densities are one-sided per hertz. `I_B = I_C / beta`.
//!
//! The closed forms follow the published expressions literally, including
//! their dimensional quirks; [`NoiseFormula::Consistent`] offers a
//! dimensionally consistent reading for comparison.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::circuit::{expand_devices, Circuit, ComponentKind, HybridPiParams, K_BOLTZMANN, Q_ELECTRON};
use crate::error::{Error, Result};
use crate::mna::{assemble, port_indices, port_voltage, stamp_admittance, AcSystem};
use crate::sweep::FrequencyGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseParams {
    /// Equivalent noise resistance, ohms.
    pub rn: f64,
    /// Optimum source impedance, ohms.
    pub zopt: Complex64,
    /// Minimum noise factor (linear).
    pub nfmin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseSpectra {
    pub freqs: Vec<f64>,
    /// Equivalent input noise voltage density, V^2/Hz.
    pub v2: Vec<f64>,
    /// Equivalent input noise current density, A^2/Hz.
    pub i2: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum NoiseFormula {
    /// The expressions exactly as printed.
    #[default]
    Transcribed,
    /// `NFmin = 1 + a Re(Zopt)`, `NF = NFmin + (a / 2 Rs)|Zopt - Zs|^2`,
    /// i.e. the usual `Gn = a / 2` form with the same Rn and Zopt.
    Consistent,
}

/// `gm/beta + w^2 gm / wT^2`, the admittance-like factor shared by the formulas.
pub fn shot_factor(p: &HybridPiParams, w: f64) -> f64 {
    let wt = p.omega_t();
    p.gm / p.beta + w * w * p.gm / (wt * wt)
}

/// Equivalent input noise voltage density of the degenerated stage.
pub fn viedi_squared(p: &HybridPiParams, l: f64, w: f64) -> f64 {
    let wt = p.omega_t();
    let wl2 = (w * l) * (w * l);
    4.0 * K_BOLTZMANN * p.t * p.rb
        + 2.0 * Q_ELECTRON * p.ic / (p.gm * p.gm)
        + 2.0 * Q_ELECTRON * p.ib() * wl2
        + (w * w) / (wt * wt) * 2.0 * Q_ELECTRON * p.ic * wl2
}

/// Equivalent input noise current density; independent of degeneration.
pub fn iiedi_squared(p: &HybridPiParams, w: f64) -> f64 {
    let wt = p.omega_t();
    2.0 * Q_ELECTRON * p.ib() + (w * w) / (wt * wt) * 2.0 * Q_ELECTRON * p.ic
}

pub fn noise_spectra(p: &HybridPiParams, l: f64, grid: &FrequencyGrid) -> NoiseSpectra {
    let freqs = grid.points().to_vec();
    let v2 = freqs.iter().map(|f| viedi_squared(p, l, 2.0 * PI * f)).collect();
    let i2 = freqs.iter().map(|f| iiedi_squared(p, 2.0 * PI * f)).collect();
    NoiseSpectra { freqs, v2, i2 }
}

/// Rn, Zopt and NFmin as printed. Fails if Rn comes out negative.
pub fn noise_parameters(p: &HybridPiParams, le: f64, w: f64) -> Result<NoiseParams> {
    noise_parameters_with(p, le, w, NoiseFormula::Transcribed)
}

pub fn noise_parameters_with(p: &HybridPiParams, le: f64, w: f64, formula: NoiseFormula) -> Result<NoiseParams> {
    let wt = p.omega_t();
    let a = shot_factor(p, w);
    let rn = p.rb + 0.5 * a * w * w * le * le + 1.0 / (2.0 * p.gm) - (w / wt) * w * le;
    if rn < 0.0 {
        return Err(Error::NegativeRn { rn });
    }
    let root = (2.0 * a * p.rb + 1.0 / p.beta).sqrt();
    let zopt = Complex64::new(
        root / a,
        w / (wt * p.gm / p.beta + w * w * p.gm / wt) - w * le,
    );
    let nfmin = match formula {
        NoiseFormula::Transcribed => 1.0 + 2.0 * (a + 1.0 / p.beta).sqrt(),
        NoiseFormula::Consistent => 1.0 + root,
    };
    Ok(NoiseParams { rn, zopt, nfmin })
}

/// Noise factor for source impedance `zs` from the printed expression.
pub fn nf_from_params(np: &NoiseParams, zs: Complex64, w: f64, p: &HybridPiParams) -> Result<f64> {
    nf_from_params_with(np, zs, w, p, NoiseFormula::Transcribed)
}

pub fn nf_from_params_with(
    np: &NoiseParams,
    zs: Complex64,
    w: f64,
    p: &HybridPiParams,
    formula: NoiseFormula,
) -> Result<f64> {
    if !(zs.re > 0.0) {
        return Err(Error::Domain(format!("source resistance must be positive, got {}", zs.re)));
    }
    let a = shot_factor(p, w);
    let coeff = match formula {
        NoiseFormula::Transcribed => 2.0 * a / zs.re,
        NoiseFormula::Consistent => a / (2.0 * zs.re),
    };
    Ok(np.nfmin + coeff * (np.zopt - zs).norm_sqr())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NoiseOptions {
    /// Resistor thermal noise (4kT/R).
    pub thermal: bool,
    /// Device shot noise sources.
    pub shot: bool,
}

impl Default for NoiseOptions {
    fn default() -> Self {
        NoiseOptions { thermal: true, shot: true }
    }
}

impl NoiseOptions {
    pub fn noiseless() -> Self {
        NoiseOptions { thermal: false, shot: false }
    }
}

/// Noise factor of a two-port by direct superposition of every noise source.
///
/// Port 1 is driven from `zs` (thermal current density `4kT Re(zs)/|zs|^2`
/// in parallel with `zs`); port 2 is terminated in its z0 without noise.
/// The result is total output noise over the part due to the source.
pub fn noise_correlation_nf(c: &Circuit, grid: &FrequencyGrid, zs: Complex64) -> Result<Vec<f64>> {
    noise_correlation_nf_with(c, grid, zs, NoiseOptions::default())
}

pub fn noise_correlation_nf_with(
    c: &Circuit,
    grid: &FrequencyGrid,
    zs: Complex64,
    opts: NoiseOptions,
) -> Result<Vec<f64>> {
    if c.ports.len() != 2 {
        return Err(Error::Port(format!("expected exactly 2 ports, found {}", c.ports.len())));
    }
    if !(zs.re > 0.0) {
        return Err(Error::Domain(format!("source resistance must be positive, got {}", zs.re)));
    }
    let x = expand_devices(c);
    x.validate()?;
    let p = assemble(&x)?;
    let kt4 = 4.0 * K_BOLTZMANN * x.temperature;

    // (pos, neg, psd) for every internal source
    let mut sources: Vec<(Option<usize>, Option<usize>, f64)> = Vec::new();
    if opts.thermal {
        for comp in &x.components {
            if let ComponentKind::Resistor { ohms, noisy: true } = comp.kind {
                let t = &comp.terminals;
                sources.push((p.node_index(t[0]), p.node_index(t[1]), kt4 / ohms));
            }
        }
    }
    if opts.shot {
        for ns in &x.noise_sources {
            sources.push((p.node_index(ns.pos), p.node_index(ns.neg), ns.psd));
        }
    }

    let (in_port, out_port) = (&x.ports[0], &x.ports[1]);
    let (ip, im) = port_indices(&p, in_port);
    let (op, om) = port_indices(&p, out_port);
    let src_psd = kt4 * zs.re / zs.norm_sqr();
    let mut out = Vec::with_capacity(grid.len());
    for &f in grid.points() {
        let s = Complex64::new(0.0, 2.0 * PI * f);
        let mut a = p.system(s);
        stamp_admittance(&mut a, ip, im, zs.inv());
        stamp_admittance(&mut a, op, om, Complex64::new(1.0 / out_port.z0, 0.0));
        let sys = AcSystem::new(a, s)?;
        let gain2 = |pos: Option<usize>, neg: Option<usize>| -> Result<f64> {
            let mut b = DVector::zeros(p.dim());
            if let Some(i) = pos {
                b[i] += Complex64::new(1.0, 0.0);
            }
            if let Some(i) = neg {
                b[i] -= Complex64::new(1.0, 0.0);
            }
            let sol = sys.solve(&b)?;
            Ok(port_voltage(&p, out_port, &sol).norm_sqr())
        };
        let from_source = src_psd * gain2(ip, im)?;
        if from_source == 0.0 {
            return Err(Error::Structure("source noise does not reach the output".into()));
        }
        let mut total = from_source;
        for &(pos, neg, psd) in &sources {
            total += psd * gain2(pos, neg)?;
        }
        out.push(total / from_source);
    }
    Ok(out)
}

/// Cascade noise factor `F1 + (F2 - 1)/G1 + (F3 - 1)/(G1 G2) + ...`.
pub fn friis_cascade(stages: &[(f64, f64)]) -> Result<f64> {
    let Some(&(f1, _)) = stages.first() else {
        return Err(Error::Domain("empty stage list".into()));
    };
    if stages.iter().any(|&(f, g)| !(f >= 1.0) || !(g > 0.0)) {
        return Err(Error::Domain("stages need F >= 1 and G > 0".into()));
    }
    let mut total = f1;
    let mut gain = stages[0].1;
    for &(f, g) in &stages[1..] {
        total += (f - 1.0) / gain;
        gain *= g;
    }
    Ok(total)
}

pub fn to_db(factor: f64) -> f64 {
    10.0 * factor.log10()
}
