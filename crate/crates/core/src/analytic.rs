//! Closed-form expressions for the current-reuse LNA, kept literal so they
//! can be checked against the numeric engines.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{HybridPiParams, DEFAULT_TEMPERATURE, K_BOLTZMANN, Q_ELECTRON};
use crate::error::{Error, Result};
use crate::polezero::{PoleZeroSet, RationalTF};

/// Symbols of the degenerated input stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputStageParams {
    pub rb: f64,
    pub gm: f64,
    pub cpi: f64,
    /// Emitter degeneration inductance, henries.
    pub l: f64,
    /// Source resistance, ohms.
    pub rs: f64,
}

impl InputStageParams {
    /// Device seen by these formulas: no r_pi, no C_bc, collector current
    /// consistent with `gm` at the default temperature.
    pub fn device(&self) -> HybridPiParams {
        HybridPiParams {
            rb: self.rb,
            gm: self.gm,
            beta: f64::INFINITY,
            cpi: self.cpi,
            cbc: 0.0,
            ic: self.gm * K_BOLTZMANN * DEFAULT_TEMPERATURE / Q_ELECTRON,
            t: DEFAULT_TEMPERATURE,
            ro: None,
        }
    }

    /// `1 / (g_m L)`, magnitude of the degeneration pole.
    pub fn p1(&self) -> f64 {
        -1.0 / (self.gm * self.l)
    }
}

/// Symbols of the dual-feedback output stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputStageParams {
    pub gm3: f64,
    /// Shunt-shunt feedback resistor and inductor.
    pub rf: f64,
    pub lf: f64,
    /// Series-series feedback: emitter resistor with bypass capacitor.
    pub r2: f64,
    pub c4: f64,
    /// Load resistor and load inductor.
    pub rl: f64,
    pub l4: f64,
    pub cpi3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    pub vcc1: f64,
    pub vcc2: f64,
    /// Cascode stage current.
    pub i1: f64,
    /// Separate second-stage current of the conventional amplifier.
    pub i2: f64,
    /// Shared current of the current-reuse amplifier.
    pub ic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerComparison {
    pub p_cascode: f64,
    pub p_reuse: f64,
    /// `p_reuse / p_cascode`.
    pub ratio: f64,
}

/// Supply power of the two-stage and current-reuse amplifiers.
pub fn power_comparison(b: &PowerBudget) -> Result<PowerComparison> {
    let p_cascode = b.vcc1 * (b.i1 + b.i2);
    let p_reuse = b.vcc2 * b.ic;
    if p_cascode == 0.0 {
        return Err(Error::Domain("conventional amplifier draws no power".into()));
    }
    Ok(PowerComparison { p_cascode, p_reuse, ratio: p_reuse / p_cascode })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveGm {
    /// `g_m1 * g_m3` for the conventional topology.
    pub cascode: f64,
    /// `g_m1 * g_m3` for the current-reuse topology.
    pub current_reuse: f64,
    /// Effective transconductance of the cascode stage alone (`g_m1`).
    pub cascode_stage: f64,
}

/// The product form is dimensionally S^2; it is returned as printed.
pub fn effective_gm(gm1: f64, gm3: f64) -> Result<EffectiveGm> {
    if !(gm1 > 0.0 && gm3 > 0.0) {
        return Err(Error::Domain("transconductances must be positive".into()));
    }
    Ok(EffectiveGm { cascode: gm1 * gm3, current_reuse: gm1 * gm3, cascode_stage: gm1 })
}

/// `r_b + 1/(jw C_pi) + jw L + L g_m / C_pi`.
pub fn zin_analytic(p: &InputStageParams, w: f64) -> Complex64 {
    let jw = Complex64::new(0.0, w);
    p.rb + 1.0 / (jw * p.cpi) + jw * p.l + p.l * p.gm / p.cpi
}

/// `i_out / v_s` of the input stage as printed:
///
/// `1 / ((R_s + r_b + L g_m / C_pi) s C_pi + 1 + s^2 L C_pi) * g_m / (1 + g_m s L)`
pub fn input_stage_tf(p: &InputStageParams) -> RationalTF {
    let quad = [1.0, (p.rs + p.rb + p.l * p.gm / p.cpi) * p.cpi, p.l * p.cpi];
    let lin = [1.0, p.gm * p.l];
    RationalTF {
        num: vec![p.gm],
        den: poly_mul(&quad, &lin),
        non_minimal: Vec::new(),
    }
}

/// The band-limited form with `s^2 L C_pi + 1` dropped; its poles are
/// `0` and `-1/(g_m L)`.
pub fn input_stage_tf_simplified(p: &InputStageParams) -> RationalTF {
    let a = (p.rs + p.rb + p.l * p.gm / p.cpi) * p.cpi;
    RationalTF {
        num: vec![p.gm],
        den: poly_mul(&[0.0, a], &[1.0, p.gm * p.l]),
        non_minimal: Vec::new(),
    }
}

/// Size of the term dropped by the simplified form relative to the full
/// quadratic, `|1 - w^2 L C_pi| / |quadratic(jw)|`.
pub fn simplification_error(p: &InputStageParams, w: f64) -> f64 {
    let jw = Complex64::new(0.0, w);
    let dropped = 1.0 + jw * jw * p.l * p.cpi;
    let full = (p.rs + p.rb + p.l * p.gm / p.cpi) * jw * p.cpi + dropped;
    dropped.norm() / full.norm()
}

/// `{P0 = 0, P1 = -1/(g_m L)}`. With `L = 0` only `P0` is returned.
pub fn input_stage_poles(p: &InputStageParams) -> PoleZeroSet {
    let mut poles = vec![Complex64::new(0.0, 0.0)];
    if p.l > 0.0 {
        poles.insert(0, Complex64::new(p.p1(), 0.0));
    }
    let a = (p.rs + p.rb + p.l * p.gm / p.cpi) * p.cpi;
    let lead = if p.l > 0.0 { a * p.gm * p.l } else { a };
    PoleZeroSet { poles, zeros: Vec::new(), gain: p.gm / lead }
}

/// Zeros `Z0, Z1, Z2` and pole `P2` of the output stage as printed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutputStageRoots {
    pub z0: f64,
    pub z1: f64,
    pub z2: f64,
    pub p2: f64,
}

impl OutputStageRoots {
    pub fn as_set(&self) -> PoleZeroSet {
        let c = |x: f64| Complex64::new(x, 0.0);
        PoleZeroSet {
            poles: vec![c(self.p2)],
            zeros: vec![c(self.z0), c(self.z1), c(self.z2)],
            gain: f64::NAN,
        }
    }
}

/// Z1 numerator and denominator, exposed because the optimizer works on them.
pub fn z1_parts(p: &OutputStageParams) -> (f64, f64) {
    let g = p.gm3;
    (g * p.r2 + 2.0 - g * p.rf, g * p.lf + (g * p.rf - 2.0) * p.r2)
}

/// P2 numerator and denominator.
pub fn p2_parts(p: &OutputStageParams) -> (f64, f64) {
    let g = p.gm3;
    let num = p.rf * p.rl * (1.0 + g * p.r2);
    let den = p.rl * (1.0 + g * p.r2) * p.lf + p.c4 * (p.rl * p.rf + p.r2 * p.rl * p.rf) + p.rf * p.rl * g * p.l4;
    (num, den)
}

pub fn output_stage_zeros_pole(p: &OutputStageParams) -> Result<OutputStageRoots> {
    let (n1, d1) = z1_parts(p);
    if d1 == 0.0 {
        return Err(Error::Degenerate { expr: "Z1", symbol: "g_m3 L_f + (g_m3 R_f - 2) R_2".into() });
    }
    if p.lf == 0.0 {
        return Err(Error::Degenerate { expr: "Z2", symbol: "L_f".into() });
    }
    let (n2, d2) = p2_parts(p);
    if d2 == 0.0 {
        return Err(Error::Degenerate { expr: "P2", symbol: "R_L (1 + g_m3 R_2) L_f + C_4 (...) + R_f R_L g_m3 L_4".into() });
    }
    Ok(OutputStageRoots { z0: 0.0, z1: -n1 / d1, z2: -p.rf / p.lf, p2: -n2 / d2 })
}

/// `v_out / i_in` of the output stage evaluated from the printed product.
///
/// The printed expression is typographically damaged; it is evaluated
/// literally (with its `L_3` read as `L_f`) for comparison only.
pub fn output_stage_tf_printed(p: &OutputStageParams, s: Complex64) -> Complex64 {
    let g = p.gm3;
    let e = 1.0 + p.r2 * s * p.c4;
    let zf = p.rf + s * p.lf;
    let zl = p.rl + s * p.l4;
    let srl4 = p.rl * s * p.l4;
    let first = -(g * e / (e + g * p.r2) - 1.0 / zf);
    let second = zf * s * p.l4 * p.rl / (zl * zf + srl4);
    let third = 1.0 / ((e + g * p.r2) * zf * zl * zf + srl4);
    let fourth = 1.0 / (((e + g * p.r2) + s * p.cpi3 * zf * e) * (zl * zf + srl4) + g * srl4 * zf * e);
    first * second * third * fourth
}

pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polezero::factor;
    use std::f64::consts::PI;

    fn stage() -> InputStageParams {
        InputStageParams { rb: 5.0, gm: 0.04, cpi: 0.04 / 1.607e11, l: 0.28e-9, rs: 50.0 }
    }

    #[test]
    fn power_examples() {
        let b = PowerBudget { vcc1: 1.8, vcc2: 1.8, i1: 5e-3, i2: 5e-3, ic: 5e-3 };
        assert_eq!(power_comparison(&b).unwrap().ratio, 0.5);
        let b = PowerBudget { vcc1: 2.0, vcc2: 3.0, i1: 4e-3, i2: 0.0, ic: 2e-3 };
        assert_eq!(power_comparison(&b).unwrap().ratio, (3.0 * 2e-3) / (2.0 * 4e-3));
        let b = PowerBudget { vcc1: 0.0, vcc2: 3.0, i1: 4e-3, i2: 0.0, ic: 2e-3 };
        assert!(power_comparison(&b).is_err());
    }

    #[test]
    fn effective_gm_product() {
        let g = effective_gm(0.04, 0.04).unwrap();
        assert!((g.cascode - 1.6e-3).abs() < 1e-18);
        assert_eq!(g.cascode, g.current_reuse);
        assert_eq!(g.cascode_stage, 0.04);
    }

    #[test]
    fn zin_matching_point() {
        let p = stage();
        let w = 2.0 * PI * 6.5e9;
        let z = zin_analytic(&p, w);
        // 1.607e11 is 45 / 0.28 nH rounded to four digits
        assert!((z.re - 50.0).abs() < 1e-2);
        let exact = InputStageParams { cpi: p.gm * 0.28e-9 / 45.0, ..p };
        assert!((zin_analytic(&exact, w).re - 50.0).abs() < 1e-12);
        let mut q = p;
        q.l = 0.0;
        let z0 = zin_analytic(&q, w);
        assert!((z0 - (Complex64::new(5.0, 0.0) + 1.0 / Complex64::new(0.0, w * p.cpi))).norm() < 1e-9);
        for f in [3.1e9, 6.5e9, 10.6e9] {
            assert_eq!(zin_analytic(&p, 2.0 * PI * f).re, z.re);
        }
    }

    #[test]
    fn tf_contains_p1() {
        let p = stage();
        let pz = factor(&input_stage_tf(&p));
        let p1 = p.p1();
        assert!(pz.poles.iter().any(|z| (z.re - p1).abs() <= 1e-9 * p1.abs() && z.im == 0.0));
        assert!((p1 + 1.0 / (0.04 * 0.28e-9)).abs() < 1e-3 * 8.93e10);
        let simp = factor(&input_stage_tf_simplified(&p));
        assert!(simp.poles.iter().any(|z| z.norm() == 0.0));
    }

    #[test]
    fn stage_poles() {
        let p = InputStageParams { rb: 5.0, gm: 0.04, cpi: 1e-13, l: 0.28e-9, rs: 50.0 };
        let pz = input_stage_poles(&p);
        assert!((pz.poles[0].re + 1.0 / (0.04 * 0.28e-9)).abs() < 1.0);
        assert!(pz.poles.contains(&Complex64::new(0.0, 0.0)));
        let mut q = p;
        q.gm *= 2.0;
        assert!((input_stage_poles(&q).poles[0].re * 2.0 - pz.poles[0].re).abs() < 1e-3);
        q.l = 0.0;
        assert_eq!(input_stage_poles(&q).poles.len(), 1);
    }

    #[test]
    fn output_stage_roots() {
        let p = OutputStageParams { gm3: 0.1, rf: 300.0, lf: 1e-9, r2: 10.0, c4: 1e-12, rl: 100.0, l4: 2e-9, cpi3: 1e-12 };
        let r = output_stage_zeros_pole(&p).unwrap();
        assert_eq!(r.z0, 0.0);
        assert_eq!(r.z2, -3e11);
        let mut q = p;
        q.lf = 0.0;
        q.rf = 2.0 / q.gm3;
        // both Z1 and Z2 denominators vanish; Z1 is reported first
        assert!(matches!(output_stage_zeros_pole(&q), Err(Error::Degenerate { expr: "Z1", .. })));
    }
}
