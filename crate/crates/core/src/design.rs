//! Numeric solvers for the design conditions: input match, noise-optimal
//! bias, zero-pole cancellation in the feedback network, and flatness.
//!
//! Every search is deterministic: fixed start points, fixed iteration order.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytic::{output_stage_zeros_pole, p2_parts, z1_parts, zin_analytic, InputStageParams, OutputStageParams};
use crate::circuit::{cpi_from_ft, gm_from_bias, Circuit, HybridPiParams, K_BOLTZMANN, Q_ELECTRON};
use crate::error::{Error, Result};
use crate::noise::{noise_correlation_nf, noise_parameters_with, nf_from_params_with, to_db, NoiseFormula};
use crate::polezero::OMEGA_REF;
use crate::sweep::{gain_flatness, two_port_sparams, FrequencyGrid};
use crate::topology::{build_topology, Topology, TopologyParams};

/// Residual below which the cancellation search counts as converged.
pub const CANCELLATION_TARGET: f64 = 1e-3;

/// Relative input-match error (against the target resistance) that counts as matched.
pub const MATCH_TARGET: f64 = 1e-6;

/// Number of points used by [`flatness_score`].
pub const FLATNESS_POINTS: usize = 401;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Var {
    L,
    Ic,
    Rf,
    Lf,
    R2,
    C4,
}

impl Var {
    pub const FEEDBACK: [Var; 4] = [Var::Rf, Var::Lf, Var::R2, Var::C4];

    pub fn name(self) -> &'static str {
        match self {
            Var::L => "L",
            Var::Ic => "I_C",
            Var::Rf => "R_f",
            Var::Lf => "L_f",
            Var::R2 => "R_2",
            Var::C4 => "C_4",
        }
    }
}

impl std::str::FromStr for Var {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "").as_str() {
            "l" => Ok(Var::L),
            "ic" => Ok(Var::Ic),
            "rf" => Ok(Var::Rf),
            "lf" => Ok(Var::Lf),
            "r2" => Ok(Var::R2),
            "c4" => Ok(Var::C4),
            _ => Err(Error::Usage(format!("unknown design variable '{s}'"))),
        }
    }
}

/// Closed search interval of each variable, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariableBounds {
    pub l: (f64, f64),
    pub ic: (f64, f64),
    pub rf: (f64, f64),
    pub lf: (f64, f64),
    pub r2: (f64, f64),
    pub c4: (f64, f64),
}

impl Default for VariableBounds {
    fn default() -> Self {
        VariableBounds {
            l: (0.05e-9, 10e-9),
            ic: (0.1e-3, 20e-3),
            rf: (10.0, 5e3),
            lf: (0.05e-9, 10e-9),
            r2: (10.0, 5e3),
            c4: (10e-15, 10e-12),
        }
    }
}

impl VariableBounds {
    pub fn get(&self, v: Var) -> (f64, f64) {
        match v {
            Var::L => self.l,
            Var::Ic => self.ic,
            Var::Rf => self.rf,
            Var::Lf => self.lf,
            Var::R2 => self.r2,
            Var::C4 => self.c4,
        }
    }

    pub fn set(&mut self, v: Var, b: (f64, f64)) {
        match v {
            Var::L => self.l = b,
            Var::Ic => self.ic = b,
            Var::Rf => self.rf = b,
            Var::Lf => self.lf = b,
            Var::R2 => self.r2 = b,
            Var::C4 => self.c4 = b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for v in [Var::L, Var::Ic, Var::Rf, Var::Lf, Var::R2, Var::C4] {
            let (lo, hi) = self.get(v);
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::Infeasible(format!("bounds of {} must satisfy 0 < lo <= hi, got [{lo:e}, {hi:e}]", v.name())));
            }
        }
        Ok(())
    }

    pub fn contains(&self, v: Var, x: f64) -> bool {
        let (lo, hi) = self.get(v);
        x >= lo && x <= hi
    }
}

/// Solved (or given) design values. Variables a solver does not touch stay `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignVariables {
    pub l: Option<f64>,
    pub ic: Option<f64>,
    pub rf: Option<f64>,
    pub lf: Option<f64>,
    pub r2: Option<f64>,
    pub c4: Option<f64>,
    pub bounds: VariableBounds,
}

impl DesignVariables {
    pub fn empty(bounds: VariableBounds) -> Self {
        DesignVariables { l: None, ic: None, rf: None, lf: None, r2: None, c4: None, bounds }
    }

    pub fn get(&self, v: Var) -> Option<f64> {
        match v {
            Var::L => self.l,
            Var::Ic => self.ic,
            Var::Rf => self.rf,
            Var::Lf => self.lf,
            Var::R2 => self.r2,
            Var::C4 => self.c4,
        }
    }

    fn set(&mut self, v: Var, x: f64) {
        let slot = match v {
            Var::L => &mut self.l,
            Var::Ic => &mut self.ic,
            Var::Rf => &mut self.rf,
            Var::Lf => &mut self.lf,
            Var::R2 => &mut self.r2,
            Var::C4 => &mut self.c4,
        };
        *slot = Some(x);
    }

    /// Set variables that lie outside their bounds.
    pub fn out_of_bounds(&self) -> Vec<Var> {
        [Var::L, Var::Ic, Var::Rf, Var::Lf, Var::R2, Var::C4]
            .into_iter()
            .filter(|&v| self.get(v).is_some_and(|x| !self.bounds.contains(v, x)))
            .collect()
    }
}

/// Which zero is placed on which pole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Z1 on P1, Z2 on P2.
    Paper,
    /// Z1 on P2, Z2 on P1.
    Swapped,
    /// Both pairings; the lower residual wins, `Paper` on ties.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    /// `|Re Zin - target|`, ohms.
    pub input_match_ohm: Option<f64>,
    /// Relative distance from Z1 to its paired pole (P1 under `Paper`).
    pub z1p1_rel: Option<f64>,
    /// Relative distance from Z2 to its paired pole (P2 under `Paper`).
    pub z2p2_rel: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub variables: DesignVariables,
    pub residuals: Residuals,
    /// Pairing actually used by the cancellation search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairing: Option<Pairing>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flatness_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nf_db_band: Option<(f64, f64)>,
    pub converged: bool,
    pub iterations: usize,
}

/// Which variable closes the input match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MatchFree {
    /// Closed form in the degeneration inductance.
    L,
    /// Bisection in collector current at fixed `L`. `C_pi = tau_f g_m + c_je`
    /// couples the ratio `g_m / C_pi` to the bias.
    Ic { tau_f: f64, c_je: f64, t: f64 },
}

/// Solves `r_b + L g_m / C_pi = target` for the free variable.
///
/// `target == r_b` returns `L = 0` (no degeneration), which is accepted even
/// though it lies below any positive lower bound.
pub fn solve_input_match(
    p: &InputStageParams,
    target: f64,
    free: MatchFree,
    bounds: &VariableBounds,
) -> Result<DesignVariables> {
    bounds.validate()?;
    if !(target >= p.rb) {
        return Err(Error::Infeasible(format!(
            "target {target} ohm is below r_b = {} ohm; no positive L exists",
            p.rb
        )));
    }
    let mut out = DesignVariables::empty(*bounds);
    match free {
        MatchFree::L => {
            let l = (target - p.rb) * p.cpi / p.gm;
            if l > 0.0 && !bounds.contains(Var::L, l) {
                return Err(Error::Infeasible(format!("required L = {l:e} H lies outside [{:e}, {:e}]", bounds.l.0, bounds.l.1)));
            }
            out.l = Some(l);
            out.ic = Some(p.gm * K_BOLTZMANN * p.device().t / Q_ELECTRON);
        }
        MatchFree::Ic { tau_f, c_je, t } => {
            if !(tau_f > 0.0 && c_je >= 0.0 && t > 0.0) {
                return Err(Error::Domain("tau_f must be positive and c_je nonnegative".into()));
            }
            let re = |ic: f64| {
                let gm = ic * Q_ELECTRON / (K_BOLTZMANN * t);
                p.rb + p.l * gm / (tau_f * gm + c_je) - target
            };
            // monotone increasing in I_C
            let (mut a, mut b) = (bounds.ic.0.ln(), bounds.ic.1.ln());
            let (fa, fb) = (re(a.exp()), re(b.exp()));
            if fa > 0.0 || fb < 0.0 {
                return Err(Error::Infeasible(format!(
                    "Re(Zin) spans [{:.6}, {:.6}] ohm over the I_C bounds; target {target} not reachable",
                    fa + target,
                    fb + target
                )));
            }
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if re(m.exp()) < 0.0 {
                    a = m;
                } else {
                    b = m;
                }
                if b - a < 1e-15 {
                    break;
                }
            }
            out.ic = Some((0.5 * (a + b)).exp());
            out.l = Some(p.l);
        }
    }
    Ok(out)
}

/// `|z - p| / max(|p|, omega_ref)`; infinite when the zero does not exist.
fn rel(z: f64, p: f64) -> f64 {
    if !z.is_finite() || !p.is_finite() {
        return f64::INFINITY;
    }
    (z - p).abs() / p.abs().max(OMEGA_REF)
}

/// Residuals `(Z1 vs its pole, Z2 vs its pole)` for a pairing.
pub fn cancellation_residuals(in_p: &InputStageParams, out_p: &OutputStageParams, pairing: Pairing) -> (f64, f64) {
    let Ok(r) = output_stage_zeros_pole(out_p) else {
        return (f64::INFINITY, f64::INFINITY);
    };
    let p1 = in_p.p1();
    match pairing {
        Pairing::Swapped => (rel(r.z1, r.p2), rel(r.z2, p1)),
        _ => (rel(r.z1, p1), rel(r.z2, r.p2)),
    }
}

/// `num_z den_p - num_p den_z` for both pairs; zero when the zero sits on its pole.
fn pair_equations(in_p: &InputStageParams, out_p: &OutputStageParams, pairing: Pairing) -> [f64; 2] {
    let (n1, d1) = z1_parts(out_p);
    let (n2, d2) = p2_parts(out_p);
    let (z1, z2) = ((n1, d1), (out_p.rf, out_p.lf));
    let p1 = (1.0, in_p.gm * in_p.l);
    let p2 = (n2, d2);
    let cross = |z: (f64, f64), p: (f64, f64)| z.0 * p.1 - p.0 * z.1;
    match pairing {
        Pairing::Swapped => [cross(z1, p2), cross(z2, p1)],
        _ => [cross(z1, p1), cross(z2, p2)],
    }
}

/// Real roots of `c t^2 + b t + a`.
fn quadratic_roots(c: f64, b: f64, a: f64) -> Vec<f64> {
    let scale = c.abs().max(b.abs()).max(a.abs());
    if scale == 0.0 || !scale.is_finite() {
        return Vec::new();
    }
    if c.abs() <= 1e-14 * scale {
        return if b != 0.0 { vec![-a / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * c * a;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut r = Vec::new();
    if q != 0.0 {
        r.push(q / c);
        r.push(a / q);
    } else {
        r.push(0.0);
    }
    r
}

fn objective(in_p: &InputStageParams, out_p: &OutputStageParams, pairing: Pairing) -> f64 {
    let (a, b) = cancellation_residuals(in_p, out_p, pairing);
    a.max(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CancellationOptions {
    pub pairing: Pairing,
    pub bounds: VariableBounds,
    pub target: f64,
    /// Coordinate-descent sweeps per start.
    pub max_sweeps: usize,
    /// Input-match target used for the report's match residual.
    pub match_target: f64,
}

impl Default for CancellationOptions {
    fn default() -> Self {
        CancellationOptions {
            pairing: Pairing::Auto,
            bounds: VariableBounds::default(),
            target: CANCELLATION_TARGET,
            max_sweeps: 400,
            match_target: 50.0,
        }
    }
}

fn get_out(p: &OutputStageParams, v: Var) -> f64 {
    match v {
        Var::Rf => p.rf,
        Var::Lf => p.lf,
        Var::R2 => p.r2,
        Var::C4 => p.c4,
        _ => unreachable!("not a feedback variable"),
    }
}

fn set_out(p: &mut OutputStageParams, v: Var, x: f64) {
    match v {
        Var::Rf => p.rf = x,
        Var::Lf => p.lf = x,
        Var::R2 => p.r2 = x,
        Var::C4 => p.c4 = x,
        _ => unreachable!("not a feedback variable"),
    }
}

/// Radical-inverse (Halton) point `index` in `dims` dimensions.
fn halton(index: usize, dims: usize) -> Vec<f64> {
    const PRIMES: [usize; 4] = [2, 3, 5, 7];
    (0..dims)
        .map(|d| {
            let base = PRIMES[d];
            let (mut i, mut f, mut r) = (index, 1.0, 0.0);
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}

/// Number of multi-start grid points tried in addition to the given seed.
pub const MULTI_STARTS: usize = 8;

struct Search<'a> {
    in_p: &'a InputStageParams,
    base: OutputStageParams,
    free: &'a [Var],
    lo: Vec<f64>,
    hi: Vec<f64>,
    bounds: VariableBounds,
    pairing: Pairing,
}

impl Search<'_> {
    fn params(&self, u: &[f64]) -> OutputStageParams {
        let mut p = self.base;
        for (k, &v) in self.free.iter().enumerate() {
            let (lo, hi) = self.bounds.get(v);
            // exp(ln(hi)) can land an ulp outside
            set_out(&mut p, v, u[k].exp().clamp(lo, hi));
        }
        p
    }

    /// Smooth surrogate minimized by the line searches.
    fn smooth(&self, u: &[f64]) -> f64 {
        let (a, b) = cancellation_residuals(self.in_p, &self.params(u), self.pairing);
        let v = a * a + b * b;
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    fn residual(&self, u: &[f64]) -> f64 {
        objective(self.in_p, &self.params(u), self.pairing)
    }

    fn clamp(&self, u: &mut [f64]) {
        for k in 0..u.len() {
            u[k] = u[k].clamp(self.lo[k], self.hi[k]);
        }
    }

    /// Each zero and pole is `-num/den` with `num`, `den` affine in any single
    /// variable, so along one axis `num_z den_p - num_p den_z` is a quadratic.
    /// Its positive roots are the exact placements and join the line search
    /// as candidates.
    fn root_steps(&self, u: &[f64], k: usize) -> Vec<f64> {
        let x0 = u[k].exp();
        let eqs = |x: f64| {
            let mut p = self.params(u);
            set_out(&mut p, self.free[k], x);
            pair_equations(self.in_p, &p, self.pairing)
        };
        let (e0, e1, e2) = (eqs(0.0), eqs(x0), eqs(2.0 * x0));
        let mut out = Vec::new();
        for j in 0..2 {
            let (a, m, q) = (e0[j], e1[j], e2[j]);
            let c = 0.5 * (q - 2.0 * m + a);
            let b = m - a - c;
            for t in quadratic_roots(c, b, a) {
                if t > 0.0 {
                    out.push((t * x0).ln() - u[k]);
                }
            }
        }
        out
    }

    /// Golden-section minimum of `t -> smooth(u + t d)` on `[a, b]`, after a
    /// coarse scan that picks the bracketing cell.
    fn line(&self, u: &[f64], d: &[f64], a: f64, b: f64, extra: &[f64]) -> (f64, f64) {
        let at = |t: f64| {
            let x: Vec<f64> = u.iter().zip(d).map(|(ui, di)| ui + t * di).collect();
            self.smooth(&x)
        };
        const SCAN: usize = 16;
        let h = (b - a) / SCAN as f64;
        let mut best = (0.0, at(0.0));
        let mut cell = (a.max(-h).min(0.0), b.min(h).max(0.0));
        let scan = (0..=SCAN).map(|k| a + h * k as f64);
        for t in scan.chain(extra.iter().copied().filter(|t| *t >= a && *t <= b)) {
            let f = at(t);
            if f < best.1 {
                best = (t, f);
                cell = ((t - h).max(a), (t + h).min(b));
            }
        }
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = cell;
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let (mut f1, mut f2) = (at(x1), at(x2));
        for _ in 0..80 {
            if hi - lo <= 1e-13 * (1.0 + lo.abs().max(hi.abs())) {
                break;
            }
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = at(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = at(x2);
            }
        }
        for (t, f) in [(x1, f1), (x2, f2)] {
            if f < best.1 {
                best = (t, f);
            }
        }
        best
    }

    /// Coordinate descent with an extra pattern step after each sweep.
    fn descend(&self, start: Vec<f64>, max_sweeps: usize, target: f64) -> (Vec<f64>, usize) {
        let n = start.len();
        let mut u = start;
        self.clamp(&mut u);
        let mut f = self.smooth(&u);
        let mut sweeps = 0;
        let mut stall = 0;
        while sweeps < max_sweeps && self.residual(&u) >= target * 1e-3 {
            sweeps += 1;
            let before = u.clone();
            let f_before = f;
            for k in 0..n {
                let mut d = vec![0.0; n];
                d[k] = 1.0;
                let roots = self.root_steps(&u, k);
                let (t, ft) = self.line(&u, &d, self.lo[k] - u[k], self.hi[k] - u[k], &roots);
                if ft < f {
                    u[k] += t;
                    f = ft;
                }
            }
            let d: Vec<f64> = u.iter().zip(&before).map(|(a, b)| a - b).collect();
            if d.iter().any(|x| *x != 0.0) {
                // largest step along d that stays in the box
                let mut tmax = 8.0f64;
                let mut tmin = -1.0f64;
                for k in 0..n {
                    if d[k] > 0.0 {
                        tmax = tmax.min((self.hi[k] - u[k]) / d[k]);
                        tmin = tmin.max((self.lo[k] - u[k]) / d[k]);
                    } else if d[k] < 0.0 {
                        tmax = tmax.min((self.lo[k] - u[k]) / d[k]);
                        tmin = tmin.max((self.hi[k] - u[k]) / d[k]);
                    }
                }
                if tmax > tmin {
                    let (t, ft) = self.line(&u, &d, tmin, tmax, &[]);
                    if ft < f {
                        for k in 0..n {
                            u[k] += t * d[k];
                        }
                        self.clamp(&mut u);
                        f = self.smooth(&u);
                    }
                }
            }
            if f >= f_before * (1.0 - 1e-10) {
                stall += 1;
                if stall >= 3 {
                    break;
                }
            } else {
                stall = 0;
            }
        }
        (u, sweeps)
    }
}

/// Places the feedback-network zeros on the input-stage and output-stage
/// poles by adjusting the `free` subset of `{R_f, L_f, R_2, C_4}`.
///
/// `out_p` supplies the fixed values and the first start point. The search
/// runs from that point and from [`MULTI_STARTS`] Halton points of the
/// log-scaled box; the best end point (lowest residual, then lowest start
/// index) is returned. A start that already meets the target is returned
/// untouched with zero iterations.
pub fn solve_cancellation(
    in_p: &InputStageParams,
    out_p: &OutputStageParams,
    free: &[Var],
    opts: &CancellationOptions,
) -> Result<DesignReport> {
    opts.bounds.validate()?;
    let mut free_sorted: Vec<Var> = free.to_vec();
    free_sorted.sort();
    free_sorted.dedup();
    if free_sorted.len() < 2 {
        return Err(Error::Usage("cancellation needs at least two free variables".into()));
    }
    if let Some(v) = free_sorted.iter().find(|v| !Var::FEEDBACK.contains(v)) {
        return Err(Error::Usage(format!("{} is not a feedback-network variable", v.name())));
    }
    if !(in_p.gm > 0.0 && in_p.l > 0.0) {
        return Err(Error::Domain("input stage needs g_m > 0 and L > 0 for P1 to exist".into()));
    }

    let pairings: &[Pairing] = match opts.pairing {
        Pairing::Auto => &[Pairing::Paper, Pairing::Swapped],
        Pairing::Paper => &[Pairing::Paper],
        Pairing::Swapped => &[Pairing::Swapped],
    };

    let mut best: Option<(f64, OutputStageParams, Pairing, usize)> = None;
    let mut total_iters = 0;
    for &pairing in pairings {
        let s = Search {
            in_p,
            base: *out_p,
            free: &free_sorted,
            lo: free_sorted.iter().map(|&v| opts.bounds.get(v).0.ln()).collect(),
            hi: free_sorted.iter().map(|&v| opts.bounds.get(v).1.ln()).collect(),
            bounds: opts.bounds,
            pairing,
        };
        let seed: Vec<f64> = free_sorted.iter().map(|&v| get_out(out_p, v).max(f64::MIN_POSITIVE).ln()).collect();
        let seed_in_bounds = free_sorted.iter().all(|&v| opts.bounds.contains(v, get_out(out_p, v)));
        if seed_in_bounds && s.residual(&seed) < opts.target {
            let r = s.residual(&seed);
            if best.as_ref().is_none_or(|b| r < b.0) {
                best = Some((r, *out_p, pairing, 0));
            }
            continue;
        }
        let mut starts = vec![seed];
        for i in 1..=MULTI_STARTS {
            let h = halton(i, free_sorted.len());
            starts.push((0..h.len()).map(|k| s.lo[k] + h[k] * (s.hi[k] - s.lo[k])).collect());
        }
        for start in starts {
            let (u, it) = s.descend(start, opts.max_sweeps, opts.target);
            total_iters += it;
            let r = s.residual(&u);
            if best.as_ref().is_none_or(|b| r < b.0) {
                best = Some((r, s.params(&u), pairing, it));
            }
        }
    }
    let (r, sol, pairing, _) = best.expect("at least one start");
    let iterations = if r < opts.target && total_iters == 0 { 0 } else { total_iters };
    let (a, b) = cancellation_residuals(in_p, &sol, pairing);
    let mut vars = DesignVariables::empty(opts.bounds);
    for v in Var::FEEDBACK {
        vars.set(v, get_out(&sol, v));
    }
    vars.l = Some(in_p.l);
    let match_err = (in_p.rb + in_p.l * in_p.gm / in_p.cpi - opts.match_target).abs();
    let converged = r < opts.target && match_err <= MATCH_TARGET * opts.match_target;
    Ok(DesignReport {
        variables: vars,
        residuals: Residuals { input_match_ohm: Some(match_err), z1p1_rel: Some(a), z2p2_rel: Some(b) },
        pairing: Some(pairing),
        flatness_db: None,
        nf_db_band: None,
        converged,
        iterations,
    })
}

/// Source impedance used by [`noise_optimize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SourceImpedance {
    Fixed(Complex64),
    /// Follows `Zopt` at every frequency.
    Optimum,
}

/// Device at another collector current with the transit frequency held.
pub fn rebias(p: &HybridPiParams, ic: f64) -> Result<HybridPiParams> {
    let gm = gm_from_bias(ic, p.t)?;
    let cpi = cpi_from_ft(gm, p.omega_t(), p.cbc)?;
    let q = HybridPiParams { gm, cpi, ic, ..*p };
    q.validate()?;
    Ok(q)
}

/// Band NF (linear) of the closed-form noise model at one bias.
pub fn band_nf(p: &HybridPiParams, le: f64, zs: SourceImpedance, grid: &FrequencyGrid, formula: NoiseFormula) -> Result<Vec<f64>> {
    grid.points()
        .iter()
        .map(|&f| {
            let w = 2.0 * PI * f;
            let np = noise_parameters_with(p, le, w, formula)?;
            let z = match zs {
                SourceImpedance::Fixed(z) => z,
                SourceImpedance::Optimum => np.zopt,
            };
            nf_from_params_with(&np, z, w, p, formula)
        })
        .collect()
}

/// Golden-section search over `ln I_C` for the lowest band-averaged noise
/// factor. The transit frequency of `p` is held fixed as the bias moves.
pub fn noise_optimize(
    p: &HybridPiParams,
    le: f64,
    zs: SourceImpedance,
    grid: &FrequencyGrid,
    ic_bounds: (f64, f64),
    formula: NoiseFormula,
) -> Result<DesignReport> {
    let (lo, hi) = ic_bounds;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Infeasible(format!("I_C bounds [{lo:e}, {hi:e}] are empty or nonpositive")));
    }
    let cost = |u: f64| -> Result<f64> {
        let nf = band_nf(&rebias(p, u.exp())?, le, zs, grid, formula)?;
        Ok(nf.iter().sum::<f64>() / nf.len() as f64)
    };
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (cost(x1)?, cost(x2)?);
    let mut iterations = 0;
    while b - a > 1e-10 {
        iterations += 1;
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = cost(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = cost(x2)?;
        }
    }
    let mut u = if f1 < f2 { x1 } else { x2 };
    // the interior minimum may lose to an edge on a monotone objective
    for edge in [lo.ln(), hi.ln()] {
        if cost(edge)? < cost(u)? {
            u = edge;
        }
    }
    let ic = u.exp().clamp(lo, hi);
    let nf = band_nf(&rebias(p, ic)?, le, zs, grid, formula)?;
    let min = nf.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = nf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut bounds = VariableBounds::default();
    bounds.ic = ic_bounds;
    let mut vars = DesignVariables::empty(bounds);
    vars.ic = Some(ic);
    vars.l = Some(le);
    Ok(DesignReport {
        variables: vars,
        residuals: Residuals::default(),
        pairing: None,
        flatness_db: None,
        nf_db_band: Some((to_db(min), to_db(max))),
        converged: true,
        iterations,
    })
}

/// Half-ripple of |S21| in dB over `band` from a 401-point linear sweep.
pub fn flatness_score(c: &Circuit, band: (f64, f64)) -> Result<f64> {
    let grid = FrequencyGrid::linear(band.0, band.1, FLATNESS_POINTS)?;
    flatness_score_on(c, &grid, band)
}

/// As [`flatness_score`] on a caller-supplied grid; fails when the grid does
/// not cover `band`.
pub fn flatness_score_on(c: &Circuit, grid: &FrequencyGrid, band: (f64, f64)) -> Result<f64> {
    let s = two_port_sparams(c, grid)?;
    gain_flatness(&s, band)
}

/// `Re Zin` error of the closed form at `w`, ohms.
pub fn input_match_error(p: &InputStageParams, target: f64, w: f64) -> f64 {
    (zin_analytic(p, w).re - target).abs()
}

/// UWB band edges, hertz.
pub const UWB_BAND: (f64, f64) = (3.1e9, 10.6e9);

/// Load resistance standing in for an absent `RL`; P2 does not depend on it.
const OPEN_RL: f64 = 1e12;

/// Input-stage symbols of a full-LNA parameter set (Q1 with `L1`).
pub fn input_stage_of(params: &TopologyParams) -> Result<InputStageParams> {
    let q1 = params.device_for("Q1").to_params()?;
    Ok(InputStageParams { rb: q1.rb, gm: q1.gm, cpi: q1.cpi, l: params.get("L1")?, rs: params.z0 })
}

/// Output-stage symbols of a full-LNA parameter set (Q3 with its feedback
/// network; `L_f` is `L3`).
pub fn output_stage_of(params: &TopologyParams) -> Result<OutputStageParams> {
    let q3 = params.device_for("Q3").to_params()?;
    Ok(OutputStageParams {
        gm3: q3.gm,
        rf: params.get("RF")?,
        lf: params.get("L3")?,
        r2: params.get("R2")?,
        c4: params.get("C4")?,
        rl: params.elements.get("RL").copied().unwrap_or(OPEN_RL),
        l4: params.get("L4")?,
        cpi3: q3.cpi,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignOptions {
    pub cancellation: CancellationOptions,
    pub free: Vec<Var>,
    pub band: (f64, f64),
    /// Solve `L1` for the input match before the cancellation search.
    pub match_input: bool,
    /// Also compute the band NF of the solved circuit.
    pub noise: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            cancellation: CancellationOptions::default(),
            free: Var::FEEDBACK.to_vec(),
            band: UWB_BAND,
            match_input: true,
            noise: true,
        }
    }
}

/// Input match, then cancellation, then flatness on the full LNA.
///
/// Returns the report and the updated parameter set. A non-converged search
/// still yields its best point.
pub fn design_full_lna(params: &TopologyParams, opts: &DesignOptions) -> Result<(DesignReport, TopologyParams)> {
    let mut solved = params.clone();
    let mut in_p = input_stage_of(params)?;
    if opts.match_input {
        let m = solve_input_match(&in_p, params.z0, MatchFree::L, &opts.cancellation.bounds)?;
        in_p.l = m.l.expect("L solved");
        solved.set("L1", in_p.l)?;
    }
    let mut copts = opts.cancellation;
    copts.match_target = params.z0;
    let mut report = solve_cancellation(&in_p, &output_stage_of(params)?, &opts.free, &copts)?;
    let v = report.variables;
    for (label, x) in [("RF", v.rf), ("L3", v.lf), ("R2", v.r2), ("C4", v.c4)] {
        solved.set(label, x.expect("feedback variables reported"))?;
    }
    report.variables.ic = Some(params.device_for("Q1").ic);
    let c = build_topology(Topology::FullLnaFig8, &solved)?;
    report.flatness_db = Some(flatness_score(&c, opts.band)?);
    if opts.noise {
        let grid = FrequencyGrid::linear(opts.band.0, opts.band.1, FLATNESS_POINTS)?;
        let nf = noise_correlation_nf(&c, &grid, Complex64::new(params.z0, 0.0))?;
        let lo = nf.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = nf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        report.nf_db_band = Some((to_db(lo), to_db(hi)));
    }
    Ok((report, solved))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input() -> InputStageParams {
        InputStageParams { rb: 5.0, gm: 0.04, cpi: 0.04 * 0.28e-9 / 45.0, l: 0.28e-9, rs: 50.0 }
    }

    fn output() -> OutputStageParams {
        OutputStageParams { gm3: 0.08, rf: 300.0, lf: 2e-9, r2: 100.0, c4: 1e-12, rl: 200.0, l4: 2e-9, cpi3: 0.5e-12 }
    }

    #[test]
    fn input_match_closed_form() {
        let p = InputStageParams { rb: 5.0, gm: 1.607e11, cpi: 1.0, l: 0.0, rs: 50.0 };
        let v = solve_input_match(&p, 50.0, MatchFree::L, &VariableBounds::default()).unwrap();
        assert!((v.l.unwrap() - 0.28e-9).abs() < 1e-3 * 0.28e-9);
        let back = InputStageParams { l: v.l.unwrap(), ..p };
        assert!((zin_analytic(&back, 1e10).re - 50.0).abs() <= 1e-9 * 50.0);

        assert_eq!(solve_input_match(&p, 5.0, MatchFree::L, &VariableBounds::default()).unwrap().l, Some(0.0));
        assert!(matches!(
            solve_input_match(&p, 4.0, MatchFree::L, &VariableBounds::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn input_match_by_bias() {
        let p = InputStageParams { l: 0.3e-9, ..input() };
        let free = MatchFree::Ic { tau_f: 4e-12, c_je: 100e-15, t: 300.0 };
        let v = solve_input_match(&p, 50.0, free, &VariableBounds::default()).unwrap();
        let gm = v.ic.unwrap() * Q_ELECTRON / (K_BOLTZMANN * 300.0);
        let solved = InputStageParams { gm, cpi: 4e-12 * gm + 100e-15, ..p };
        assert!((zin_analytic(&solved, 1e10).re - 50.0).abs() < 1e-9 * 50.0);
        // 0.3 nH / 4 ps caps the degeneration term at 75 ohm
        assert!(solve_input_match(&p, 90.0, free, &VariableBounds::default()).is_err());
    }

    #[test]
    fn fixed_point_seed_needs_no_search() {
        let i = input();
        let free = [Var::Rf, Var::Lf, Var::R2, Var::C4];
        let opts = CancellationOptions { pairing: Pairing::Swapped, ..Default::default() };
        let tuned = solve_cancellation(&i, &output(), &free, &opts).unwrap();
        assert!(tuned.converged, "{tuned:?}");
        let v = tuned.variables;
        let seed = OutputStageParams { rf: v.rf.unwrap(), lf: v.lf.unwrap(), r2: v.r2.unwrap(), c4: v.c4.unwrap(), ..output() };
        let again = solve_cancellation(&i, &seed, &free, &opts).unwrap();
        assert_eq!(again.iterations, 0);
        assert_eq!(again.variables, v);
    }

    #[test]
    fn swapped_pairing_fixes_rf_over_lf() {
        let i = input();
        let opts = CancellationOptions { pairing: Pairing::Swapped, ..Default::default() };
        let r = solve_cancellation(&i, &output(), &[Var::Rf, Var::Lf, Var::R2, Var::C4], &opts).unwrap();
        assert!(r.converged, "{r:?}");
        let ratio = r.variables.rf.unwrap() / r.variables.lf.unwrap();
        // Z2 = -Rf/Lf placed on P1 = -1/(gm L)
        assert!((ratio - 1.0 / (0.04 * 0.28e-9)).abs() < 1e-3 * ratio);
        assert!((ratio - 8.929e10).abs() < 1e-3 * 8.929e10);
        assert!(r.variables.out_of_bounds().is_empty());
    }

    #[test]
    fn cancellation_is_deterministic_and_beats_seeds() {
        let i = input();
        let opts = CancellationOptions::default();
        let free = [Var::Rf, Var::Lf, Var::R2, Var::C4];
        let a = solve_cancellation(&i, &output(), &free, &opts).unwrap();
        let b = solve_cancellation(&i, &output(), &free, &opts).unwrap();
        assert_eq!(a, b);
        let sol = OutputStageParams {
            rf: a.variables.rf.unwrap(),
            lf: a.variables.lf.unwrap(),
            r2: a.variables.r2.unwrap(),
            c4: a.variables.c4.unwrap(),
            ..output()
        };
        let best = objective(&i, &sol, a.pairing.unwrap());
        assert!(best <= objective(&i, &output(), a.pairing.unwrap()));
    }

    #[test]
    fn cancellation_rejects_bad_requests() {
        let opts = CancellationOptions::default();
        assert!(solve_cancellation(&input(), &output(), &[Var::Rf], &opts).is_err());
        assert!(solve_cancellation(&input(), &output(), &[Var::Rf, Var::L], &opts).is_err());
        let mut bad = opts;
        bad.bounds.rf = (0.0, 1.0);
        assert!(solve_cancellation(&input(), &output(), &[Var::Rf, Var::Lf], &bad).is_err());
    }

    #[test]
    fn noise_optimum_at_zopt_is_floor() {
        let p = HybridPiParams::from_bias_ft(4e-3, 300.0, 150.0, 5.0, 25e9, 0.0).unwrap();
        let grid = FrequencyGrid::linear(3.1e9, 10.6e9, 11).unwrap();
        let r = noise_optimize(&p, 0.3e-9, SourceImpedance::Optimum, &grid, (0.1e-3, 20e-3), NoiseFormula::Transcribed).unwrap();
        let q = rebias(&p, r.variables.ic.unwrap()).unwrap();
        let floor: Vec<f64> = grid
            .points()
            .iter()
            .map(|&f| noise_parameters_with(&q, 0.3e-9, 2.0 * PI * f, NoiseFormula::Transcribed).unwrap().nfmin)
            .collect();
        let (lo, hi) = r.nf_db_band.unwrap();
        let fl = floor.iter().cloned().fold(f64::INFINITY, f64::min);
        let fh = floor.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((lo - to_db(fl)).abs() < 1e-12 && (hi - to_db(fh)).abs() < 1e-12);
    }

    #[test]
    fn noise_optimum_brackets_grid_search() {
        let p = HybridPiParams::from_bias_ft(4e-3, 300.0, 150.0, 8.0, 25e9, 10e-15).unwrap();
        let grid = FrequencyGrid::linear(3.1e9, 10.6e9, 16).unwrap();
        let zs = SourceImpedance::Fixed(Complex64::new(50.0, 0.0));
        let bounds = (0.1e-3, 20e-3);
        let r = noise_optimize(&p, 0.3e-9, zs, &grid, bounds, NoiseFormula::Transcribed).unwrap();
        let cost = |ic: f64| {
            let nf = band_nf(&rebias(&p, ic).unwrap(), 0.3e-9, zs, &grid, NoiseFormula::Transcribed).unwrap();
            nf.iter().sum::<f64>() / nf.len() as f64
        };
        let ics: Vec<f64> = (0..100).map(|k| (bounds.0.ln() + (bounds.1 / bounds.0).ln() * k as f64 / 99.0).exp()).collect();
        let k = (0..100).min_by(|&a, &b| cost(ics[a]).total_cmp(&cost(ics[b]))).unwrap();
        let ic = r.variables.ic.unwrap();
        assert!(ic >= ics[k.saturating_sub(1)] && ic <= ics[(k + 1).min(99)]);
        assert!(cost(ic) <= cost(ics[k]) + 1e-12);
        assert!(noise_optimize(&p, 0.3e-9, zs, &grid, (1e-3, 1e-3), NoiseFormula::Transcribed).is_err());
    }

    #[test]
    fn flatness_of_attenuator_is_zero() {
        let mut c = Circuit::new("pad");
        c.resistor("R1", "in", "out", 50.0).resistor("R2", "out", "0", 100.0);
        c.port("in", "0", 50.0).port("out", "0", 50.0);
        assert!(flatness_score(&c, (3.1e9, 10.6e9)).unwrap().abs() < 1e-12);
        let grid = FrequencyGrid::linear(3.1e9, 5e9, 11).unwrap();
        assert!(matches!(flatness_score_on(&c, &grid, (3.1e9, 10.6e9)), Err(Error::Grid(_))));
        assert!(flatness_score(&c, (10.6e9, 3.1e9)).is_err());
    }
}
