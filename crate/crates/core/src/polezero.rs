//! Rational transfer functions, poles and zeros.
//!
//! Two independent routes are provided:
//!
//! - [`transfer_function`] interpolates `det A(s)` and `H(s) det A(s)` on a
//!   circle in the complex plane and recovers exact polynomial coefficients;
//!   [`factor`] then finds their roots.
//! - [`poles_of`] and [`zeros_of`] take the finite generalized eigenvalues of
//!   the MNA pencil and of the system (Rosenbrock) pencil directly.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{expand_devices, Circuit, ComponentKind};
use crate::error::{Error, Result};
use crate::mna::{assemble, AcSystem, MnaPencil};

/// Regularizing frequency of the cancellation residual, rad/s (6.5 GHz).
pub const OMEGA_REF: f64 = 2.0 * PI * 6.5e9;

/// Relative pole/zero distance below which a pair counts as cancelled.
pub const CANCELLATION_TOL: f64 = 1e-3;

/// Relative distance at which interpolated numerator and denominator roots
/// are treated as the same (non-minimal) mode.
pub const COMMON_ROOT_TOL: f64 = 1e-6;

// Coefficients below this fraction of the largest one, in the frequency
// scaled variable, are interpolation noise.
const TRIM_TOL: f64 = 1e-12;

const CONJ_TOL: f64 = 1e-9;

/// Ratio of two real polynomials in `s`, coefficients in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalTF {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    /// Modes present in both numerator and denominator before reduction
    /// (uncontrollable or unobservable from the chosen input/output).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub non_minimal: Vec<Complex64>,
}

impl RationalTF {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if den.iter().all(|&d| d == 0.0) {
            return Err(Error::Domain("zero denominator polynomial".into()));
        }
        Ok(RationalTF { num, den, non_minimal: Vec::new() })
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly_eval(&self.num, s) / poly_eval(&self.den, s)
    }

    pub fn num_degree(&self) -> usize {
        degree(&self.num)
    }

    pub fn den_degree(&self) -> usize {
        degree(&self.den)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleZeroSet {
    pub poles: Vec<Complex64>,
    pub zeros: Vec<Complex64>,
    /// Ratio of the leading numerator and denominator coefficients.
    pub gain: f64,
}

/// One row of a pole/zero cancellation report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cancellation {
    pub pole: Complex64,
    pub zero: Option<Complex64>,
    /// `|p - z| / max(|p|, omega_ref)`; infinite when no zero is left.
    pub residual: f64,
}

pub fn poly_eval(c: &[f64], s: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * s + a)
}

fn poly_eval_c(c: &[Complex64], s: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * s + a)
}

fn degree(c: &[f64]) -> usize {
    c.iter().rposition(|&a| a != 0.0).unwrap_or(0)
}

/// `lead * prod (s - r)`, ascending. Conjugate pairs give real coefficients.
pub fn poly_from_roots(roots: &[Complex64], lead: f64) -> Vec<f64> {
    let mut c = vec![Complex64::new(lead, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (k, &a) in c.iter().enumerate() {
            next[k + 1] += a;
            next[k] -= a * r;
        }
        c = next;
    }
    c.iter().map(|z| z.re).collect()
}

/// Roots of a real polynomial (ascending coefficients).
///
/// Exact zero coefficients at the low end give roots at the origin. The
/// rest are eigenvalues of the companion matrix of the polynomial in the
/// scaled variable `s / rho`, `rho = (|a_low| / |a_high|)^(1/deg)`, each
/// polished by Newton steps on the original polynomial.
pub fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let mut a: Vec<f64> = coeffs.to_vec();
    while a.last() == Some(&0.0) {
        a.pop();
    }
    if a.len() <= 1 {
        return Vec::new();
    }
    let zeros = a.iter().position(|&x| x != 0.0).unwrap_or(0);
    let mut roots = vec![Complex64::new(0.0, 0.0); zeros];
    let mut a = a.split_off(zeros);
    // drop leading coefficients that are negligible in the scaled variable
    loop {
        let n = a.len() - 1;
        if n == 0 {
            return roots;
        }
        let rho = (a[0].abs() / a[n].abs()).powf(1.0 / n as f64);
        let scaled: Vec<f64> = a.iter().enumerate().map(|(k, &x)| x * rho.powi(k as i32)).collect();
        let max = scaled.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if scaled[n].abs() < 1e-14 * max {
            a.pop();
            continue;
        }
        let m = DMatrix::from_fn(n, n, |i, j| {
            if i == 0 {
                -scaled[n - 1 - j] / scaled[n]
            } else if i == j + 1 {
                1.0
            } else {
                0.0
            }
        });
        let ac: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let da: Vec<Complex64> = (1..ac.len()).map(|k| ac[k] * k as f64).collect();
        for u in m.complex_eigenvalues().iter() {
            roots.push(polish(&ac, &da, u * rho));
        }
        break;
    }
    symmetrize(&mut roots);
    sort_roots(&mut roots);
    roots
}

fn polish(a: &[Complex64], da: &[Complex64], mut r: Complex64) -> Complex64 {
    let mut best = poly_eval_c(a, r).norm();
    for _ in 0..8 {
        let d = poly_eval_c(da, r);
        if d.norm() == 0.0 || best == 0.0 {
            break;
        }
        let next = r - poly_eval_c(a, r) / d;
        let val = poly_eval_c(a, next).norm();
        if !(val < best) {
            break;
        }
        r = next;
        best = val;
    }
    r
}

/// Forces conjugate symmetry: near-real roots become real, near-conjugate
/// pairs are averaged. Multiplicities are kept.
pub fn symmetrize(roots: &mut [Complex64]) {
    let n = roots.len();
    let mut done = vec![false; n];
    for i in 0..n {
        if done[i] {
            continue;
        }
        let r = roots[i];
        let scale = r.norm();
        if r.im.abs() <= CONJ_TOL * scale {
            roots[i].im = 0.0;
            done[i] = true;
            continue;
        }
        let partner = (0..n)
            .filter(|&j| j != i && !done[j])
            .map(|j| (j, (roots[j] - r.conj()).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((j, d)) = partner {
            if d <= 1e-6 * scale {
                let re = 0.5 * (r.re + roots[j].re);
                let im = 0.5 * (r.im.abs() + roots[j].im.abs());
                roots[i] = Complex64::new(re, im.copysign(r.im));
                roots[j] = roots[i].conj();
                done[j] = true;
            }
        }
        done[i] = true;
    }
}

pub fn sort_roots(roots: &mut [Complex64]) {
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Poles, zeros and gain of a rational function.
pub fn factor(tf: &RationalTF) -> PoleZeroSet {
    let lead = |c: &[f64]| c.iter().rev().copied().find(|&x| x != 0.0).unwrap_or(0.0);
    PoleZeroSet {
        poles: poly_roots(&tf.den),
        zeros: poly_roots(&tf.num),
        gain: lead(&tf.num) / lead(&tf.den),
    }
}

/// Finite generalized eigenvalues of `G + s C`, i.e. the `s` where it is singular.
///
/// Infinite eigenvalues are removed structurally rather than filtered by
/// magnitude. Each pass rotates `C` to `diag(S, 0)` with an SVD, solves
/// the algebraic rows for whatever unknowns they determine, and when
/// pure constraints on the dynamic unknowns remain (index above one)
/// restricts to their null space and projects out the multipliers. The
/// loop ends with a dense eigenproblem of the size of the finite spectrum.
pub fn finite_eigenvalues(g: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let (mut g, mut c) = (g.clone(), c.clone());
    let mut eig = loop {
        let n = g.nrows();
        if n == 0 {
            break Vec::new();
        }
        let (u, sig, v) = svd_sorted(&c);
        let smax = sig[0];
        let r = sig.iter().filter(|&&x| x > 1e-12 * smax).count();
        if smax == 0.0 || r == 0 {
            break Vec::new();
        }
        let gh = u.transpose() * &g * &v;
        let scale = gh.amax().max(f64::MIN_POSITIVE);
        let s1 = &sig[..r];
        if r == n {
            break dense_eigs(&gh, s1);
        }
        let g11 = gh.view((0, 0), (r, r)).into_owned();
        let g12 = gh.view((0, r), (r, n - r)).into_owned();
        let g21 = gh.view((r, 0), (n - r, r)).into_owned();
        let g22 = gh.view((r, r), (n - r, n - r)).into_owned();
        let (p, gam, q) = svd_sorted(&g22);
        let k = gam.iter().filter(|&&x| x > 1e-10 * scale).count();
        let m = n - r - k;
        let p1 = p.columns(0, k).into_owned();
        let q1 = q.columns(0, k).into_owned();
        let g12a = &g12 * &q1;
        let g21a = p1.transpose() * &g21;
        let ginv = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 / gam[i] } else { 0.0 });
        let g11r = g11 - &g12a * ginv * g21a;
        if m == 0 {
            break dense_eigs(&g11r, s1);
        }
        let w = p.columns(k, m).transpose() * &g21;
        let g12b = &g12 * q.columns(k, m);
        let nw = null_space(&w.transpose(), scale)?;
        let ml = null_space(&g12b, scale)?;
        if nw.ncols() != r - m || ml.ncols() != r - m {
            return Err(Error::Eigen("pencil is singular (det vanishes identically)".into()));
        }
        let s1m = DMatrix::from_fn(r, r, |i, j| if i == j { s1[i] } else { 0.0 });
        g = ml.transpose() * g11r * &nw;
        c = ml.transpose() * s1m * &nw;
    };
    eig.retain(|z| z.re.is_finite() && z.im.is_finite());
    symmetrize(&mut eig);
    sort_roots(&mut eig);
    Ok(eig)
}

// eigenvalues of -diag(s)^-1 a
fn dense_eigs(a: &DMatrix<f64>, s: &[f64]) -> Vec<Complex64> {
    let n = s.len();
    let m = DMatrix::from_fn(n, n, |i, j| -a[(i, j)] / s[i]);
    m.complex_eigenvalues().iter().copied().collect()
}

// Full SVD of a matrix padded to square, singular values descending.
fn svd_sorted(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let n = a.nrows().max(a.ncols());
    let mut sq = DMatrix::zeros(n, n);
    sq.view_mut((0, 0), a.shape()).copy_from(a);
    let svd = sq.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let uo = DMatrix::from_fn(a.nrows(), n, |i, j| u[(i, order[j])]);
    let vo = DMatrix::from_fn(a.ncols(), n, |i, j| vt[(order[j], i)]);
    let s = order.iter().map(|&k| svd.singular_values[k]).collect();
    (uo, s, vo)
}

// Orthonormal basis of the left null space of `a` (vectors y with y^T a = 0).
fn null_space(a: &DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    let (u, s, _) = svd_sorted(a);
    let rank = s.iter().filter(|&&x| x > 1e-10 * scale).count();
    let rows = a.nrows();
    if rank > rows {
        return Err(Error::Eigen("rank exceeds dimension".into()));
    }
    Ok(u.columns(rank, rows - rank).into_owned())
}

/// Natural frequencies of an assembled pencil.
pub fn poles_of(p: &MnaPencil) -> Result<Vec<Complex64>> {
    finite_eigenvalues(&p.g, &p.c)
}

/// What drives the network in a transfer-function computation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Excitation {
    /// Unit value of the named independent V or I source.
    Source(String),
    /// 1 V EMF behind the reference impedance of port `k` (0-based); all
    /// ports are terminated.
    Port(usize),
    /// 1 A injected into `into`, drawn from `from`.
    Current { into: String, from: String },
}

/// The observed quantity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Response {
    Node(String),
    NodeDiff(String, String),
    /// Branch current of an inductor or voltage source.
    BranchCurrent(String),
    /// Current entering the network at port `k` from its termination.
    PortCurrent(usize),
    PortVoltage(usize),
}

/// A single-input single-output problem bound to an assembled pencil.
#[derive(Debug, Clone)]
pub struct SisoSystem {
    pub pencil: MnaPencil,
    pub b: DVector<f64>,
    pub out: DVector<f64>,
    /// Direct feed-through term.
    pub d: f64,
    dynamic_elements: usize,
}

impl SisoSystem {
    pub fn new(c: &Circuit, input: &Excitation, output: &Response) -> Result<Self> {
        let x = expand_devices(c);
        x.validate()?;
        let mut p = assemble(&x)?;
        let node = |name: &str| {
            x.find_node(name)
                .ok_or_else(|| Error::Domain(format!("unknown node '{name}'")))
        };
        let port = |k: usize| {
            x.ports
                .get(k)
                .copied()
                .ok_or_else(|| Error::Port(format!("port {} does not exist", k + 1)))
        };
        let b = match input {
            Excitation::Source(label) => {
                let comp = x
                    .component(label)
                    .ok_or_else(|| Error::Domain(format!("unknown source '{label}'")))?;
                match comp.kind {
                    ComponentKind::VSource { .. } => {
                        let mut b = DVector::zeros(p.dim());
                        b[p.branch_index(&comp.label).expect("V source has a branch")] = 1.0;
                        b
                    }
                    ComponentKind::ISource { .. } => {
                        p.current_injection(comp.terminals[1], comp.terminals[0], 1.0)
                    }
                    _ => return Err(Error::Domain(format!("'{label}' is not an independent source"))),
                }
            }
            Excitation::Port(k) => {
                let pt = port(*k)?;
                for other in &x.ports {
                    p.stamp_conductance(other.pos, other.neg, 1.0 / other.z0);
                }
                p.current_injection(pt.pos, pt.neg, 1.0 / pt.z0)
            }
            Excitation::Current { into, from } => p.current_injection(node(into)?, node(from)?, 1.0),
        };
        let unit = |p: &MnaPencil, a, b| p.current_injection(a, b, 1.0);
        let (out, d) = match output {
            Response::Node(n) => (unit(&p, node(n)?, crate::circuit::NodeId::GROUND), 0.0),
            Response::NodeDiff(a, b) => (unit(&p, node(a)?, node(b)?), 0.0),
            Response::BranchCurrent(label) => {
                let k = p
                    .branch_index(label)
                    .ok_or_else(|| Error::Domain(format!("'{label}' has no branch current")))?;
                let mut v = DVector::zeros(p.dim());
                v[k] = 1.0;
                (v, 0.0)
            }
            Response::PortVoltage(k) => {
                let pt = port(*k)?;
                (unit(&p, pt.pos, pt.neg), 0.0)
            }
            Response::PortCurrent(k) => {
                let pt = port(*k)?;
                let v = unit(&p, pt.pos, pt.neg) * (-1.0 / pt.z0);
                let d = if *input == Excitation::Port(*k) { 1.0 / pt.z0 } else { 0.0 };
                (v, d)
            }
        };
        let dynamic_elements = x
            .components
            .iter()
            .filter(|c| matches!(c.kind, ComponentKind::Capacitor { .. } | ComponentKind::Inductor { .. }))
            .count();
        Ok(SisoSystem { pencil: p, b, out, d, dynamic_elements })
    }

    /// Direct evaluation of `H(s)` by one linear solve.
    pub fn eval(&self, s: Complex64) -> Result<Complex64> {
        let sys = AcSystem::at(&self.pencil, s)?;
        let x = sys.solve(&self.b.map(|r| Complex64::new(r, 0.0)))?;
        Ok(self.apply_output(&x))
    }

    fn apply_output(&self, x: &DVector<Complex64>) -> Complex64 {
        self.out
            .iter()
            .zip(x.iter())
            .fold(Complex64::new(self.d, 0.0), |acc, (&o, &v)| acc + v * o)
    }

    /// Upper bound on the degree of `det A(s)` and of the numerator.
    pub fn degree_bound(&self) -> usize {
        self.pencil.dim().min(self.dynamic_elements)
    }

    /// Finite transmission zeros from the system pencil
    /// `[[G, b], [out^T, d]] + s [[C, 0], [0, 0]]`.
    pub fn zeros(&self) -> Result<Vec<Complex64>> {
        let n = self.pencil.dim();
        let mut g = DMatrix::zeros(n + 1, n + 1);
        let mut c = DMatrix::zeros(n + 1, n + 1);
        g.view_mut((0, 0), (n, n)).copy_from(&self.pencil.g);
        c.view_mut((0, 0), (n, n)).copy_from(&self.pencil.c);
        for i in 0..n {
            // Schur complement of A is d + out^T A^-1 b
            g[(i, n)] = -self.b[i];
            g[(n, i)] = self.out[i];
        }
        g[(n, n)] = self.d;
        finite_eigenvalues(&g, &c)
    }

    pub fn poles(&self) -> Result<Vec<Complex64>> {
        poles_of(&self.pencil)
    }
}

/// Exact rational `H(s)` from circle interpolation of the MNA solution.
///
/// With `m` the degree bound, `det A` and `H det A` are sampled at
/// `s_k = w0 exp(i(theta0 + 2 pi k / (m + 1)))` and the coefficients of the
/// polynomials in `s / w0` recovered by an inverse DFT. `w0` is the geometric
/// mean of the pencil's nonzero pole magnitudes. A sample that lands on a
/// singular point rotates `theta0` (up to 3 retries). Roots shared by
/// numerator and denominator to 1e-6 relative are removed and listed in
/// `non_minimal`.
pub fn transfer_function(c: &Circuit, input: &Excitation, output: &Response) -> Result<RationalTF> {
    let sys = SisoSystem::new(c, input, output)?;
    transfer_function_of(&sys)
}

pub fn transfer_function_of(sys: &SisoSystem) -> Result<RationalTF> {
    let m = sys.degree_bound();
    let poles = sys.poles().unwrap_or_default();
    // roots at the origin come out of the eigen solve as tiny nonzero values
    let largest = poles.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let nonzero: Vec<f64> = poles.iter().map(|p| p.norm()).filter(|&r| r > 1e-9 * largest).collect();
    let w0 = if nonzero.is_empty() {
        OMEGA_REF
    } else {
        (nonzero.iter().map(|r| r.ln()).sum::<f64>() / nonzero.len() as f64).exp()
    };

    let mut last_err = None;
    for attempt in 0..4 {
        let theta0 = 0.1 + 0.37 * attempt as f64;
        match sample_coefficients(sys, m, w0, theta0) {
            Ok((num_u, den_u)) => return Ok(assemble_tf(num_u, den_u, w0)),
            Err(e @ (Error::Singular { .. } | Error::Residual { .. })) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(Error::Interpolation(format!(
        "every sample rotation hit a singular point ({})",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

fn sample_coefficients(sys: &SisoSystem, m: usize, w0: f64, theta0: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = m + 1;
    let mut dvals = Vec::with_capacity(k);
    let mut nvals = Vec::with_capacity(k);
    for j in 0..k {
        let phi = theta0 + 2.0 * PI * j as f64 / k as f64;
        let s = Complex64::from_polar(w0, phi);
        let ac = AcSystem::at(&sys.pencil, s)?;
        let x = ac.solve(&sys.b.map(|r| Complex64::new(r, 0.0)))?;
        let det = ac.determinant();
        nvals.push(sys.apply_output(&x) * det);
        dvals.push(det);
    }
    let idft = |vals: &[Complex64]| -> Vec<f64> {
        (0..k)
            .map(|deg| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, v) in vals.iter().enumerate() {
                    let phi = theta0 + 2.0 * PI * j as f64 / k as f64;
                    acc += v * Complex64::from_polar(1.0, -(deg as f64) * phi);
                }
                acc.re / k as f64
            })
            .collect()
    };
    Ok((idft(&nvals), idft(&dvals)))
}

fn trim(c: &mut Vec<f64>, scale: f64) {
    for x in c.iter_mut() {
        if x.abs() <= TRIM_TOL * scale {
            *x = 0.0;
        }
    }
    while c.len() > 1 && c.last() == Some(&0.0) {
        c.pop();
    }
}

fn assemble_tf(mut num_u: Vec<f64>, mut den_u: Vec<f64>, w0: f64) -> RationalTF {
    let dmax = den_u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let nmax = num_u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    trim(&mut den_u, dmax);
    trim(&mut num_u, nmax);
    // normalise and return to the variable s
    let unscale = |c: &[f64]| -> Vec<f64> {
        c.iter().enumerate().map(|(k, &x)| x / dmax / w0.powi(k as i32)).collect()
    };
    let num = unscale(&num_u);
    let den = unscale(&den_u);
    if num.iter().all(|&x| x == 0.0) {
        return RationalTF { num: vec![0.0], den, non_minimal: Vec::new() };
    }

    let zeros = poly_roots(&num);
    let poles = poly_roots(&den);
    let (zeros_left, poles_left, common) = split_common(&zeros, &poles);
    if common.is_empty() {
        return RationalTF { num, den, non_minimal: Vec::new() };
    }
    let lead = |c: &[f64]| c.iter().rev().copied().find(|&x| x != 0.0).unwrap_or(0.0);
    RationalTF {
        num: poly_from_roots(&zeros_left, lead(&num)),
        den: poly_from_roots(&poles_left, lead(&den)),
        non_minimal: common,
    }
}

// Greedy closest-pair removal of roots common to both lists.
fn split_common(zeros: &[Complex64], poles: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>) {
    let mut pairs = Vec::new();
    for (i, z) in zeros.iter().enumerate() {
        for (j, p) in poles.iter().enumerate() {
            let scale = z.norm().max(p.norm());
            let d = (z - p).norm();
            if d <= COMMON_ROOT_TOL * scale || (scale == 0.0) {
                pairs.push((d / scale.max(f64::MIN_POSITIVE), i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut zused = vec![false; zeros.len()];
    let mut pused = vec![false; poles.len()];
    let mut common = Vec::new();
    for (_, i, j) in pairs {
        if !zused[i] && !pused[j] {
            zused[i] = true;
            pused[j] = true;
            common.push(poles[j]);
        }
    }
    let keep = |v: &[Complex64], used: &[bool]| {
        v.iter().zip(used).filter(|(_, &u)| !u).map(|(&r, _)| r).collect::<Vec<_>>()
    };
    sort_roots(&mut common);
    (keep(zeros, &zused), keep(poles, &pused), common)
}

/// Matches every pole with a distinct zero, closest pairs first.
pub fn cancellation_residual(a: &PoleZeroSet) -> Vec<Cancellation> {
    cancellation_residual_with(a, OMEGA_REF)
}

pub fn cancellation_residual_with(a: &PoleZeroSet, omega_ref: f64) -> Vec<Cancellation> {
    let rel = |p: Complex64, z: Complex64| (p - z).norm() / p.norm().max(omega_ref);
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.poles.len() * a.zeros.len());
    for (i, &p) in a.poles.iter().enumerate() {
        for (j, &z) in a.zeros.iter().enumerate() {
            pairs.push((rel(p, z), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut zero_of: Vec<Option<usize>> = vec![None; a.poles.len()];
    let mut zused = vec![false; a.zeros.len()];
    for (_, i, j) in pairs {
        if zero_of[i].is_none() && !zused[j] {
            zero_of[i] = Some(j);
            zused[j] = true;
        }
    }
    a.poles
        .iter()
        .zip(zero_of)
        .map(|(&p, z)| match z {
            Some(j) => Cancellation { pole: p, zero: Some(a.zeros[j]), residual: rel(p, a.zeros[j]) },
            None => Cancellation { pole: p, zero: None, residual: f64::INFINITY },
        })
        .collect()
}

/// Closest root of `set` to `target`, with its relative distance.
pub fn nearest(set: &[Complex64], target: Complex64) -> Option<(Complex64, f64)> {
    set.iter()
        .map(|&r| (r, (r - target).norm() / target.norm().max(f64::MIN_POSITIVE)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::FrequencyGrid;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn factor_examples() {
        let s = factor(&RationalTF::new(vec![0.0, 1.0], vec![1.0]).unwrap());
        assert_eq!(s.zeros, vec![c(0.0, 0.0)]);
        let (gm, l) = (0.04, 0.28e-9);
        let s = factor(&RationalTF::new(vec![1.0], vec![1.0, gm * l]).unwrap());
        assert!((s.poles[0] - c(-1.0 / (gm * l), 0.0)).norm() < 1e-9 * 8.9e10);
        // (s+1)(s+2)/(s+3)
        let s = factor(&RationalTF::new(vec![2.0, 3.0, 1.0], vec![3.0, 1.0]).unwrap());
        assert!((s.zeros[0] - c(-2.0, 0.0)).norm() < 1e-12);
        assert!((s.zeros[1] - c(-1.0, 0.0)).norm() < 1e-12);
        assert!((s.poles[0] - c(-3.0, 0.0)).norm() < 1e-12);
        assert_eq!(s.gain, 1.0);
        let s = factor(&RationalTF::new(vec![5.0], vec![2.0]).unwrap());
        assert!(s.poles.is_empty() && s.zeros.is_empty());
        assert_eq!(s.gain, 2.5);
    }

    #[test]
    fn roots_round_trip() {
        let roots = vec![c(-1e9, 0.0), c(-3e10, 4e10), c(-3e10, -4e10), c(-2e11, 0.0), c(0.0, 0.0)];
        let p = poly_from_roots(&roots, 2.5e-30);
        let back = poly_roots(&p);
        let q = poly_from_roots(&back, 2.5e-30);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() <= 1e-8 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn rc_lowpass() {
        let (r, cap) = (1e3, 1e-12);
        let mut ckt = Circuit::new("");
        ckt.vsource("V1", "in", "0", 1.0)
            .resistor("R1", "in", "out", r)
            .capacitor("C1", "out", "0", cap);
        let tf = transfer_function(&ckt, &Excitation::Source("V1".into()), &Response::Node("out".into())).unwrap();
        let pz = factor(&tf);
        assert!(pz.zeros.is_empty());
        assert_eq!(pz.poles.len(), 1);
        assert!((pz.poles[0].re + 1.0 / (r * cap)).abs() < 1e-9 / (r * cap));
        assert!((tf.eval(c(0.0, 0.0)) - 1.0).norm() < 1e-12);
        let p = assemble(&ckt).unwrap();
        let poles = poles_of(&p).unwrap();
        assert_eq!(poles.len(), 1);
        assert!((poles[0].re + 1.0 / (r * cap)).abs() < 1e-9 / (r * cap));
    }

    #[test]
    fn lc_tank_poles() {
        let (l, cap) = (1e-9, 1e-12);
        let mut ckt = Circuit::new("");
        ckt.inductor("L1", "a", "0", l).capacitor("C1", "a", "0", cap);
        let p = assemble(&ckt).unwrap();
        let poles = poles_of(&p).unwrap();
        let w = 1.0 / (l * cap).sqrt();
        assert_eq!(poles.len(), 2);
        assert!((poles[0] - c(0.0, -w)).norm() < 1e-9 * w);
        assert!((poles[1] - c(0.0, w)).norm() < 1e-9 * w);
    }

    #[test]
    fn shunt_inductor_current_drive() {
        // H(s) = R sL / (R + sL)
        let (r, l) = (50.0, 2e-9);
        let mut ckt = Circuit::new("");
        ckt.isource("I1", "0", "a", 1.0).inductor("L1", "a", "0", l).resistor("R1", "a", "0", r);
        let tf = transfer_function(&ckt, &Excitation::Source("I1".into()), &Response::Node("a".into())).unwrap();
        let pz = factor(&tf);
        assert_eq!(pz.zeros, vec![c(0.0, 0.0)]);
        assert!((pz.poles[0].re + r / l).abs() < 1e-9 * r / l);
        for f in [1e8, 1e9, 7e9] {
            let s = c(0.0, 2.0 * PI * f);
            let h = r * s * l / (r + s * l);
            assert!((tf.eval(s) - h).norm() < 1e-9 * h.norm());
        }
    }

    #[test]
    fn held_out_points_and_conjugate_symmetry() {
        let mut ckt = Circuit::new("");
        ckt.resistor("R1", "a", "b", 30.0)
            .inductor("L1", "b", "c", 1.3e-9)
            .capacitor("C1", "c", "0", 0.7e-12)
            .resistor("R2", "c", "0", 200.0)
            .capacitor("C2", "a", "c", 0.2e-12)
            .port("a", "0", 50.0)
            .port("c", "0", 50.0);
        let sys = SisoSystem::new(&ckt, &Excitation::Port(0), &Response::PortVoltage(1)).unwrap();
        let tf = transfer_function_of(&sys).unwrap();
        let g = FrequencyGrid::log(1e8, 3e10, 20).unwrap();
        for &f in g.points() {
            let s = c(0.0, 2.0 * PI * f);
            let direct = sys.eval(s).unwrap();
            assert!((tf.eval(s) - direct).norm() <= 1e-8 * direct.norm());
            assert!((tf.eval(s.conj()) - direct.conj()).norm() <= 1e-8 * direct.norm());
        }
        let pz = factor(&tf);
        let pencil_poles = sys.poles().unwrap();
        assert_eq!(pz.poles.len(), pencil_poles.len());
        for p in &pencil_poles {
            assert!(nearest(&pz.poles, *p).unwrap().1 < 1e-6);
        }
        let zeros = sys.zeros().unwrap();
        assert_eq!(zeros.len(), pz.zeros.len());
        for z in &zeros {
            assert!(nearest(&pz.zeros, *z).unwrap().1 < 1e-6);
        }
    }

    #[test]
    fn cancellation_examples() {
        let set = PoleZeroSet { poles: vec![c(0.0, 0.0)], zeros: vec![c(0.0, 0.0)], gain: 1.0 };
        assert_eq!(cancellation_residual(&set)[0].residual, 0.0);
        let set = PoleZeroSet { poles: vec![c(-1e10, 0.0)], zeros: vec![c(-1.01e10, 0.0)], gain: 1.0 };
        assert!((cancellation_residual_with(&set, 1.0)[0].residual - 0.01).abs() < 1e-12);
        // with the default regularization |p| < omega_ref, so the scale is omega_ref
        assert!((cancellation_residual(&set)[0].residual - 1e8 / OMEGA_REF).abs() < 1e-12);
        let set = PoleZeroSet { poles: vec![c(-1e10, 0.0), c(-5e10, 0.0)], zeros: vec![c(-1e10, 0.0)], gain: 1.0 };
        let r = cancellation_residual(&set);
        assert_eq!(r[0].residual, 0.0);
        assert_eq!(r[1].residual, f64::INFINITY);
        assert!(r[1].zero.is_none());
    }

    #[test]
    fn non_minimal_mode_reported() {
        // the R2-C2 branch hangs off an ideal source and never reaches the output
        let mut ckt = Circuit::new("");
        ckt.vsource("V1", "in", "0", 1.0)
            .resistor("R1", "in", "out", 1e3)
            .capacitor("C1", "out", "0", 1e-12)
            .resistor("R2", "in", "x", 1e3)
            .capacitor("C2", "x", "0", 3e-12);
        let tf = transfer_function(&ckt, &Excitation::Source("V1".into()), &Response::Node("out".into())).unwrap();
        assert_eq!(tf.den_degree(), 1);
        assert_eq!(tf.non_minimal.len(), 1);
        assert!((tf.non_minimal[0].re + 1.0 / 3e-9).abs() < 1e-6 / 3e-9);
    }
}
