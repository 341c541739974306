//! Modified nodal analysis.
//!
//! Unknowns are the non-ground node voltages followed by one branch current
//! per inductor and voltage source. The circuit becomes the real pencil
//! `(G, C)` with `(G + s C) x = b`:
//!
//! - resistor `R` (i, j): conductance stamp into `G`
//! - capacitor `C` (i, j): same pattern into `C`
//! - inductor `L` (i, j), branch k: incidence +-1 in `G`, `C[k][k] = -L`
//! - voltage source (i, j), branch k: incidence +-1 in `G`, `b[k] = V`
//! - current source (i -> j through the source): `b[i] -= I`, `b[j] += I`
//! - VCCS (o+, o-, c+, c-): `G[o+][c+] += gm`, `G[o+][c-] -= gm`, negated on row o-

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::circuit::{Circuit, ComponentKind, NodeId, Port};
use crate::error::{Error, Result};

/// Relative residual accepted from a linear solve.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Unknown {
    Voltage(String),
    Current(String),
}

#[derive(Debug, Clone)]
pub struct MnaPencil {
    pub g: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub b: DVector<f64>,
    pub labels: Vec<Unknown>,
    node_count: usize,
    branches: HashMap<String, usize>,
}

impl MnaPencil {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    /// Row/column of a node voltage, `None` for ground.
    pub fn node_index(&self, n: NodeId) -> Option<usize> {
        if n.is_ground() {
            None
        } else {
            Some(n.0 - 1)
        }
    }

    /// Row/column of the branch current of an inductor or voltage source.
    pub fn branch_index(&self, label: &str) -> Option<usize> {
        self.branches.get(label).copied()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// A(s) = G + s C.
    pub fn system(&self, s: Complex64) -> DMatrix<Complex64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| {
            Complex64::new(self.g[(i, j)], 0.0) + s * self.c[(i, j)]
        })
    }

    /// Adds a conductance between two nodes of the real `G` matrix.
    pub fn stamp_conductance(&mut self, a: NodeId, b: NodeId, y: f64) {
        let (ia, ib) = (self.node_index(a), self.node_index(b));
        stamp2(&mut self.g, ia, ib, y);
    }

    /// Unit current injected into `into` and drawn from `from`.
    pub fn current_injection(&self, into: NodeId, from: NodeId, amps: f64) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        if let Some(i) = self.node_index(into) {
            v[i] += amps;
        }
        if let Some(j) = self.node_index(from) {
            v[j] -= amps;
        }
        v
    }

    /// Number of capacitors and inductors, an upper bound on det(A(s)) degree.
    pub fn dynamic_rank_bound(&self) -> usize {
        let n = self.dim();
        let mut count = 0;
        for i in 0..n {
            if (0..n).any(|j| self.c[(i, j)] != 0.0) {
                count += 1;
            }
        }
        count
    }
}

fn stamp2<T>(m: &mut DMatrix<T>, a: Option<usize>, b: Option<usize>, y: T)
where
    T: nalgebra::Scalar + Copy + std::ops::AddAssign + std::ops::SubAssign,
{
    if let Some(i) = a {
        m[(i, i)] += y;
    }
    if let Some(j) = b {
        m[(j, j)] += y;
    }
    if let (Some(i), Some(j)) = (a, b) {
        m[(i, j)] -= y;
        m[(j, i)] -= y;
    }
}

/// Complex admittance stamp (used for port terminations and source impedances).
pub fn stamp_admittance(m: &mut DMatrix<Complex64>, a: Option<usize>, b: Option<usize>, y: Complex64) {
    stamp2(m, a, b, y);
}

/// Builds the MNA pencil of a device-free circuit.
pub fn assemble(c: &Circuit) -> Result<MnaPencil> {
    if c.has_devices() {
        return Err(Error::Structure(
            "circuit contains BJTs; expand devices before assembly".into(),
        ));
    }
    let n_nodes = c.node_count() - 1;
    let mut labels: Vec<Unknown> = (1..c.node_count())
        .map(|i| Unknown::Voltage(c.node_name(NodeId(i)).to_string()))
        .collect();
    let mut branches = HashMap::new();
    for comp in &c.components {
        if matches!(comp.kind, ComponentKind::Inductor { .. } | ComponentKind::VSource { .. }) {
            branches.insert(comp.label.clone(), labels.len());
            labels.push(Unknown::Current(comp.label.clone()));
        }
    }
    check_voltage_loops(c)?;

    let dim = labels.len();
    let mut p = MnaPencil {
        g: DMatrix::zeros(dim, dim),
        c: DMatrix::zeros(dim, dim),
        b: DVector::zeros(dim),
        labels,
        node_count: c.node_count(),
        branches,
    };
    let idx = |n: NodeId| if n.is_ground() { None } else { Some(n.0 - 1) };
    debug_assert!(n_nodes <= dim);

    for comp in &c.components {
        let t = &comp.terminals;
        match comp.kind {
            ComponentKind::Resistor { ohms, .. } => stamp2(&mut p.g, idx(t[0]), idx(t[1]), 1.0 / ohms),
            ComponentKind::Capacitor { farads } => stamp2(&mut p.c, idx(t[0]), idx(t[1]), farads),
            ComponentKind::Inductor { henries } => {
                let k = p.branches[&comp.label];
                stamp_incidence(&mut p.g, idx(t[0]), idx(t[1]), k);
                p.c[(k, k)] -= henries;
            }
            ComponentKind::VSource { volts } => {
                let k = p.branches[&comp.label];
                stamp_incidence(&mut p.g, idx(t[0]), idx(t[1]), k);
                p.b[k] += volts;
            }
            ComponentKind::ISource { amps } => {
                if let Some(i) = idx(t[0]) {
                    p.b[i] -= amps;
                }
                if let Some(j) = idx(t[1]) {
                    p.b[j] += amps;
                }
            }
            ComponentKind::Vccs { gm } => {
                let (op, om, cp, cm) = (idx(t[0]), idx(t[1]), idx(t[2]), idx(t[3]));
                for (row, sign) in [(op, 1.0), (om, -1.0)] {
                    let Some(r) = row else { continue };
                    if let Some(col) = cp {
                        p.g[(r, col)] += sign * gm;
                    }
                    if let Some(col) = cm {
                        p.g[(r, col)] -= sign * gm;
                    }
                }
            }
            ComponentKind::Bjt { .. } => unreachable!(),
        }
    }
    Ok(p)
}

fn stamp_incidence(g: &mut DMatrix<f64>, a: Option<usize>, b: Option<usize>, k: usize) {
    if let Some(i) = a {
        g[(i, k)] += 1.0;
        g[(k, i)] += 1.0;
    }
    if let Some(j) = b {
        g[(j, k)] -= 1.0;
        g[(k, j)] -= 1.0;
    }
}

// A loop made only of voltage sources makes the pencil singular for every s.
fn check_voltage_loops(c: &Circuit) -> Result<()> {
    let mut parent: Vec<usize> = (0..c.node_count()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for comp in &c.components {
        if let ComponentKind::VSource { .. } = comp.kind {
            let (a, b) = (comp.terminals[0].0, comp.terminals[1].0);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return Err(Error::Structure(format!(
                    "voltage source {} closes a loop of voltage sources",
                    comp.label
                )));
            }
            parent[ra] = rb;
        }
    }
    Ok(())
}

/// LU-factored system matrix at one complex frequency.
pub struct AcSystem {
    a: DMatrix<Complex64>,
    lu: nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    s: Complex64,
}

impl AcSystem {
    pub fn new(a: DMatrix<Complex64>, s: Complex64) -> Result<Self> {
        if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::singular(s));
        }
        let lu = a.clone().lu();
        // exact singularity rarely shows up as an exact zero pivot
        let u = lu.u();
        let diag: Vec<f64> = (0..u.nrows()).map(|i| u[(i, i)].norm()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let floor = 64.0 * f64::EPSILON * max * (a.nrows() as f64);
        if max == 0.0 || diag.iter().any(|&d| d <= floor) {
            return Err(Error::singular(s));
        }
        Ok(AcSystem { a, lu, s })
    }

    pub fn at(p: &MnaPencil, s: Complex64) -> Result<Self> {
        Self::new(p.system(s), s)
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.a
    }

    pub fn determinant(&self) -> Complex64 {
        self.lu.determinant()
    }

    /// Solves with the residual gate `||Ax - b|| <= 1e-10 ||b||`, applying
    /// up to two steps of iterative refinement first.
    pub fn solve(&self, b: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        let bnorm = b.norm();
        if bnorm == 0.0 {
            return Ok(DVector::zeros(b.len()));
        }
        let mut x = self.lu.solve(b).ok_or_else(|| Error::singular(self.s))?;
        let mut res = self.residual(&x, b);
        for _ in 0..2 {
            if res <= SOLVE_RESIDUAL_TOL * bnorm {
                break;
            }
            let r = b - &self.a * &x;
            let dx = self.lu.solve(&r).ok_or_else(|| Error::singular(self.s))?;
            x += dx;
            res = self.residual(&x, b);
        }
        if !x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::singular(self.s));
        }
        if res > SOLVE_RESIDUAL_TOL * bnorm {
            return Err(Error::Residual {
                residual: res / bnorm,
                re: self.s.re,
                im: self.s.im,
            });
        }
        Ok(x)
    }

    fn residual(&self, x: &DVector<Complex64>, b: &DVector<Complex64>) -> f64 {
        (&self.a * x - b).norm()
    }
}

/// Matrix positions of a port's terminals.
pub fn port_indices(p: &MnaPencil, port: &Port) -> (Option<usize>, Option<usize>) {
    (p.node_index(port.pos), p.node_index(port.neg))
}

/// `A(s)` with every port except `skip` terminated in its reference impedance.
pub fn terminated_system(p: &MnaPencil, ports: &[Port], s: Complex64, skip: Option<usize>) -> DMatrix<Complex64> {
    let mut a = p.system(s);
    for (k, port) in ports.iter().enumerate() {
        if Some(k) == skip {
            continue;
        }
        let (i, j) = port_indices(p, port);
        stamp_admittance(&mut a, i, j, Complex64::new(1.0 / port.z0, 0.0));
    }
    a
}

/// Voltage across a port from a solution vector.
pub fn port_voltage(p: &MnaPencil, port: &Port, x: &DVector<Complex64>) -> Complex64 {
    let (i, j) = port_indices(p, port);
    i.map_or(Complex64::new(0.0, 0.0), |i| x[i]) - j.map_or(Complex64::new(0.0, 0.0), |j| x[j])
}

pub(crate) fn to_complex(v: &DVector<f64>) -> DVector<Complex64> {
    v.map(|r| Complex64::new(r, 0.0))
}

/// Solves `(G + j 2 pi f C) x = b` for the pencil's own sources.
pub fn solve_ac(p: &MnaPencil, f: f64) -> Result<DVector<Complex64>> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::Domain(format!("frequency must be positive, got {f}")));
    }
    let s = Complex64::new(0.0, 2.0 * std::f64::consts::PI * f);
    AcSystem::at(p, s)?.solve(&to_complex(&p.b))
}
