//! Frequency sweeps and two-port figures of merit.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{expand_devices, Circuit};
use crate::error::{Error, Result};
use crate::mna::{assemble, port_indices, port_voltage, terminated_system, AcSystem, MnaPencil};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
    /// Arbitrary user-supplied points.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    points: Vec<f64>,
    spacing: Spacing,
}

impl FrequencyGrid {
    pub fn linear(lo: f64, hi: f64, n: usize) -> Result<Self> {
        check_range(lo, hi, n)?;
        let points = if n == 1 {
            vec![lo]
        } else {
            (0..n)
                .map(|k| if k == n - 1 { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
                .collect()
        };
        Ok(FrequencyGrid { points, spacing: Spacing::Linear })
    }

    pub fn log(lo: f64, hi: f64, n: usize) -> Result<Self> {
        check_range(lo, hi, n)?;
        let (a, b) = (lo.ln(), hi.ln());
        let points = if n == 1 {
            vec![lo]
        } else {
            (0..n)
                .map(|k| match k {
                    0 => lo,
                    k if k == n - 1 => hi,
                    k => (a + (b - a) * k as f64 / (n - 1) as f64).exp(),
                })
                .collect()
        };
        Ok(FrequencyGrid { points, spacing: Spacing::Log })
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Grid("no frequency points".into()));
        }
        if points.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(Error::Grid("frequencies must be positive and finite".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Grid("frequencies must be strictly increasing".into()));
        }
        Ok(FrequencyGrid { points, spacing: Spacing::Custom })
    }

    /// 401 logarithmic points over 1-15 GHz.
    pub fn default_report() -> Self {
        Self::log(1e9, 15e9, 401).expect("valid constant grid")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_range(lo: f64, hi: f64, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Grid("point count must be at least 1".into()));
    }
    if !(lo > 0.0 && lo.is_finite() && hi.is_finite()) {
        return Err(Error::Grid(format!("invalid band {lo}:{hi}")));
    }
    if n > 1 && hi <= lo {
        return Err(Error::Grid(format!("band upper edge {hi} not above lower edge {lo}")));
    }
    Ok(())
}

pub type SMatrix = [[Complex64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoPortSweep {
    pub freqs: Vec<f64>,
    /// `s[k][i][j]` is S_(i+1)(j+1) at `freqs[k]`.
    pub s: Vec<SMatrix>,
    pub z0: [f64; 2],
}

impl TwoPortSweep {
    pub fn s21(&self) -> Vec<Complex64> {
        self.s.iter().map(|m| m[1][0]).collect()
    }

    pub fn s21_db(&self) -> Vec<f64> {
        self.s.iter().map(|m| db20(m[1][0])).collect()
    }
}

pub fn db20(z: Complex64) -> f64 {
    20.0 * z.norm().log10()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    /// Rollett factor; `f64::INFINITY` for a unilateral network.
    pub k: Vec<f64>,
    pub delta_mag: Vec<f64>,
}

fn pencil_for(c: &Circuit) -> Result<(Circuit, MnaPencil)> {
    let x = expand_devices(c);
    x.validate()?;
    let p = assemble(&x)?;
    Ok((x, p))
}

fn jw(f: f64) -> Complex64 {
    Complex64::new(0.0, 2.0 * PI * f)
}

/// S-parameters of a two-port, one solve per driven port and frequency.
///
/// Port j is driven by an EMF of 1 V behind its z0 (Norton form: a current
/// of 1/z0 in parallel with z0); every other port sees its z0.
pub fn two_port_sparams(c: &Circuit, grid: &FrequencyGrid) -> Result<TwoPortSweep> {
    if c.ports.len() != 2 {
        return Err(Error::Port(format!("expected exactly 2 ports, found {}", c.ports.len())));
    }
    let (x, p) = pencil_for(c)?;
    let ports = &x.ports;
    let z0 = [ports[0].z0, ports[1].z0];
    let mut out = Vec::with_capacity(grid.len());
    for &f in grid.points() {
        let sys = AcSystem::new(terminated_system(&p, ports, jw(f), None), jw(f))?;
        let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
        for j in 0..2 {
            let (pi, ni) = port_indices(&p, &ports[j]);
            let mut b = DVector::zeros(p.dim());
            if let Some(i) = pi {
                b[i] += Complex64::new(1.0 / z0[j], 0.0);
            }
            if let Some(i) = ni {
                b[i] -= Complex64::new(1.0 / z0[j], 0.0);
            }
            let sol = sys.solve(&b)?;
            for i in 0..2 {
                let v = port_voltage(&p, &ports[i], &sol);
                m[i][j] = if i == j {
                    2.0 * v - 1.0
                } else {
                    2.0 * v * (z0[j] / z0[i]).sqrt()
                };
            }
        }
        out.push(m);
    }
    Ok(TwoPortSweep { freqs: grid.points().to_vec(), s: out, z0 })
}

/// Impedance seen into `port` with every other port terminated in its z0.
pub fn input_impedance(c: &Circuit, port: usize, f: f64) -> Result<Complex64> {
    let (x, p) = pencil_for(c)?;
    input_impedance_pencil(&x, &p, port, f)
}

/// Same as [`input_impedance`] on an already assembled, expanded circuit.
pub fn input_impedance_pencil(x: &Circuit, p: &MnaPencil, port: usize, f: f64) -> Result<Complex64> {
    let Some(pt) = x.ports.get(port) else {
        return Err(Error::Port(format!("port {} does not exist", port + 1)));
    };
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::Domain(format!("frequency must be positive, got {f}")));
    }
    let sys = AcSystem::new(terminated_system(p, &x.ports, jw(f), Some(port)), jw(f))?;
    let b = p.current_injection(pt.pos, pt.neg, 1.0).map(|r| Complex64::new(r, 0.0));
    let sol = sys.solve(&b)?;
    Ok(port_voltage(p, pt, &sol))
}

/// Rollett K and |Delta| at one frequency.
pub fn stability_point(m: &SMatrix) -> (f64, f64) {
    let delta = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let d = delta.norm();
    let cross = (m[0][1] * m[1][0]).norm();
    let k = if cross == 0.0 {
        f64::INFINITY
    } else {
        (1.0 - m[0][0].norm_sqr() - m[1][1].norm_sqr() + d * d) / (2.0 * cross)
    };
    (k, d)
}

pub fn stability(s: &TwoPortSweep) -> StabilityReport {
    let (k, delta_mag) = s.s.iter().map(stability_point).unzip();
    StabilityReport { k, delta_mag }
}

/// Group delay of S21 in seconds.
pub fn group_delay(s: &TwoPortSweep) -> Result<Vec<f64>> {
    group_delay_of(&s.freqs, &s.s21())
}

/// Group delay `-d(phase)/d(omega)` of any complex response on a grid.
///
/// The phase is unwrapped, then differentiated with the derivative of the
/// quadratic through three neighbouring points: centred in the interior,
/// one-sided at both ends. Second order on nonuniform grids.
pub fn group_delay_of(freqs: &[f64], h: &[Complex64]) -> Result<Vec<f64>> {
    let n = freqs.len();
    if n < 3 {
        return Err(Error::Grid(format!("group delay needs at least 3 points, got {n}")));
    }
    if h.len() != n {
        return Err(Error::Grid("response length does not match grid".into()));
    }
    let phase = unwrap_phase(h);
    let w: Vec<f64> = freqs.iter().map(|f| 2.0 * PI * f).collect();
    let mut tau = Vec::with_capacity(n);
    for k in 0..n {
        let c = k.clamp(1, n - 2);
        let xs = [w[c - 1], w[c], w[c + 1]];
        let ys = [phase[c - 1], phase[c], phase[c + 1]];
        tau.push(-quadratic_derivative(xs, ys, w[k]));
    }
    Ok(tau)
}

fn quadratic_derivative(x: [f64; 3], y: [f64; 3], at: f64) -> f64 {
    let mut d = 0.0;
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let denom = (x[i] - x[j]) * (x[i] - x[k]);
        d += y[i] * ((at - x[j]) + (at - x[k])) / denom;
    }
    d
}

/// Phase with jumps larger than pi removed.
pub fn unwrap_phase(h: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(h.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for z in h {
        let ph = z.arg();
        if let Some(p) = prev {
            let mut d = ph + offset - p;
            while d > PI {
                offset -= 2.0 * PI;
                d -= 2.0 * PI;
            }
            while d < -PI {
                offset += 2.0 * PI;
                d += 2.0 * PI;
            }
        }
        let v = ph + offset;
        out.push(v);
        prev = Some(v);
    }
    out
}

/// Half the peak-to-peak |S21| ripple in dB over `band` (inclusive).
pub fn gain_flatness(s: &TwoPortSweep, band: (f64, f64)) -> Result<f64> {
    flatness_of(&s.freqs, &s.s21_db(), band)
}

pub fn flatness_of(freqs: &[f64], db: &[f64], band: (f64, f64)) -> Result<f64> {
    let in_band = band_values(freqs, db, band)?;
    let max = in_band.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = in_band.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((max - min) / 2.0)
}

/// Values whose frequency falls inside `band`, after checking grid coverage.
pub fn band_values(freqs: &[f64], v: &[f64], band: (f64, f64)) -> Result<Vec<f64>> {
    let (lo, hi) = band;
    if !(lo <= hi) {
        return Err(Error::Grid(format!("empty band {lo}:{hi}")));
    }
    let (Some(&first), Some(&last)) = (freqs.first(), freqs.last()) else {
        return Err(Error::Grid("empty sweep".into()));
    };
    let slack = 1e-9;
    if lo < first * (1.0 - slack) || hi > last * (1.0 + slack) {
        return Err(Error::Grid(format!(
            "band {lo:e}:{hi:e} not covered by sweep {first:e}:{last:e}"
        )));
    }
    let out: Vec<f64> = freqs
        .iter()
        .zip(v)
        .filter(|(&f, _)| f >= lo * (1.0 - slack) && f <= hi * (1.0 + slack))
        .map(|(_, &x)| x)
        .collect();
    if out.is_empty() {
        return Err(Error::Grid(format!("no sweep points inside band {lo:e}:{hi:e}")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sweep_of(s: Vec<SMatrix>) -> TwoPortSweep {
        let freqs = (1..=s.len()).map(|k| k as f64 * 1e9).collect();
        TwoPortSweep { freqs, s, z0: [50.0, 50.0] }
    }

    #[test]
    fn through_connection() {
        let mut ckt = Circuit::new("");
        ckt.resistor("R1", "a", "0", 1e12).port("a", "0", 50.0).port("a", "0", 50.0);
        let g = FrequencyGrid::log(1e9, 1e10, 5).unwrap();
        let s = two_port_sparams(&ckt, &g).unwrap();
        for m in &s.s {
            assert!((m[1][0] - c(1.0, 0.0)).norm() < 1e-9);
            assert!(m[0][0].norm() < 1e-9);
        }
    }

    #[test]
    fn series_fifty_ohm() {
        let mut ckt = Circuit::new("");
        ckt.resistor("R1", "a", "b", 50.0).port("a", "0", 50.0).port("b", "0", 50.0);
        let g = FrequencyGrid::linear(1e9, 2e9, 3).unwrap();
        let s = two_port_sparams(&ckt, &g).unwrap();
        for m in &s.s {
            assert!((m[0][0] - c(1.0 / 3.0, 0.0)).norm() < 1e-12);
            assert!((m[1][0] - c(2.0 / 3.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn wrong_port_count() {
        let mut ckt = Circuit::new("");
        ckt.resistor("R1", "a", "0", 50.0).port("a", "0", 50.0);
        let g = FrequencyGrid::linear(1e9, 2e9, 3).unwrap();
        assert!(matches!(two_port_sparams(&ckt, &g), Err(Error::Port(_))));
    }

    #[test]
    fn impedance_examples() {
        let mut ckt = Circuit::new("");
        ckt.resistor("R1", "a", "0", 50.0).port("a", "0", 50.0);
        assert!((input_impedance(&ckt, 0, 3e9).unwrap() - c(50.0, 0.0)).norm() < 1e-12);
        let mut ckt = Circuit::new("");
        ckt.inductor("L1", "a", "0", 0.28e-9).port("a", "0", 50.0);
        let z = input_impedance(&ckt, 0, 6.5e9).unwrap();
        assert!((z.im - 2.0 * PI * 6.5e9 * 0.28e-9).abs() < 1e-12);
        assert!((z.im - 11.435).abs() < 1e-3);
        assert!(input_impedance(&ckt, 3, 6.5e9).is_err());
    }

    #[test]
    fn stability_examples() {
        let z = c(0.0, 0.0);
        let half = c(0.5, 0.0);
        let r = stability(&sweep_of(vec![
            [[z, z], [z, z]],
            [[z, half], [half, z]],
            [[z, z], [c(1.0, 0.0), z]],
        ]));
        assert_eq!(r.k[0], f64::INFINITY);
        assert!((r.k[1] - 2.125).abs() < 1e-12);
        assert!((r.delta_mag[1] - 0.25).abs() < 1e-15);
        // S12 = 0 here, so the through is unilateral
        assert_eq!(r.k[2], f64::INFINITY);
    }

    #[test]
    fn flat_delay_is_zero() {
        let f: Vec<f64> = (1..10).map(|k| k as f64 * 1e9).collect();
        let h = vec![c(2.0, 0.0); 9];
        assert!(group_delay_of(&f, &h).unwrap().iter().all(|t| t.abs() < 1e-25));
        assert!(group_delay_of(&f[..2], &h[..2]).is_err());
    }

    #[test]
    fn linear_phase_exact() {
        // pure delay: second-order formula is exact for phase linear in w
        let tau = 37e-12;
        let f = [1e9, 1.3e9, 2.9e9, 3.0e9, 7.7e9];
        let h: Vec<Complex64> = f.iter().map(|f| Complex64::from_polar(1.0, -2.0 * PI * f * tau)).collect();
        for t in group_delay_of(&f, &h).unwrap() {
            assert!((t - tau).abs() < 1e-22);
        }
    }

    #[test]
    fn flatness_examples() {
        let f = [1.0, 2.0, 3.0];
        assert_eq!(flatness_of(&f, &[5.0; 3], (1.0, 3.0)).unwrap(), 0.0);
        assert!((flatness_of(&f, &[18.9, 20.2, 19.5], (1.0, 3.0)).unwrap() - 0.65).abs() < 1e-12);
        assert_eq!(flatness_of(&f, &[0.0, 0.5, 1.0], (1.0, 3.0)).unwrap(), 0.5);
        assert!(flatness_of(&f, &[0.0; 3], (0.5, 3.0)).is_err());
        assert!(flatness_of(&f, &[0.0; 3], (1.2, 1.8)).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(FrequencyGrid::log(0.0, 1.0, 3).is_err());
        assert!(FrequencyGrid::linear(2.0, 1.0, 3).is_err());
        assert!(FrequencyGrid::from_points(vec![1.0, 1.0]).is_err());
        let g = FrequencyGrid::default_report();
        assert_eq!(g.len(), 401);
        assert_eq!(g.points()[0], 1e9);
        assert_eq!(g.points()[400], 15e9);
    }
}
