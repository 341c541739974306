//! Closed-form noise parameters of a degenerated stage next to the
//! circuit-level noise oracle.

use std::f64::consts::PI;

use lnakit::circuit::{Circuit, HybridPiParams, DEFAULT_TEMPERATURE};
use lnakit::noise::*;
use lnakit::sweep::FrequencyGrid;
use num_complex::Complex64;

fn main() -> lnakit::error::Result<()> {
    let q = HybridPiParams::from_bias_ft(8e-3, DEFAULT_TEMPERATURE, 150.0, 5.0, 25.58e9, 20e-15)?;
    let le = 0.28e-9;
    let mut c = Circuit::new("ce");
    c.bjt("Q1", "npn", "in", "out", "e", q).inductor("LE", "e", "0", le).port("in", "0", 50.0).port("out", "0", 50.0);

    let grid = FrequencyGrid::linear(2e9, 8e9, 7)?;
    let zs = Complex64::new(50.0, 0.0);
    let oracle = noise_correlation_nf(&c, &grid, zs)?;
    println!("{:>6} {:>8} {:>8} {:>10} {:>10} {:>18}", "GHz", "NF", "oracle", "NFmin", "Rn", "Zopt");
    for (f, o) in grid.points().iter().zip(oracle) {
        let w = 2.0 * PI * f;
        let np = noise_parameters(&q, le, w)?;
        let nf = nf_from_params(&np, zs, w, &q)?;
        println!(
            "{:>6.1} {:>8.3} {:>8.3} {:>10.3} {:>10.2} {:>8.2}{:+8.2}j",
            f / 1e9,
            to_db(nf),
            to_db(o),
            to_db(np.nfmin),
            np.rn,
            np.zopt.re,
            np.zopt.im
        );
    }
    println!("two stages, 2 dB + 6 dB behind 15 dB of gain: {:.3} dB", to_db(friis_cascade(&[(1.585, 31.6), (3.98, 10.0)])?));
    Ok(())
}
