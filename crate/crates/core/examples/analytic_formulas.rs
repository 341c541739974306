//! The closed forms of the current-reuse amplifier on sample values.

use std::f64::consts::PI;

use lnakit::analytic::*;

fn main() -> lnakit::error::Result<()> {
    let gm = 0.1425;
    let input = InputStageParams { rb: 5.0, gm, cpi: gm * 0.28e-9 / 45.0, l: 0.28e-9, rs: 50.0 };
    for f in [3.1e9, 6.85e9, 10.6e9] {
        let z = zin_analytic(&input, 2.0 * PI * f);
        println!("Zin({:.2} GHz) = {:.2} {:+.2}j", f / 1e9, z.re, z.im);
    }
    println!("degeneration pole {:.4e} rad/s", input.p1());

    let out = OutputStageParams { gm3: 0.1425, rf: 300.0, lf: 2e-9, r2: 100.0, c4: 1e-12, rl: 200.0, l4: 2e-9, cpi3: 0.9e-12 };
    let r = output_stage_zeros_pole(&out)?;
    println!("output stage: Z1 {:.4e}, Z2 {:.4e}, P2 {:.4e}", r.z1, r.z2, r.p2);

    let ic = 5.5e-3;
    let p = power_comparison(&PowerBudget { vcc1: 3.3, vcc2: 3.3, i1: ic, i2: ic, ic })?;
    println!("power: cascade {:.1} mW, current reuse {:.1} mW, ratio {}", p.p_cascode * 1e3, p.p_reuse * 1e3, p.ratio);
    Ok(())
}
