//! Input match, then placement of the feedback-network zeros.

use lnakit::analytic::{InputStageParams, OutputStageParams};
use lnakit::design::*;

fn main() -> lnakit::error::Result<()> {
    let gm = 0.04;
    let mut input = InputStageParams { rb: 5.0, gm, cpi: gm / (2.0 * std::f64::consts::PI * 15e9), l: 0.0, rs: 50.0 };
    let m = solve_input_match(&input, 50.0, MatchFree::L, &VariableBounds::default())?;
    input.l = m.l.expect("L solved");
    println!("L for a 50 ohm match: {:.4} nH", input.l * 1e9);

    let output = OutputStageParams { gm3: 0.08, rf: 300.0, lf: 2e-9, r2: 100.0, c4: 1e-12, rl: 200.0, l4: 2e-9, cpi3: 0.5e-12 };
    for pairing in [Pairing::Paper, Pairing::Swapped] {
        let opts = CancellationOptions { pairing, ..Default::default() };
        let r = solve_cancellation(&input, &output, &Var::FEEDBACK, &opts)?;
        let v = r.variables;
        println!(
            "{pairing:?}: converged {} after {} steps, residuals {:.2e} / {:.2e}, Rf {:.2} ohm, Lf {:.3} nH, R2 {:.1} ohm, C4 {:.3} pF",
            r.converged,
            r.iterations,
            r.residuals.z1p1_rel.unwrap_or(f64::NAN),
            r.residuals.z2p2_rel.unwrap_or(f64::NAN),
            v.rf.unwrap_or(f64::NAN),
            v.lf.unwrap_or(f64::NAN) * 1e9,
            v.r2.unwrap_or(f64::NAN),
            v.c4.unwrap_or(f64::NAN) * 1e12,
        );
    }
    Ok(())
}
