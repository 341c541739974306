//! Poles and zeros of the degenerated input stage: printed transfer
//! function against the circuit pencil.

use lnakit::analytic::{input_stage_tf, InputStageParams};
use lnakit::polezero::*;
use lnakit::topology::input_stage_circuit;

fn main() -> lnakit::error::Result<()> {
    let gm = 0.1425;
    let p = InputStageParams { rb: 5.0, gm, cpi: gm * 0.28e-9 / 45.0, l: 0.28e-9, rs: 50.0 };
    let printed = factor(&input_stage_tf(&p));
    println!("printed poles: {:?}", printed.poles);

    let c = input_stage_circuit(&p)?;
    let sys = SisoSystem::new(&c, &Excitation::Port(0), &Response::PortCurrent(1))?;
    let tf = transfer_function_of(&sys)?;
    let numeric = factor(&tf);
    println!("circuit poles: {:?}", numeric.poles);
    println!("circuit zeros: {:?}", numeric.zeros);
    for pole in &printed.poles {
        if let Some((z, e)) = nearest(&numeric.poles, *pole) {
            println!("{pole:.4e}: nearest circuit pole {z:.4e}, rel distance {e:.2e}");
        }
    }
    Ok(())
}
