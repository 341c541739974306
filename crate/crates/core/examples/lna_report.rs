//! Design solve on the shipped full amplifier and the summary report.

use lnakit::cli::lna_report;
use lnakit::design::{design_full_lna, DesignOptions, UWB_BAND};
use lnakit::sweep::FrequencyGrid;
use lnakit::topology::{Topology, TopologyParams};

fn main() -> lnakit::error::Result<()> {
    let params = TopologyParams::builtin(Topology::FullLnaFig8);
    let (design, solved) = design_full_lna(&params, &DesignOptions::default())?;
    println!("design converged: {} ({:?} pairing)", design.converged, design.pairing);
    let grid = FrequencyGrid::linear(UWB_BAND.0, UWB_BAND.1, 401)?;
    let r = lna_report(&solved, &grid, UWB_BAND, 3.3)?;
    for (k, v) in &r.table {
        println!("{k:>28}: {v}");
    }
    for (k, v) in &r.checks {
        println!("{k:>28}: {}", if *v { "ok" } else { "FAIL" });
    }
    Ok(())
}
