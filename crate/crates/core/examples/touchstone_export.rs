//! Sweep a built-in topology and write CSV and Touchstone files.
//!
//! `cargo run --example touchstone_export -- OUT_DIR`

use std::path::PathBuf;

use lnakit::export::{sparams_csv, touchstone_s2p, write_atomic};
use lnakit::sweep::{two_port_sparams, FrequencyGrid};
use lnakit::topology::{build_topology, Topology, TopologyParams};

fn main() -> lnakit::error::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let t = Topology::FullLnaFig8;
    let c = build_topology(t, &TopologyParams::builtin(t))?;
    let s = two_port_sparams(&c, &FrequencyGrid::log(1e9, 20e9, 201)?)?;
    write_atomic(&out.join("lna.csv"), &sparams_csv(&s))?;
    write_atomic(&out.join("lna.s2p"), &touchstone_s2p(&s, t.name()))?;
    println!("wrote {} points to {}", s.freqs.len(), out.display());
    Ok(())
}
