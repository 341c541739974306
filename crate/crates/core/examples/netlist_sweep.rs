//! Parse a netlist, sweep S-parameters and print gain, match and stability.

use lnakit::netlist::parse_netlist;
use lnakit::sweep::*;

const NETLIST: &str = "\
.title Degenerated common-emitter stage
.model npn rb=5 ic=4m beta=150 ft=25g cbc=20f
Q1 b c e model=npn
L1 e 0 0.3n
LB in b 2n
RC c vdd 150
LC vdd 0 3n
CO c out 5p
.port in 0 z0=50
.port out 0 z0=50
";

fn main() -> lnakit::error::Result<()> {
    let c = parse_netlist(NETLIST)?;
    let grid = FrequencyGrid::linear(2e9, 12e9, 11)?;
    let s = two_port_sparams(&c, &grid)?;
    let st = stability(&s);
    println!("{:>8} {:>8} {:>8} {:>8} {:>8}", "GHz", "S11 dB", "S21 dB", "K", "|D|");
    for (i, f) in s.freqs.iter().enumerate() {
        let m = s.s[i];
        println!(
            "{:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.3}",
            f / 1e9,
            db20(m[0][0]),
            db20(m[1][0]),
            st.k[i],
            st.delta_mag[i]
        );
    }
    println!("flatness over the sweep: {:.2} dB", gain_flatness(&s, (2e9, 12e9))?);
    Ok(())
}
