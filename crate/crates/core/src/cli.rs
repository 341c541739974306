//! Command-line front end.
//!
//! Exit codes: 0 success, 1 input error, 2 numeric error, 3 non-convergence.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::analytic::{
    output_stage_zeros_pole, power_comparison, InputStageParams, OutputStageParams, PowerBudget,
};
use crate::circuit::{Circuit, ComponentKind, HybridPiParams};
use crate::design::{
    design_full_lna, input_stage_of, CancellationOptions, DesignOptions, Pairing, Var, VariableBounds,
};
use crate::error::{Error, Result};
use crate::export::{
    derived_csv, nf_csv, polezero_json, sparams_csv, to_json_text, touchstone_s2p, write_atomic, DerivedColumns, NfRow,
};
use crate::netlist::{parse_netlist, write_netlist};
use crate::noise::{noise_correlation_nf_with, noise_parameters_with, nf_from_params_with, to_db, NoiseFormula, NoiseOptions};
use crate::polezero::{cancellation_residual_with, factor, nearest, transfer_function, Excitation, Response, OMEGA_REF};
use crate::sweep::{band_values, db20, gain_flatness, group_delay, stability, two_port_sparams, FrequencyGrid};
use crate::topology::{build_topology, Topology, TopologyParams};
use crate::units::parse_value;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "lnakit", version, about = "Small-signal analysis and design of wideband bipolar LNAs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// S-parameter sweep with derived metrics.
    Analyze(AnalyzeArgs),
    /// Closed-form noise parameters against the circuit-level oracle.
    Noise(NoiseArgs),
    /// Poles, zeros and cancellation residuals of a transfer function.
    Polezero(PolezeroArgs),
    /// Input match plus feedback zero-pole cancellation on the full LNA.
    Design(DesignArgs),
    /// Summary metrics of the full LNA in a single JSON.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Built-in topology name.
    #[arg(long, conflicts_with = "netlist")]
    pub topology: Option<String>,
    /// Netlist file.
    #[arg(long)]
    pub netlist: Option<PathBuf>,
    /// Parameter JSON for a built-in topology (defaults to the shipped design).
    #[arg(long, requires = "topology")]
    pub params: Option<PathBuf>,
    /// Override LABEL=VALUE; for topologies also device.PARAM or Q3.PARAM.
    #[arg(long = "set", value_name = "LABEL=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Frequency band LO:HI in hertz (engineering suffixes allowed).
    #[arg(long, default_value = "3.1e9:10.6e9")]
    pub band: String,
    #[arg(long, default_value_t = 401)]
    pub points: usize,
    /// Logarithmic spacing.
    #[arg(long, conflicts_with = "linear")]
    pub log: bool,
    /// Linear spacing (default).
    #[arg(long)]
    pub linear: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    S2p,
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Output formats (repeatable); each command has its own default set.
    #[arg(long, value_enum)]
    pub format: Vec<Format>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: OutArgs,
    /// Disable every noise source (NF column becomes 0 dB).
    #[arg(long)]
    pub noiseless: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormulaArg {
    Transcribed,
    Consistent,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: OutArgs,
    #[arg(long)]
    pub noiseless: bool,
    /// Source impedance RE or RE,IM in ohms (default: port 1 reference).
    #[arg(long, conflicts_with = "zs_opt")]
    pub zs: Option<String>,
    /// Use the closed-form Zopt as source impedance at every frequency.
    #[arg(long)]
    pub zs_opt: bool,
    #[arg(long, value_enum, default_value = "transcribed")]
    pub formula: FormulaArg,
    /// Transistor whose closed-form noise is reported (default: first).
    #[arg(long)]
    pub device: Option<String>,
    /// Emitter inductance: a value or an inductor label (default: the
    /// inductor from the device emitter to ground, if any).
    #[arg(long)]
    pub le: Option<String>,
}

#[derive(Debug, Args)]
pub struct PolezeroArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutArgs,
    /// Excitation: port:K, source:LABEL, current:NODE[,FROM].
    #[arg(long = "input")]
    pub excitation: Option<String>,
    /// Response: port-voltage:K, port-current:K, node:N[,M], branch:LABEL.
    #[arg(long = "output")]
    pub response: Option<String>,
    /// Reference frequency (rad/s) regularizing residuals near the origin.
    #[arg(long, default_value_t = OMEGA_REF)]
    pub omega_ref: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairingArg {
    Paper,
    Swapped,
    Auto,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: OutArgs,
    #[arg(long, value_enum, default_value = "auto")]
    pub pairing: PairingArg,
    /// Free feedback variables, comma separated.
    #[arg(long, default_value = "rf,lf,r2,c4", value_delimiter = ',')]
    pub free: Vec<String>,
    /// Bound override VAR=LO:HI (repeatable).
    #[arg(long = "bound", value_name = "VAR=LO:HI")]
    pub bounds: Vec<String>,
    /// Keep L1 as given instead of solving the input match.
    #[arg(long)]
    pub no_match: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: OutArgs,
    /// Supply voltage used for the power figures.
    #[arg(long, default_value_t = 3.3)]
    pub vcc: f64,
    /// Report the parameters as given, without the design solve.
    #[arg(long)]
    pub no_solve: bool,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_NUMERIC
    }
}

pub fn execute(cmd: &Command) -> Result<i32> {
    match cmd {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Noise(a) => cmd_noise(a),
        Command::Polezero(a) => cmd_polezero(a),
        Command::Design(a) => cmd_design(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// A loaded circuit and, for built-ins, its parameter set.
pub struct Loaded {
    pub circuit: Circuit,
    pub topology: Option<(Topology, TopologyParams)>,
}

fn parse_assignment(s: &str) -> Result<(String, f64)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("expected LABEL=VALUE, got '{s}'")))?;
    let value = parse_value(v.trim()).ok_or_else(|| Error::Usage(format!("bad value '{v}' in '{s}'")))?;
    Ok((k.trim().to_string(), value))
}

pub fn topology_params(input: &InputArgs) -> Result<(Topology, TopologyParams)> {
    let name = input
        .topology
        .as_deref()
        .ok_or_else(|| Error::Usage("this command needs --topology".into()))?;
    let t: Topology = name.parse()?;
    let mut p = match &input.params {
        Some(path) => TopologyParams::load(path)?,
        None => TopologyParams::builtin(t),
    };
    for o in &input.overrides {
        let (k, v) = parse_assignment(o)?;
        p.set(&k, v)?;
    }
    Ok((t, p))
}

pub fn load(input: &InputArgs) -> Result<Loaded> {
    match (&input.topology, &input.netlist) {
        (Some(_), _) => {
            let (t, p) = topology_params(input)?;
            Ok(Loaded { circuit: build_topology(t, &p)?, topology: Some((t, p)) })
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Usage(format!("cannot read netlist {}: {e}", path.display())))?;
            let mut c = parse_netlist(&text)?;
            for o in &input.overrides {
                let (k, v) = parse_assignment(o)?;
                c.set_value(&k, v)?;
            }
            c.validate()?;
            Ok(Loaded { circuit: c, topology: None })
        }
        (None, None) => Err(Error::Usage("give --topology NAME or --netlist PATH".into())),
    }
}

pub fn parse_band(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::Usage(format!("band must be LO:HI, got '{s}'")))?;
    let lo = parse_value(a.trim()).ok_or_else(|| Error::Usage(format!("bad band edge '{a}'")))?;
    let hi = parse_value(b.trim()).ok_or_else(|| Error::Usage(format!("bad band edge '{b}'")))?;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Grid(format!("band {lo:e}:{hi:e} must satisfy 0 < LO < HI")));
    }
    Ok((lo, hi))
}

impl GridArgs {
    pub fn band(&self) -> Result<(f64, f64)> {
        parse_band(&self.band)
    }

    pub fn grid(&self) -> Result<FrequencyGrid> {
        let (lo, hi) = self.band()?;
        if self.log {
            FrequencyGrid::log(lo, hi, self.points)
        } else {
            FrequencyGrid::linear(lo, hi, self.points)
        }
    }
}

impl OutArgs {
    fn wants(&self, f: Format, default: &[Format]) -> bool {
        if self.format.is_empty() {
            default.contains(&f)
        } else {
            self.format.contains(&f)
        }
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        write_atomic(&path, text)?;
        Ok(path)
    }
}

fn noise_opts(noiseless: bool) -> NoiseOptions {
    if noiseless {
        NoiseOptions::noiseless()
    } else {
        NoiseOptions::default()
    }
}

/// Sweep, derived metrics and (optionally) noise of a two-port.
pub struct AnalysisResult {
    pub sweep: crate::sweep::TwoPortSweep,
    pub derived: DerivedColumns,
}

pub fn analyze_circuit(c: &Circuit, grid: &FrequencyGrid, noise: NoiseOptions) -> Result<AnalysisResult> {
    let sweep = two_port_sparams(c, grid)?;
    let st = stability(&sweep);
    let gd = group_delay(&sweep)?;
    let zs = Complex64::new(c.ports[0].z0, 0.0);
    let nf = noise_correlation_nf_with(c, grid, zs, noise)?;
    let derived = DerivedColumns {
        freqs: sweep.freqs.clone(),
        s21_db: sweep.s21_db(),
        nf_db: nf.iter().map(|f| to_db(*f)).collect(),
        k: st.k,
        delta_mag: st.delta_mag,
        group_delay_s: gd,
    };
    Ok(AnalysisResult { sweep, derived })
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> Result<i32> {
    let loaded = load(&a.input)?;
    let grid = a.grid.grid()?;
    let band = a.grid.band()?;
    let r = analyze_circuit(&loaded.circuit, &grid, noise_opts(a.noiseless))?;
    let flat = gain_flatness(&r.sweep, band)?;
    let defaults = [Format::Csv, Format::S2p];
    if a.output.wants(Format::Csv, &defaults) {
        a.output.write("sparams.csv", &sparams_csv(&r.sweep))?;
        a.output.write("derived.csv", &derived_csv(&r.derived, Some((band, flat))))?;
    }
    if a.output.wants(Format::S2p, &defaults) {
        a.output.write("sparams.s2p", &touchstone_s2p(&r.sweep, &loaded.circuit.title))?;
    }
    if a.output.wants(Format::Json, &defaults) {
        let d = &r.derived;
        let v = json!({
            "title": loaded.circuit.title,
            "freq_hz": d.freqs,
            "s": r.sweep.s.iter().map(|m| m.iter().flatten().map(|z| [z.re, z.im]).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "s21_db": d.s21_db,
            "nf_db": d.nf_db,
            "k": d.k,
            "delta_mag": d.delta_mag,
            "group_delay_s": d.group_delay_s,
            "gain_flatness_db": flat,
            "band_hz": [band.0, band.1],
        });
        a.output.write("sweep.json", &to_json_text(&v)?)?;
    }
    Ok(EXIT_OK)
}

/// Device and emitter inductance used by the closed-form noise columns.
fn noise_device(loaded: &Loaded, device: Option<&str>, le: Option<&str>) -> Result<(String, HybridPiParams, f64)> {
    let c = &loaded.circuit;
    let q = match device {
        Some(label) => c
            .component(label)
            .ok_or_else(|| Error::Usage(format!("no device '{label}'")))?,
        None => c
            .components
            .iter()
            .find(|k| matches!(k.kind, ComponentKind::Bjt { .. }))
            .ok_or_else(|| Error::Usage("circuit has no transistor for the closed-form noise model".into()))?,
    };
    let ComponentKind::Bjt { params, .. } = &q.kind else {
        return Err(Error::Usage(format!("'{}' is not a transistor", q.label)));
    };
    let emitter = q.terminals[2];
    let le = match le {
        Some(s) => match parse_value(s) {
            Some(v) => v,
            None => c
                .component(s)
                .and_then(|k| match k.kind {
                    ComponentKind::Inductor { henries } => Some(henries),
                    _ => None,
                })
                .ok_or_else(|| Error::Usage(format!("--le '{s}' is neither a value nor an inductor")))?,
        },
        None => c
            .components
            .iter()
            .find_map(|k| match k.kind {
                ComponentKind::Inductor { henries }
                    if k.terminals.contains(&emitter) && k.terminals.iter().any(|n| n.is_ground()) =>
                {
                    Some(henries)
                }
                _ => None,
            })
            .unwrap_or(0.0),
    };
    Ok((q.label.clone(), *params, le))
}

fn parse_zs(s: &str) -> Result<Complex64> {
    let mut it = s.split(',');
    let re = it.next().and_then(|v| parse_value(v.trim()));
    let im = match it.next() {
        Some(v) => parse_value(v.trim()),
        None => Some(0.0),
    };
    match (re, im, it.next()) {
        (Some(re), Some(im), None) => Ok(Complex64::new(re, im)),
        _ => Err(Error::Usage(format!("--zs expects RE or RE,IM, got '{s}'"))),
    }
}

/// Relative NF divergence above which a frequency is flagged.
pub const DIVERGENCE_FLAG: f64 = 0.10;

#[derive(Debug, Clone, Serialize)]
pub struct DivergenceRegion {
    pub lo_hz: f64,
    pub hi_hz: f64,
    pub max_rel: f64,
    /// Whether the region lies entirely in `w <= wT / 3`.
    pub inside_validity: bool,
}

pub fn divergence_regions(rows: &[NfRow], wt: f64) -> Vec<DivergenceRegion> {
    let mut out: Vec<DivergenceRegion> = Vec::new();
    let mut open = false;
    for r in rows {
        let fa = 10f64.powf(r.nf_db_analytic / 10.0);
        let fo = 10f64.powf(r.nf_db_oracle / 10.0);
        let rel = (fa - fo).abs() / fo;
        let inside = 2.0 * PI * r.freq_hz <= wt / 3.0;
        if rel > DIVERGENCE_FLAG {
            match (open, out.last_mut()) {
                (true, Some(g)) => {
                    g.hi_hz = r.freq_hz;
                    g.max_rel = g.max_rel.max(rel);
                    g.inside_validity &= inside;
                }
                _ => out.push(DivergenceRegion { lo_hz: r.freq_hz, hi_hz: r.freq_hz, max_rel: rel, inside_validity: inside }),
            }
            open = true;
        } else {
            open = false;
        }
    }
    out
}

pub fn cmd_noise(a: &NoiseArgs) -> Result<i32> {
    let loaded = load(&a.input)?;
    let grid = a.grid.grid()?;
    let (label, p, le) = noise_device(&loaded, a.device.as_deref(), a.le.as_deref())?;
    let formula = match a.formula {
        FormulaArg::Transcribed => NoiseFormula::Transcribed,
        FormulaArg::Consistent => NoiseFormula::Consistent,
    };
    let zs = match (&a.zs, a.zs_opt) {
        (Some(s), _) => Some(parse_zs(s)?),
        // NaN marks "follow Zopt"
        (None, true) => Some(Complex64::new(f64::NAN, f64::NAN)),
        (None, false) => None,
    };
    let rows = noise_rows_with(&loaded.circuit, &p, le, &grid, zs, formula, noise_opts(a.noiseless))?;
    let regions = divergence_regions(&rows, p.omega_t());
    for g in &regions {
        eprintln!(
            "warning: closed form and oracle differ by up to {:.1}% over {:.4e}..{:.4e} Hz ({} the w <= wT/3 region)",
            100.0 * g.max_rel,
            g.lo_hz,
            g.hi_hz,
            if g.inside_validity { "inside" } else { "outside" }
        );
    }
    let defaults = [Format::Csv, Format::Json];
    if a.output.wants(Format::Csv, &defaults) {
        a.output.write("nf.csv", &nf_csv(&rows))?;
    }
    if a.output.wants(Format::Json, &defaults) {
        let v = json!({
            "device": label,
            "le_h": le,
            "formula": format!("{:?}", formula).to_lowercase(),
            "omega_t": p.omega_t(),
            "rows": rows,
            "divergence": regions,
        });
        a.output.write("noise.json", &to_json_text(&v)?)?;
    }
    if a.output.format.contains(&Format::S2p) {
        return Err(Error::Usage("noise has no s2p output".into()));
    }
    Ok(EXIT_OK)
}

/// Per-frequency rows; a NaN `zs` means "source at Zopt".
pub fn noise_rows_with(
    c: &Circuit,
    p: &HybridPiParams,
    le: f64,
    grid: &FrequencyGrid,
    zs: Option<Complex64>,
    formula: NoiseFormula,
    opts: NoiseOptions,
) -> Result<Vec<NfRow>> {
    let port_z0 = Complex64::new(c.ports.first().map_or(50.0, |p| p.z0), 0.0);
    let mut rows = Vec::with_capacity(grid.len());
    for &f in grid.points() {
        let w = 2.0 * PI * f;
        let np = noise_parameters_with(p, le, w, formula)?;
        let z = match zs {
            Some(z) if z.re.is_nan() => np.zopt,
            Some(z) => z,
            None => port_z0,
        };
        let na = nf_from_params_with(&np, z, w, p, formula)?;
        let no = noise_correlation_nf_with(c, &FrequencyGrid::from_points(vec![f])?, z, opts)?[0];
        rows.push(NfRow {
            freq_hz: f,
            nf_db_analytic: to_db(na),
            nf_db_oracle: to_db(no),
            nfmin_db: to_db(np.nfmin),
            rn_ohm: np.rn,
            zopt: np.zopt,
        });
    }
    Ok(rows)
}

fn parse_excitation(s: &str) -> Result<Excitation> {
    let (kind, rest) = s.split_once(':').ok_or_else(|| Error::Usage(format!("bad --input '{s}'")))?;
    match kind {
        "port" => Ok(Excitation::Port(port_number(rest)?)),
        "source" => Ok(Excitation::Source(rest.to_string())),
        "current" => {
            let (into, from) = rest.split_once(',').unwrap_or((rest, "0"));
            Ok(Excitation::Current { into: into.to_string(), from: from.to_string() })
        }
        _ => Err(Error::Usage(format!("unknown excitation kind '{kind}'"))),
    }
}

fn port_number(s: &str) -> Result<usize> {
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(k - 1),
        _ => Err(Error::Usage(format!("ports are numbered from 1, got '{s}'"))),
    }
}

fn parse_response(s: &str) -> Result<Response> {
    let (kind, rest) = s.split_once(':').ok_or_else(|| Error::Usage(format!("bad --output '{s}'")))?;
    match kind {
        "port-voltage" => Ok(Response::PortVoltage(port_number(rest)?)),
        "port-current" => Ok(Response::PortCurrent(port_number(rest)?)),
        "branch" => Ok(Response::BranchCurrent(rest.to_string())),
        "node" => Ok(match rest.split_once(',') {
            Some((a, b)) => Response::NodeDiff(a.to_string(), b.to_string()),
            None => Response::Node(rest.to_string()),
        }),
        _ => Err(Error::Usage(format!("unknown response kind '{kind}'"))),
    }
}

/// Default transfer function of a circuit: the one the closed forms
/// describe for the two single-stage topologies, port 1 to port 2 voltage
/// otherwise.
pub fn default_transfer(loaded: &Loaded) -> Result<(Excitation, Response)> {
    if let Some((t, _)) = &loaded.topology {
        return Ok(match t {
            Topology::InputStageFig3 => (Excitation::Port(0), Response::PortCurrent(1)),
            Topology::OutputStageFig7 => {
                (Excitation::Current { into: "in".into(), from: "0".into() }, Response::Node("out".into()))
            }
            _ => (Excitation::Port(0), Response::PortVoltage(1)),
        });
    }
    let c = &loaded.circuit;
    if c.ports.len() >= 2 {
        return Ok((Excitation::Port(0), Response::PortVoltage(1)));
    }
    let sources: Vec<&str> = c
        .components
        .iter()
        .filter(|k| matches!(k.kind, ComponentKind::VSource { .. } | ComponentKind::ISource { .. }))
        .map(|k| k.label.as_str())
        .collect();
    match sources.as_slice() {
        [one] => Err(Error::Usage(format!(
            "give --output for the response to source '{one}' (for example --output node:out)"
        ))),
        _ => Err(Error::Usage("give --input and --output for this netlist".into())),
    }
}

fn describe_excitation(e: &Excitation) -> String {
    match e {
        Excitation::Source(l) => format!("source:{l}"),
        Excitation::Port(k) => format!("port:{}", k + 1),
        Excitation::Current { into, from } => format!("current:{into},{from}"),
    }
}

fn describe_response(r: &Response) -> String {
    match r {
        Response::Node(n) => format!("node:{n}"),
        Response::NodeDiff(a, b) => format!("node:{a},{b}"),
        Response::BranchCurrent(l) => format!("branch:{l}"),
        Response::PortCurrent(k) => format!("port-current:{}", k + 1),
        Response::PortVoltage(k) => format!("port-voltage:{}", k + 1),
    }
}

fn prediction(name: &str, value: f64, roots: &[Complex64]) -> Value {
    let target = Complex64::new(value, 0.0);
    let near = nearest(roots, target);
    json!({
        "name": name,
        "value": value,
        "nearest": near.map(|(z, _)| json!({"re": z.re, "im": z.im})),
        // same regularized metric as the cancellation residuals
        "rel_error": near.map(|(z, _)| (z - target).norm() / value.abs().max(OMEGA_REF)),
    })
}

/// Closed-form roots to compare against the numeric ones, per topology.
pub fn predictions(loaded: &Loaded, poles: &[Complex64], zeros: &[Complex64]) -> Result<Vec<Value>> {
    let Some((t, p)) = &loaded.topology else {
        return Ok(Vec::new());
    };
    match t {
        Topology::InputStageFig3 => {
            let q = p.device_for("Q1").to_params()?;
            let ip = InputStageParams { rb: q.rb, gm: q.gm, cpi: q.cpi, l: p.get("L1")?, rs: p.z0 };
            Ok(vec![prediction("P1", ip.p1(), poles), prediction("P0", 0.0, poles)])
        }
        Topology::OutputStageFig7 => {
            let q = p.device_for("Q3").to_params()?;
            let op = OutputStageParams {
                gm3: q.gm,
                rf: p.get("RF")?,
                lf: p.get("LF")?,
                r2: p.get("R2")?,
                c4: p.get("C4")?,
                rl: p.get("RL")?,
                l4: p.get("L4")?,
                cpi3: q.cpi,
            };
            let r = output_stage_zeros_pole(&op)?;
            Ok(vec![
                prediction("Z0", r.z0, zeros),
                prediction("Z1", r.z1, zeros),
                prediction("Z2", r.z2, zeros),
                prediction("P2", r.p2, poles),
            ])
        }
        Topology::FullLnaFig8 => {
            let ip = input_stage_of(p)?;
            Ok(vec![prediction("P1", ip.p1(), poles)])
        }
        _ => Ok(Vec::new()),
    }
}

pub fn cmd_polezero(a: &PolezeroArgs) -> Result<i32> {
    let loaded = load(&a.input)?;
    let (mut exc, mut resp) = match (&a.excitation, &a.response) {
        (Some(_), Some(_)) => (Excitation::Port(0), Response::PortVoltage(1)),
        _ => default_transfer(&loaded).or_else(|e| match (&a.excitation, &a.response) {
            (None, Some(_)) => single_source(&loaded.circuit).map(|x| (x, Response::PortVoltage(1))).map_err(|_| e),
            _ => Err(e),
        })?,
    };
    if let Some(s) = &a.excitation {
        exc = parse_excitation(s)?;
    }
    if let Some(s) = &a.response {
        resp = parse_response(s)?;
    }
    if !(a.omega_ref > 0.0) {
        return Err(Error::Usage("--omega-ref must be positive".into()));
    }
    let tf = transfer_function(&loaded.circuit, &exc, &resp)?;
    let set = factor(&tf);
    let residuals = cancellation_residual_with(&set, a.omega_ref);
    let mut v = polezero_json(&set, &residuals);
    let obj = v.as_object_mut().expect("object");
    obj.insert("input".into(), json!(describe_excitation(&exc)));
    obj.insert("output".into(), json!(describe_response(&resp)));
    obj.insert(
        "non_minimal".into(),
        json!(tf.non_minimal.iter().map(|z| json!({"re": z.re, "im": z.im})).collect::<Vec<_>>()),
    );
    obj.insert("predictions".into(), Value::Array(predictions(&loaded, &set.poles, &set.zeros)?));
    let defaults = [Format::Json];
    if a.output.wants(Format::Json, &defaults) {
        a.output.write("polezero.json", &to_json_text(&v)?)?;
    }
    if a.output.format.iter().any(|f| *f != Format::Json) {
        return Err(Error::Usage("polezero writes JSON only".into()));
    }
    Ok(EXIT_OK)
}

fn single_source(c: &Circuit) -> Result<Excitation> {
    let sources: Vec<&str> = c
        .components
        .iter()
        .filter(|k| matches!(k.kind, ComponentKind::VSource { .. } | ComponentKind::ISource { .. }))
        .map(|k| k.label.as_str())
        .collect();
    match sources.as_slice() {
        [one] => Ok(Excitation::Source(one.to_string())),
        _ => Err(Error::Usage("give --input for this netlist".into())),
    }
}

fn parse_bound(s: &str) -> Result<(Var, (f64, f64))> {
    let (k, range) = s
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("expected VAR=LO:HI, got '{s}'")))?;
    let var: Var = k.trim().parse()?;
    let (a, b) = range
        .split_once(':')
        .ok_or_else(|| Error::Usage(format!("expected LO:HI in '{s}'")))?;
    let lo = parse_value(a.trim()).ok_or_else(|| Error::Usage(format!("bad bound '{a}'")))?;
    let hi = parse_value(b.trim()).ok_or_else(|| Error::Usage(format!("bad bound '{b}'")))?;
    Ok((var, (lo, hi)))
}

fn full_lna_params(input: &InputArgs) -> Result<TopologyParams> {
    if input.netlist.is_some() {
        return Err(Error::Usage("design works on --topology full_lna_fig8 parameter sets".into()));
    }
    let (t, p) = topology_params(input)?;
    if t != Topology::FullLnaFig8 {
        return Err(Error::Usage(format!("design needs the full_lna_fig8 topology, got {t}")));
    }
    Ok(p)
}

pub fn cmd_design(a: &DesignArgs) -> Result<i32> {
    let params = full_lna_params(&a.input)?;
    let mut bounds = VariableBounds::default();
    for b in &a.bounds {
        let (v, range) = parse_bound(b)?;
        bounds.set(v, range);
    }
    let free = a.free.iter().map(|s| s.parse()).collect::<Result<Vec<Var>>>()?;
    let pairing = match a.pairing {
        PairingArg::Paper => Pairing::Paper,
        PairingArg::Swapped => Pairing::Swapped,
        PairingArg::Auto => Pairing::Auto,
    };
    let opts = DesignOptions {
        cancellation: CancellationOptions { pairing, bounds, ..Default::default() },
        free,
        band: a.grid.band()?,
        match_input: !a.no_match,
        noise: true,
    };
    let (report, solved) = design_full_lna(&params, &opts)?;
    let circuit = build_topology(Topology::FullLnaFig8, &solved)?;
    a.output.write("design_report.json", &to_json_text(&report)?)?;
    a.output.write("design.net", &write_netlist(&circuit))?;
    a.output.write("design_params.json", &(solved.to_json() + "\n"))?;
    if !report.converged {
        eprintln!(
            "error: cancellation did not converge (residuals {:?}, {:?}); best point written",
            report.residuals.z1p1_rel, report.residuals.z2p2_rel
        );
        return Ok(EXIT_NOT_CONVERGED);
    }
    Ok(EXIT_OK)
}

/// Metrics of one full-LNA evaluation, keyed like the published summary table.
#[derive(Debug, Clone, Serialize)]
pub struct LnaReport {
    pub provenance: String,
    pub table: BTreeMap<&'static str, Value>,
    pub band_hz: (f64, f64),
    pub peak_s21_db: f64,
    pub peak_s21_freq_hz: f64,
    pub gain_flatness_db: f64,
    pub nf_min_db: f64,
    pub nf_max_db: f64,
    pub k_min: f64,
    pub delta_max: f64,
    pub group_delay_variation_s: f64,
    pub s11_max_db: f64,
    pub s22_max_db: f64,
    pub power_mw: f64,
    pub power_ratio: f64,
    pub design_converged: Option<bool>,
    pub checks: BTreeMap<&'static str, bool>,
}

/// Column names of the published summary table.
pub const TABLE_KEYS: [&str; 8] = [
    "Process",
    "Frequency (GHz)",
    "Peak S21 (dB)",
    "Gain flatness(dB)",
    "Minimum NF(dB)",
    "Group delay variation(ps)",
    "IIP3 (dBm)",
    "Power consumption(mW)",
];

pub const REPORT_PROVENANCE: &str = "Computed on a fitted hybrid-pi small-signal model with ideal passives; \
not a reproduction of measured or post-layout data. IIP3 is outside the model.";

fn min_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

pub fn lna_report(params: &TopologyParams, grid: &FrequencyGrid, band: (f64, f64), vcc: f64) -> Result<LnaReport> {
    let c = build_topology(Topology::FullLnaFig8, params)?;
    let r = analyze_circuit(&c, grid, NoiseOptions::default())?;
    let d = &r.derived;
    let inb = |v: &[f64]| band_values(&d.freqs, v, band);
    let s21 = inb(&d.s21_db)?;
    let fr = inb(&d.freqs)?;
    let (ipk, &pk) = s21
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("band has points");
    let nf = inb(&d.nf_db)?;
    let k = inb(&d.k)?;
    let delta = inb(&d.delta_mag)?;
    let gd = inb(&d.group_delay_s)?;
    let s11: Vec<f64> = r.sweep.s.iter().map(|m| db20(m[0][0])).collect();
    let s22: Vec<f64> = r.sweep.s.iter().map(|m| db20(m[1][1])).collect();
    let flat = gain_flatness(&r.sweep, band)?;
    let gd_var = (max_of(&gd) - min_of(&gd)) / 2.0;
    let ic = params.device_for("Q1").ic;
    let power = power_comparison(&PowerBudget { vcc1: vcc, vcc2: vcc, i1: ic, i2: ic, ic })?;
    let (s11_max, s22_max) = (max_of(&inb(&s11)?), max_of(&inb(&s22)?));
    let (k_min, delta_max) = (min_of(&k), max_of(&delta));

    let mut table = BTreeMap::new();
    table.insert(TABLE_KEYS[0], json!("hybrid-pi small-signal model"));
    table.insert(TABLE_KEYS[1], json!(format!("{}-{}", band.0 / 1e9, band.1 / 1e9)));
    table.insert(TABLE_KEYS[2], json!(pk));
    table.insert(TABLE_KEYS[3], json!(flat));
    table.insert(TABLE_KEYS[4], json!(min_of(&nf)));
    table.insert(TABLE_KEYS[5], json!(gd_var * 1e12));
    table.insert(TABLE_KEYS[6], Value::Null);
    table.insert(TABLE_KEYS[7], json!(power.p_reuse * 1e3));

    let mut checks = BTreeMap::new();
    checks.insert("s11_below_-10db", s11_max < -10.0);
    checks.insert("s22_below_-10db", s22_max < -10.0);
    checks.insert("k_above_1", k_min > 1.0);
    checks.insert("delta_below_1", delta_max < 1.0);
    checks.insert("flatness_within_1db", flat <= 1.0);

    Ok(LnaReport {
        provenance: REPORT_PROVENANCE.to_string(),
        table,
        band_hz: band,
        peak_s21_db: pk,
        peak_s21_freq_hz: fr[ipk],
        gain_flatness_db: flat,
        nf_min_db: min_of(&nf),
        nf_max_db: max_of(&nf),
        k_min,
        delta_max,
        group_delay_variation_s: gd_var,
        s11_max_db: s11_max,
        s22_max_db: s22_max,
        power_mw: power.p_reuse * 1e3,
        power_ratio: power.ratio,
        design_converged: None,
        checks,
    })
}

pub fn cmd_report(a: &ReportArgs) -> Result<i32> {
    let params = full_lna_params(&a.input)?;
    let band = a.grid.band()?;
    let grid = a.grid.grid()?;
    let (solved, converged) = if a.no_solve {
        (params, None)
    } else {
        let opts = DesignOptions { band, noise: false, ..Default::default() };
        let (r, s) = design_full_lna(&params, &opts)?;
        (s, Some(r.converged))
    };
    let mut report = lna_report(&solved, &grid, band, a.vcc)?;
    report.design_converged = converged;
    let defaults = [Format::Json];
    if a.output.format.iter().any(|f| *f != Format::Json) {
        return Err(Error::Usage("report writes JSON only".into()));
    }
    if a.output.wants(Format::Json, &defaults) {
        a.output.write("report.json", &to_json_text(&report)?)?;
    }
    Ok(if converged == Some(false) { EXIT_NOT_CONVERGED } else { EXIT_OK })
}
