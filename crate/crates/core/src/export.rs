//! Text outputs: CSV, Touchstone `.s2p`, JSON. Numbers carry nine
//! significant digits so repeated runs are byte-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::Value;

use crate::error::Result;
use crate::polezero::{Cancellation, PoleZeroSet};
use crate::sweep::TwoPortSweep;
use crate::units::{format_sig9, round_sig9};

pub const SPARAM_HEADER: &str = "freq_hz,s11_re,s11_im,s12_re,s12_im,s21_re,s21_im,s22_re,s22_im";
pub const DERIVED_HEADER: &str = "freq_hz,s21_db,nf_db,k,delta_mag,group_delay_s";
pub const NF_HEADER: &str = "freq_hz,nf_db_analytic,nf_db_oracle,nfmin_db,rn_ohm,zopt_re,zopt_im";

fn row(values: &[f64]) -> String {
    let mut s = values.iter().map(|v| format_sig9(*v)).collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

pub fn sparams_csv(s: &TwoPortSweep) -> String {
    let mut out = format!("{SPARAM_HEADER}\n");
    for (f, m) in s.freqs.iter().zip(&s.s) {
        out += &row(&[*f, m[0][0].re, m[0][0].im, m[0][1].re, m[0][1].im, m[1][0].re, m[1][0].im, m[1][1].re, m[1][1].im]);
    }
    out
}

/// Derived-metric columns, one entry per sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedColumns {
    pub freqs: Vec<f64>,
    pub s21_db: Vec<f64>,
    pub nf_db: Vec<f64>,
    pub k: Vec<f64>,
    pub delta_mag: Vec<f64>,
    pub group_delay_s: Vec<f64>,
}

/// Derived CSV; `flatness` adds a trailing `# gain_flatness_db,lo,hi,value` line.
pub fn derived_csv(d: &DerivedColumns, flatness: Option<((f64, f64), f64)>) -> String {
    let mut out = format!("{DERIVED_HEADER}\n");
    for i in 0..d.freqs.len() {
        out += &row(&[d.freqs[i], d.s21_db[i], d.nf_db[i], d.k[i], d.delta_mag[i], d.group_delay_s[i]]);
    }
    if let Some(((lo, hi), v)) = flatness {
        out += &format!("# gain_flatness_db,{},{},{}\n", format_sig9(lo), format_sig9(hi), format_sig9(v));
    }
    out
}

/// Reads the flatness line written by [`derived_csv`].
pub fn parse_flatness_line(csv: &str) -> Option<f64> {
    csv.lines()
        .find_map(|l| l.strip_prefix("# gain_flatness_db,"))
        .and_then(|rest| rest.rsplit(',').next())
        .and_then(|v| v.trim().parse().ok())
}

/// Touchstone v1 two-port file, real/imaginary pairs in S11 S21 S12 S22 order.
pub fn touchstone_s2p(s: &TwoPortSweep, title: &str) -> String {
    let mut out = String::new();
    if !title.is_empty() {
        out += &format!("! {title}\n");
    }
    out += &format!("# HZ S RI R {}\n", trim_number(s.z0[0]));
    for (f, m) in s.freqs.iter().zip(&s.s) {
        let cols = [*f, m[0][0].re, m[0][0].im, m[1][0].re, m[1][0].im, m[0][1].re, m[0][1].im, m[1][1].re, m[1][1].im];
        out += &cols.iter().map(|v| format_sig9(*v)).collect::<Vec<_>>().join(" ");
        out.push('\n');
    }
    out
}

fn trim_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format_sig9(v)
    }
}

/// One row of the NF sweep CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NfRow {
    pub freq_hz: f64,
    pub nf_db_analytic: f64,
    pub nf_db_oracle: f64,
    pub nfmin_db: f64,
    pub rn_ohm: f64,
    pub zopt: Complex64,
}

pub fn nf_csv(rows: &[NfRow]) -> String {
    let mut out = format!("{NF_HEADER}\n");
    for r in rows {
        out += &row(&[r.freq_hz, r.nf_db_analytic, r.nf_db_oracle, r.nfmin_db, r.rn_ohm, r.zopt.re, r.zopt.im]);
    }
    out
}

/// Rounds every number to nine significant digits; non-finite values are
/// already `null` after `serde_json::to_value`.
pub fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if let Some(x) = n.as_f64().filter(|_| n.is_f64()) {
                if let Some(r) = serde_json::Number::from_f64(round_sig9(x)) {
                    *n = r;
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_json),
        Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Pretty JSON with rounded numbers and a trailing newline.
pub fn to_json_text<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

fn complex_json(z: Complex64) -> Value {
    serde_json::json!({ "re": z.re, "im": z.im })
}

/// `{"poles":[{"re":..,"im":..}],"zeros":[...],"gain":..,"residuals":[...]}`.
pub fn polezero_json(set: &PoleZeroSet, residuals: &[Cancellation]) -> Value {
    let res: Vec<Value> = residuals
        .iter()
        .map(|c| {
            serde_json::json!({
                "pole": complex_json(c.pole),
                "zero": c.zero.map(complex_json),
                "residual": if c.residual.is_finite() { Value::from(c.residual) } else { Value::Null },
            })
        })
        .collect();
    serde_json::json!({
        "poles": set.poles.iter().map(|p| complex_json(*p)).collect::<Vec<_>>(),
        "zeros": set.zeros.iter().map(|z| complex_json(*z)).collect::<Vec<_>>(),
        "gain": if set.gain.is_finite() { Value::from(set.gain) } else { Value::Null },
        "residuals": res,
    })
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}
