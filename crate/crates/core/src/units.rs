//! Engineering-notation number parsing.
//!
//! Accepts SPICE-style scale suffixes (`f p n u m k meg g t`, case
//! insensitive, `meg` checked before `m`). Trailing unit letters after the
//! suffix are ignored, so `0.28nH` and `50ohm` parse as expected.

/// Parses a number with an optional engineering suffix.
pub fn parse_value(text: &str) -> Option<f64> {
    let s = text.trim();
    if s.is_empty() {
        return None;
    }
    let split = numeric_prefix_len(s);
    if split == 0 {
        return None;
    }
    let mantissa: f64 = s[..split].parse().ok()?;
    let rest = s[split..].to_ascii_lowercase();
    let scale = if rest.is_empty() {
        1.0
    } else if rest.starts_with("meg") {
        1e6
    } else if rest.starts_with("mil") {
        25.4e-6
    } else {
        match rest.chars().next()? {
            'f' => 1e-15,
            'p' => 1e-12,
            'n' => 1e-9,
            'u' | 'µ' => 1e-6,
            'm' => 1e-3,
            'k' => 1e3,
            'g' => 1e9,
            't' => 1e12,
            c if c.is_ascii_alphabetic() => 1.0,
            _ => return None,
        }
    };
    if !rest.chars().all(|c| c.is_alphabetic()) {
        return None;
    }
    Some(mantissa * scale)
}

// Longest prefix that is a float literal: sign, digits, '.', exponent.
fn numeric_prefix_len(s: &str) -> usize {
    let b = s.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let digits_start = i;
    while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
        i += 1;
    }
    if i == digits_start {
        return 0;
    }
    // exponent only if followed by digits, so "1e" stays mantissa + unit
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        let exp_digits = j;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_digits {
            i = j;
        }
    }
    i
}

/// Formats a value so that [`parse_value`] recovers it bit-for-bit.
pub fn format_exact(v: f64) -> String {
    format!("{v:e}")
}

/// Nine significant digits, the precision used by every report writer.
pub fn format_sig9(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.8e}")
    }
}

/// Rounds to nine significant digits (for JSON output).
pub fn round_sig9(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.8e}").parse().unwrap_or(v)
}
