use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Classes of netlist validation failure that are not syntax errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemanticKind {
    DanglingNode,
    NonPositiveValue,
    DuplicateLabel,
    UnknownModel,
    BadTerminalCount,
    InvalidParameter,
}

impl fmt::Display for SemanticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SemanticKind::DanglingNode => "dangling node",
            SemanticKind::NonPositiveValue => "non-positive value",
            SemanticKind::DuplicateLabel => "duplicate label",
            SemanticKind::UnknownModel => "unknown model",
            SemanticKind::BadTerminalCount => "bad terminal count",
            SemanticKind::InvalidParameter => "invalid parameter",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}, column {col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },

    #[error("line {line}, column {col}: {kind}: {msg}")]
    Semantic {
        line: usize,
        col: usize,
        kind: SemanticKind,
        msg: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("circuit structure: {0}")]
    Structure(String),

    #[error("singular system matrix at s = {re:e} + {im:e}j")]
    Singular { re: f64, im: f64 },

    #[error("solve residual {residual:e} exceeds tolerance at s = {re:e} + {im:e}j")]
    Residual { residual: f64, re: f64, im: f64 },

    #[error("port error: {0}")]
    Port(String),

    #[error("frequency grid: {0}")]
    Grid(String),

    #[error("eigen-solver failure: {0}")]
    Eigen(String),

    #[error("transfer-function interpolation failed: {0}")]
    Interpolation(String),

    #[error("degenerate denominator in {expr}: {symbol} makes it vanish")]
    Degenerate { expr: &'static str, symbol: String },

    #[error("equivalent noise resistance is negative ({rn:e} ohm); model breaks down")]
    NegativeRn { rn: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("missing parameter: {0}")]
    MissingParameter(String),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn singular(s: num_complex::Complex64) -> Self {
        Error::Singular { re: s.re, im: s.im }
    }

    /// True for failures caused by bad input rather than by numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Syntax { .. }
                | Error::Semantic { .. }
                | Error::Domain(_)
                | Error::Structure(_)
                | Error::Port(_)
                | Error::Grid(_)
                | Error::MissingParameter(_)
                | Error::Usage(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::Degenerate { .. }
                | Error::Infeasible(_)
        )
    }
}
