//! Small-signal analysis and design of wideband bipolar LNAs.

pub mod analytic;
pub mod circuit;
pub mod cli;
pub mod design;
pub mod error;
pub mod export;
pub mod mna;
pub mod netlist;
pub mod noise;
pub mod polezero;
pub mod sweep;
pub mod topology;
pub mod units;

pub use circuit::{Circuit, ComponentKind, HybridPiParams, NodeId};
pub use error::{Error, Result};
pub use num_complex::Complex64;
