//! Evaluation layer for OK-DMD reduced models: error metrics, rank and kernel
//! sweeps, CSV/SVG output and explicit-coordinate oracle checks.

pub mod experiment;
pub mod metrics;
pub mod oracle;
pub mod plot;

pub use experiment::{sweep, ExperimentConfig, ExperimentTable, Row};
pub use metrics::epsilon;
pub use oracle::{oracle_check, OracleReport};
