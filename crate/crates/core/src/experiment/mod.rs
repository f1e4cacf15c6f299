//! Experiment configuration, sweeps over `(N, m)`, CSV output and the
//! invariant suite.

mod config;
mod run;
mod verify;

pub use config::{CalibrationConfig, ExperimentConfig, ExperimentKind, MethodKind, Overrides};
pub use run::{error_kind, run, run_in_memory, write_csv, Row, RunOutcome, CSV_HEADER};
pub use verify::{
    backprop_gradient_check, model_gradient_check, svgd_check, verify, Check, GradientCheck, Status, VerifyReport,
};
