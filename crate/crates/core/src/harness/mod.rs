//! Synthetic selection studies: draw a truth, fit a prior, run each policy
//! for a fixed budget and estimate the probability of correct selection.

mod config;
mod output;
mod run;
mod study;
mod truth;

pub use config::{Method, PerFactor, StudyConfig, SIGNAL_LEVEL};
pub use output::{
    write_meta, write_outputs, write_pcs, write_traces, ENCODING, META_FILE, PCS_FILE, TRACES_FILE,
};
pub use run::{
    fit_prior, run_replication, run_with_truth, PriorFit, ReplicationSeeds, Trace, TraceStep,
};
pub use study::{
    estimate_pcs, estimate_pcs_traces, pcs_stderr, run_study, MethodResult, StudyResult,
};
pub use truth::{gen_truth, simulate_observation, SyntheticTruth, TruthSimulator};
