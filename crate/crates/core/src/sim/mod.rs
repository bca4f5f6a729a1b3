//! Simulation harness: synthetic cavity corpus, endoscope-style sampling,
//! leave-one-out trials and reporting.

pub mod corpus;
pub mod offset;
pub mod report;
pub mod trial;
pub mod visibility;

pub use corpus::{generate_corpus, BaseCavity, CorpusSpec};
pub use offset::{apply_offset, sample_offset, OffsetRanges};
pub use report::{read_trials_csv, summarize, write_long_csv, write_trials_csv, Summary};
pub use trial::{
    corrupt, run_experiment, run_trial, trial_seed, ExperimentSpec, RunOptions, TrialInputs, TrialOutcome, TrialRecord,
    TrialSpec, TRIAL_COLUMNS,
};
pub use visibility::{sample_visible_points, visible_triangles};
