//! Reproducible experiments: single solves, Monte-Carlo sweeps with common
//! random numbers, training runs, uniqueness checks and named presets.

mod run;
mod spec;
mod stats;

pub use run::*;
pub use spec::{ExperimentSpec, GenericMmvSpec, LampSpec, Solver, SweepAxis, PRESET_NAMES};
pub use stats::{mean_se, paired_diff, sign_test, sign_test_p, MeanSe, PairedDiff, SignTest, Z_95};
