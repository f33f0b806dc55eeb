//! Sparse recovery of the user-activity matrix from `Y = Ŝ·X + N`.

mod amp;
mod config;
mod threshold;

pub use amp::{amp_bp, amp_mmv, extract_support, ls_reinitialize, RecoveryResult, StageDiagnostics};
pub(crate) use amp::{backward_sweep, StageWeights, SweepOptions};
pub use config::{AlphaSchedule, AmpConfig, DeltaRule, OnsagerCount};
pub use threshold::{prior_aided_threshold, row_soft_threshold, shrink_factor};
