//! Contention-based asynchronous uplink: spreading pool, delay-expanded
//! dictionary, random frames and noisy observations.
//!
//! `X` and `Y` use a symbol-major column layout: column `slot·R + r` holds
//! antenna `r` of symbol slot `slot`, pilots first, then data.

mod config;
mod observation;
mod pool;
mod qam;
mod realization;

pub use config::{PathLossOverride, SystemConfig};
pub use observation::{synthesize_observation, Observation, SeedRecord};
pub use pool::{ExpandedDictionary, SpreadingPool};
pub use qam::Qam;
pub use realization::{draw_realization, ActiveUser, TransmissionRealization, PILOT_SYMBOL};
