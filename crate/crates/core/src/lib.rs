//! Grant-free random access simulation: signal model, AMP and learned AMP
//! receivers with backward propagation, detection metrics, and experiments.

pub mod detection;
pub mod error;
pub mod experiment;
pub mod io;
pub mod learned;
pub mod linalg;
pub mod recovery;
pub mod rng;
pub mod system_model;
pub mod theory;

pub use error::{Error, Result};
