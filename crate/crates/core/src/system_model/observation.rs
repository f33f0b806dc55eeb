use serde::{Deserialize, Serialize};

use super::{ExpandedDictionary, TransmissionRealization};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, matmul, CMatrix};
use crate::rng::{complex_normal, rng_from_seed, RNG_ALGORITHM};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub algorithm: String,
    pub pool: Option<u64>,
    pub realization: Option<u64>,
    pub noise: Option<u64>,
}

impl SeedRecord {
    pub fn new(pool: Option<u64>, realization: Option<u64>, noise: Option<u64>) -> Self {
        SeedRecord {
            algorithm: RNG_ALGORITHM.to_string(),
            pool,
            realization,
            noise,
        }
    }
}

/// Received matrix `Y = Ŝ·X + N` with the noise level it was generated at.
#[derive(Debug, Clone)]
pub struct Observation {
    pub y: CMatrix,
    /// Noise power per complex sample σ².
    pub noise_var: f64,
    pub seeds: SeedRecord,
    /// Set when the noiseless signal had zero power and σ² was forced to 0.
    pub zero_signal: bool,
}

/// Adds complex Gaussian noise calibrated against the empirical per-sample
/// power of the noiseless `Ŝ·X` of this realization.
pub fn synthesize_observation(
    real: &TransmissionRealization,
    dict: &ExpandedDictionary,
    snr_db: f64,
    seed: u64,
) -> Result<Observation> {
    if dict.n_columns() != real.x_true().nrows() {
        return Err(Error::dims("observation synthesis", dict.n_columns(), real.x_true().nrows()));
    }
    if snr_db.is_nan() {
        return Err(Error::config("snr_db", "is NaN"));
    }
    let clean = matmul(dict.matrix(), real.x_true());
    let samples = (clean.nrows() * clean.ncols()) as f64;
    let signal_power = if samples > 0.0 { frobenius_sq(&clean) / samples } else { 0.0 };
    let zero_signal = signal_power == 0.0;
    let noise_var = if zero_signal || snr_db == f64::INFINITY {
        0.0
    } else {
        signal_power / 10f64.powf(snr_db / 10.0)
    };
    if zero_signal && snr_db.is_finite() {
        log::warn!("zero-power realization: noise variance forced to 0");
    }
    let mut y = clean;
    if noise_var > 0.0 {
        let mut rng = rng_from_seed(seed);
        for z in y.iter_mut() {
            *z += complex_normal(&mut rng, noise_var);
        }
    }
    Ok(Observation {
        y,
        noise_var,
        seeds: SeedRecord::new(None, real.seed(), Some(seed)),
        zero_signal,
    })
}
