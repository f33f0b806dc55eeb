use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-user override of the path-loss scale `l_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLossOverride {
    pub user: usize,
    pub scale: f64,
}

/// Scenario scalars of the asynchronous uplink.
///
/// Keys in config files are named exactly as these fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Total user population N.
    pub n_users: usize,
    /// Size M of the shared spreading-sequence pool.
    pub n_sequences: usize,
    /// Spreading sequence length L_s.
    pub seq_len: usize,
    /// Guard time T_g in symbols.
    pub guard: usize,
    /// Largest symbol delay T_max (≤ guard).
    pub max_delay: usize,
    /// Pilot symbols per user L_p.
    pub n_pilot: usize,
    /// Maximum number of data symbols L_d.
    pub max_data: usize,
    /// Receive antennas R.
    pub n_antennas: usize,
    /// Active users per frame N_a.
    pub n_active: usize,
    /// Signal-to-noise ratio in dB; `inf` disables noise.
    pub snr_db: f64,
    pub path_loss_default: f64,
    /// Square-QAM constellation size.
    pub modulation_order: usize,
    pub path_loss_overrides: Vec<PathLossOverride>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n_users: 1000,
            n_sequences: 100,
            seq_len: 70,
            guard: 3,
            max_delay: 3,
            n_pilot: 1,
            max_data: 3,
            n_antennas: 1,
            n_active: 24,
            snr_db: 30.0,
            path_loss_default: 1.0,
            modulation_order: 16,
            path_loss_overrides: Vec::new(),
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_users", self.n_users),
            ("n_sequences", self.n_sequences),
            ("seq_len", self.seq_len),
            ("n_pilot", self.n_pilot),
            ("max_data", self.max_data),
            ("n_antennas", self.n_antennas),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.n_active > self.n_users {
            return Err(Error::config(
                "n_active",
                format!("{} exceeds n_users = {}", self.n_active, self.n_users),
            ));
        }
        if self.max_delay > self.guard {
            return Err(Error::config(
                "max_delay",
                format!("{} exceeds guard = {}", self.max_delay, self.guard),
            ));
        }
        let m = self.modulation_order;
        let side = (m as f64).sqrt().round() as usize;
        if m < 4 || side * side != m || !side.is_power_of_two() {
            return Err(Error::config(
                "modulation_order",
                format!("{m} is not a Gray-mappable square QAM size (4, 16, 64, ...)"),
            ));
        }
        if self.snr_db.is_nan() {
            return Err(Error::config("snr_db", "is NaN"));
        }
        if !(self.path_loss_default > 0.0 && self.path_loss_default.is_finite()) {
            return Err(Error::config("path_loss_default", "must be positive and finite"));
        }
        for o in &self.path_loss_overrides {
            if o.user >= self.n_users {
                return Err(Error::config("path_loss_overrides", format!("user {} out of range", o.user)));
            }
            if !(o.scale > 0.0 && o.scale.is_finite()) {
                return Err(Error::config("path_loss_overrides", "scale must be positive and finite"));
            }
        }
        Ok(())
    }

    /// Rows of the measurement model, `L_s + T_g`.
    pub fn n_rows(&self) -> usize {
        self.seq_len + self.guard
    }

    /// Columns of the expanded dictionary, `M·(T_g+1)`.
    pub fn n_dict_columns(&self) -> usize {
        self.n_sequences * (self.guard + 1)
    }

    /// Symbol slots per frame, `L = L_p + L_d`.
    pub fn n_slots(&self) -> usize {
        self.n_pilot + self.max_data
    }

    /// Columns of `Y` and `X`, `R·L`.
    pub fn n_columns(&self) -> usize {
        self.n_antennas * self.n_slots()
    }

    pub fn path_loss(&self, user: usize) -> f64 {
        self.path_loss_overrides
            .iter()
            .rev()
            .find(|o| o.user == user)
            .map_or(self.path_loss_default, |o| o.scale)
    }

    /// Dictionary column of sequence `m` at delay `t` (both 0-based).
    pub fn row_index(&self, m: usize, t: usize) -> usize {
        m * (self.guard + 1) + t
    }

    /// Inverse of [`SystemConfig::row_index`].
    pub fn row_to_pair(&self, row: usize) -> (usize, usize) {
        (row / (self.guard + 1), row % (self.guard + 1))
    }

    /// Column of antenna `r` in symbol slot `slot` (symbol-major layout).
    pub fn column_index(&self, slot: usize, antenna: usize) -> usize {
        slot * self.n_antennas + antenna
    }
}
