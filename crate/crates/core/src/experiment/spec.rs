use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detection::DetectionConfig;
use crate::error::{Error, Result};
use crate::learned::{TrainConfig, Variant, DESK_DATASET_SIZE};
use crate::recovery::{AlphaSchedule, AmpConfig};
use crate::system_model::SystemConfig;
use crate::theory::UniquenessTrialConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Amp,
    AmpBp,
    Lamp,
    LampBp,
}

impl Solver {
    pub const ALL: [Solver; 4] = [Solver::Amp, Solver::AmpBp, Solver::Lamp, Solver::LampBp];

    pub fn as_str(&self) -> &'static str {
        match self {
            Solver::Amp => "amp",
            Solver::AmpBp => "amp_bp",
            Solver::Lamp => "lamp",
            Solver::LampBp => "lamp_bp",
        }
    }

    /// Network variant a learned solver needs.
    pub fn variant(&self) -> Option<Variant> {
        match self {
            Solver::Lamp => Some(Variant::Mmv),
            Solver::LampBp => Some(Variant::Bp),
            _ => None,
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Solver::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::config("solvers", format!("unknown solver `{s}` (amp, amp_bp, lamp, lamp_bp)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NActive,
    SeqLen,
    SnrDb,
    Guard,
    /// Constant AMP threshold multiplier; used by the generic MMV study.
    Alpha,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::NActive => "n_active",
            SweepAxis::SeqLen => "seq_len",
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::Guard => "guard",
            SweepAxis::Alpha => "alpha",
        }
    }

    fn integral(&self) -> bool {
        matches!(self, SweepAxis::NActive | SweepAxis::SeqLen | SweepAxis::Guard)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepAxis::NActive, SweepAxis::SeqLen, SweepAxis::SnrDb, SweepAxis::Guard, SweepAxis::Alpha]
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config("sweep_axis", format!("unknown axis `{s}`")))
    }
}

/// How learned solvers get their parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LampSpec {
    pub n_layers: usize,
    pub shared_b: bool,
    pub dataset_size: usize,
    /// Loads cycled through the training set; empty uses the base `n_active`.
    pub train_n_active: Vec<usize>,
    /// Pre-trained parameter files; training runs when absent.
    pub params_mmv: Option<PathBuf>,
    pub params_bp: Option<PathBuf>,
}

impl Default for LampSpec {
    fn default() -> Self {
        LampSpec {
            n_layers: 10,
            shared_b: true,
            dataset_size: DESK_DATASET_SIZE,
            train_n_active: Vec::new(),
            params_mmv: None,
            params_bp: None,
        }
    }
}

impl LampSpec {
    pub fn params_path(&self, variant: Variant) -> Option<&Path> {
        match variant {
            Variant::Mmv => self.params_mmv.as_deref(),
            Variant::Bp => self.params_bp.as_deref(),
        }
    }
}

/// Gaussian row-sparse MMV instances, independent of the access model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenericMmvSpec {
    pub m_dim: usize,
    pub n_dim: usize,
    pub n_nonzero: usize,
    pub n_columns: usize,
    pub snr_db: f64,
}

impl Default for GenericMmvSpec {
    fn default() -> Self {
        GenericMmvSpec {
            m_dim: 200,
            n_dim: 500,
            n_nonzero: 40,
            n_columns: 4,
            snr_db: 10.0,
        }
    }
}

/// A complete, reproducible experiment.
///
/// `seed` is the only source of randomness: pool, trials, datasets and
/// training shuffles all derive from it (`train.seed` is overwritten).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub system: SystemConfig,
    pub amp: AmpConfig,
    pub detection: DetectionConfig,
    pub train: TrainConfig,
    pub lamp: LampSpec,
    pub sweep_axis: Option<SweepAxis>,
    pub sweep_values: Vec<f64>,
    pub n_trials: usize,
    pub solvers: Vec<Solver>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub generic: Option<GenericMmvSpec>,
    pub theory: Option<UniquenessTrialConfig>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "custom".into(),
            system: SystemConfig::default(),
            amp: AmpConfig::default(),
            detection: DetectionConfig::default(),
            train: TrainConfig::default(),
            lamp: LampSpec::default(),
            sweep_axis: None,
            sweep_values: Vec::new(),
            n_trials: 1,
            solvers: vec![Solver::AmpBp],
            seed: 0,
            output_dir: PathBuf::from("out"),
            generic: None,
            theory: None,
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io("reading config", path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::config("n_trials", "must be at least 1"));
        }
        if self.solvers.is_empty() {
            return Err(Error::config("solvers", "needs at least one solver"));
        }
        let mut seen = self.solvers.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.solvers.len() {
            return Err(Error::config("solvers", "lists a solver twice"));
        }
        self.amp.validate()?;
        self.detection.validate()?;
        if let Some(g) = &self.generic {
            if g.m_dim == 0 || g.n_dim == 0 || g.n_columns == 0 || g.n_nonzero > g.n_dim {
                return Err(Error::config("generic", "needs positive sizes and n_nonzero ≤ n_dim"));
            }
            if self.solvers != [Solver::Amp] {
                return Err(Error::config("solvers", "generic MMV instances only support `amp`"));
            }
        } else {
            self.system.validate()?;
        }
        if self.solvers.iter().any(|s| s.variant().is_some()) {
            self.train.validate()?;
            if self.lamp.n_layers == 0 || self.lamp.dataset_size < 2 {
                return Err(Error::config("lamp", "needs at least one layer and two training pairs"));
            }
        }
        match self.sweep_axis {
            None if !self.sweep_values.is_empty() => {
                return Err(Error::config("sweep_values", "given without a sweep_axis"));
            }
            Some(axis) => {
                if self.sweep_values.is_empty() {
                    return Err(Error::config("sweep_values", "must be nonempty"));
                }
                let up = self.sweep_values.windows(2).all(|w| w[0] < w[1]);
                let down = self.sweep_values.windows(2).all(|w| w[0] > w[1]);
                if !(up || down) {
                    return Err(Error::config("sweep_values", "must be strictly monotone"));
                }
                if axis.integral() && self.sweep_values.iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
                    return Err(Error::config("sweep_values", format!("{} takes non-negative integers", axis.as_str())));
                }
                if (axis == SweepAxis::Alpha) != self.generic.is_some() {
                    return Err(Error::config("sweep_axis", "alpha sweeps go with generic instances and only with them"));
                }
                if self.generic.is_none() {
                    for &v in &self.sweep_values {
                        self.point_config(v).validate()?;
                    }
                }
            }
            None => {}
        }
        Ok(())
    }

    /// Sweep values, or the single base point when there is no sweep.
    pub fn points(&self) -> Vec<f64> {
        match self.sweep_axis {
            Some(_) => self.sweep_values.clone(),
            None => vec![f64::NAN],
        }
    }

    /// System configuration at sweep value `v`. Guard sweeps move the largest
    /// delay along with the guard time.
    pub fn point_config(&self, v: f64) -> SystemConfig {
        let mut c = self.system.clone();
        match self.sweep_axis {
            Some(SweepAxis::NActive) => c.n_active = v as usize,
            Some(SweepAxis::SeqLen) => c.seq_len = v as usize,
            Some(SweepAxis::SnrDb) => c.snr_db = v,
            Some(SweepAxis::Guard) => {
                c.guard = v as usize;
                c.max_delay = v as usize;
            }
            Some(SweepAxis::Alpha) | None => {}
        }
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        presets::build(name).ok_or_else(|| {
            Error::config("preset", format!("unknown preset `{name}` (known: {})", PRESET_NAMES.join(", ")))
        })
    }
}

pub const PRESET_NAMES: [&str; 10] = [
    "tiny-noiseless",
    "empty",
    "paper-fig5",
    "paper-fig6-desk",
    "paper-fig7-desk",
    "paper-fig8-desk",
    "paper-fig9-desk",
    "desk-compare",
    "desk-train",
    "theory",
];

mod presets {
    use super::*;

    fn nominal() -> SystemConfig {
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
            modulation_order: 16,
            ..Default::default()
        }
    }

    fn desk() -> SystemConfig {
        SystemConfig {
            n_sequences: 40,
            seq_len: 32,
            n_active: 12,
            ..nominal()
        }
    }

    fn tiny() -> SystemConfig {
        SystemConfig {
            n_users: 100,
            n_sequences: 8,
            seq_len: 16,
            guard: 2,
            max_delay: 2,
            n_active: 3,
            snr_db: f64::INFINITY,
            ..nominal()
        }
    }

    fn sweep(name: &str, system: SystemConfig, axis: SweepAxis, values: &[f64]) -> ExperimentSpec {
        ExperimentSpec {
            name: name.into(),
            system,
            sweep_axis: Some(axis),
            sweep_values: values.to_vec(),
            n_trials: 200,
            solvers: vec![Solver::Amp, Solver::AmpBp],
            output_dir: PathBuf::from("out").join(name),
            ..Default::default()
        }
    }

    pub(super) fn build(name: &str) -> Option<ExperimentSpec> {
        let spec = match name {
            "tiny-noiseless" => ExperimentSpec {
                name: name.into(),
                system: tiny(),
                n_trials: 100,
                output_dir: PathBuf::from("out").join(name),
                ..Default::default()
            },
            "empty" => ExperimentSpec {
                name: name.into(),
                system: SystemConfig { n_active: 0, ..tiny() },
                output_dir: PathBuf::from("out").join(name),
                ..Default::default()
            },
            "paper-fig5" => ExperimentSpec {
                name: name.into(),
                amp: AmpConfig {
                    n_iters: 50,
                    alpha: AlphaSchedule::Constant(1.0),
                    ..Default::default()
                },
                sweep_axis: Some(SweepAxis::Alpha),
                sweep_values: vec![1.5, 2.0, 2.5, 3.0],
                n_trials: 20,
                solvers: vec![Solver::Amp],
                output_dir: PathBuf::from("out").join(name),
                generic: Some(GenericMmvSpec::default()),
                ..Default::default()
            },
            "paper-fig6-desk" => sweep(name, nominal(), SweepAxis::NActive, &[8.0, 12.0, 16.0, 20.0, 24.0]),
            "paper-fig7-desk" => sweep(name, nominal(), SweepAxis::SeqLen, &[40.0, 50.0, 60.0, 70.0]),
            "paper-fig8-desk" => sweep(name, nominal(), SweepAxis::SnrDb, &[10.0, 15.0, 20.0, 25.0, 30.0]),
            "paper-fig9-desk" => sweep(name, nominal(), SweepAxis::Guard, &[3.0, 5.0]),
            "desk-compare" => ExperimentSpec {
                solvers: vec![Solver::Amp, Solver::AmpBp, Solver::LampBp],
                lamp: LampSpec {
                    train_n_active: vec![8, 12, 16],
                    ..Default::default()
                },
                ..sweep(name, desk(), SweepAxis::NActive, &[8.0, 12.0, 16.0])
            },
            "desk-train" => ExperimentSpec {
                name: name.into(),
                system: desk(),
                solvers: vec![Solver::LampBp],
                lamp: LampSpec {
                    train_n_active: vec![8, 12, 16],
                    ..Default::default()
                },
                output_dir: PathBuf::from("out").join(name),
                ..Default::default()
            },
            "theory" => ExperimentSpec {
                name: name.into(),
                output_dir: PathBuf::from("out").join(name),
                theory: Some(UniquenessTrialConfig {
                    m_dim: 6,
                    n_dim: 12,
                    l_dim: 2,
                    r_known: 0,
                    trials: 100,
                    seed: 0,
                }),
                ..Default::default()
            },
            _ => return None,
        };
        Some(spec)
    }
}
