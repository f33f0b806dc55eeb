use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold multipliers `α`: one value for every iteration, one per
/// iteration, one list per backward stage (index `i − 1` for stage `i`), or
/// `α₀·√c` for a stage over `c` columns.
///
/// A zero row of the pseudo-data has norm close to `σ√c` while
/// `λ = α‖V‖_F/√(M̃c)` is close to `ασ`, so a multiplier that suits one
/// column lets most noise rows through once `c` grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSchedule {
    Constant(f64),
    PerIteration(Vec<f64>),
    PerStage(Vec<Vec<f64>>),
    ColumnScaled { column_scaled: f64 },
}

impl AlphaSchedule {
    /// `α` for 0-based stage index and iteration of a stage spanning `cols`
    /// columns; lists shorter than the iteration count repeat their last
    /// entry.
    pub fn get(&self, stage: usize, iter: usize, cols: usize) -> f64 {
        fn at(v: &[f64], t: usize) -> f64 {
            v[t.min(v.len() - 1)]
        }
        match self {
            AlphaSchedule::Constant(a) => *a,
            AlphaSchedule::PerIteration(v) => at(v, iter),
            AlphaSchedule::PerStage(s) => at(&s[stage.min(s.len() - 1)], iter),
            AlphaSchedule::ColumnScaled { column_scaled } => column_scaled * (cols as f64).sqrt(),
        }
    }

    pub fn n_stages(&self) -> Option<usize> {
        match self {
            AlphaSchedule::PerStage(s) => Some(s.len()),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: &[f64]| !v.is_empty() && v.iter().all(|a| *a > 0.0 && a.is_finite());
        let valid = match self {
            AlphaSchedule::Constant(a) => *a > 0.0 && a.is_finite(),
            AlphaSchedule::PerIteration(v) => ok(v),
            AlphaSchedule::PerStage(s) => !s.is_empty() && s.iter().all(|v| ok(v)),
            AlphaSchedule::ColumnScaled { column_scaled: a } => *a > 0.0 && a.is_finite(),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::config("alpha", "every entry must be positive and finite"))
        }
    }
}

/// How the support threshold `δ` is chosen for the backward stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaRule {
    /// `δ = k · median row norm` of the previous stage's pre-threshold
    /// estimate `X̂ + Bᴴ·V`; that median tracks the effective noise level.
    NoiseScaled(f64),
    Absolute(f64),
}

impl DeltaRule {
    pub fn resolve(&self, pseudo_row_norms: &[f64]) -> f64 {
        match *self {
            DeltaRule::Absolute(d) => d,
            DeltaRule::NoiseScaled(k) => {
                if pseudo_row_norms.is_empty() {
                    return 0.0;
                }
                let mut v = pseudo_row_norms.to_vec();
                v.sort_by(f64::total_cmp);
                let n = v.len();
                let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
                k * median
            }
        }
    }

    pub fn to_tag(&self) -> String {
        match self {
            DeltaRule::NoiseScaled(k) => format!("noise_scaled:{k:?}"),
            DeltaRule::Absolute(d) => format!("absolute:{d:?}"),
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        let (kind, v) = s.split_once(':')?;
        let v: f64 = v.parse().ok()?;
        match kind {
            "noise_scaled" => Some(DeltaRule::NoiseScaled(v)),
            "absolute" => Some(DeltaRule::Absolute(v)),
            _ => None,
        }
    }
}

/// What `‖X̂‖₀` counts in the Onsager coefficient `b = ‖X̂‖₀ / (M̃·c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnsagerCount {
    /// Nonzero entries (matrix ℓ0).
    Entries,
    /// Nonzero rows.
    Rows,
}

impl OnsagerCount {
    pub fn as_str(&self) -> &'static str {
        match self {
            OnsagerCount::Entries => "entries",
            OnsagerCount::Rows => "rows",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "entries" => Some(OnsagerCount::Entries),
            "rows" => Some(OnsagerCount::Rows),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmpConfig {
    /// Iterations per stage `T`.
    pub n_iters: usize,
    pub alpha: AlphaSchedule,
    pub delta: DeltaRule,
    /// Stop a stage once `‖X̂ᵗ⁺¹ − X̂ᵗ‖_F ≤ stop_tol·‖X̂ᵗ⁺¹‖_F`; 0 disables.
    pub stop_tol: f64,
    pub onsager_count: OnsagerCount,
    /// When false, the last-slot stage adds `V^{t−1}` with coefficient 1
    /// instead of the Onsager coefficient.
    pub first_stage_onsager: bool,
}

impl Default for AmpConfig {
    fn default() -> Self {
        AmpConfig {
            n_iters: 30,
            alpha: AlphaSchedule::ColumnScaled { column_scaled: 1.25 },
            delta: DeltaRule::NoiseScaled(3.0),
            stop_tol: 1e-8,
            onsager_count: OnsagerCount::Entries,
            first_stage_onsager: true,
        }
    }
}

impl AmpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iters == 0 {
            return Err(Error::config("n_iters", "must be at least 1"));
        }
        self.alpha.validate()?;
        let d = match self.delta {
            DeltaRule::NoiseScaled(v) | DeltaRule::Absolute(v) => v,
        };
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::config("delta", "must be non-negative and finite"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::config("stop_tol", "must be non-negative"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_lookup() {
        let s = AlphaSchedule::PerStage(vec![vec![1.0, 2.0], vec![3.0]]);
        assert_eq!(s.get(0, 1, 4), 2.0);
        assert_eq!(s.get(0, 5, 4), 2.0);
        assert_eq!(s.get(1, 0, 3), 3.0);
        assert_eq!(AlphaSchedule::Constant(0.7).get(3, 9, 1), 0.7);
        assert_eq!(AlphaSchedule::ColumnScaled { column_scaled: 1.5 }.get(0, 0, 4), 3.0);
    }

    #[test]
    fn config_toml() {
        let c: AmpConfig = toml::from_str("n_iters = 5\nalpha = [1.0, 1.2]\ndelta = { absolute = 0.1 }\n").unwrap();
        assert_eq!(c.alpha, AlphaSchedule::PerIteration(vec![1.0, 1.2]));
        assert_eq!(c.delta, DeltaRule::Absolute(0.1));
        c.validate().unwrap();
        let c: AmpConfig = toml::from_str("alpha = { column_scaled = 1.1 }\n").unwrap();
        assert_eq!(c.alpha, AlphaSchedule::ColumnScaled { column_scaled: 1.1 });
        assert_eq!(c.delta, AmpConfig::default().delta);
        let bad = AmpConfig { alpha: AlphaSchedule::Constant(0.0), ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn delta_tags_round_trip() {
        for d in [DeltaRule::NoiseScaled(3.0), DeltaRule::Absolute(0.125)] {
            assert_eq!(DeltaRule::from_tag(&d.to_tag()), Some(d));
        }
        assert_eq!(DeltaRule::NoiseScaled(2.0).resolve(&[1.0, 5.0, 0.0]), 2.0);
    }
}
