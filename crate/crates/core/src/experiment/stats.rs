use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    /// Standard error of the mean (0 for fewer than two samples).
    pub se: f64,
    pub n: usize,
}

/// Mean and standard error; `None` for an empty sample.
pub fn mean_se(xs: &[f64]) -> Option<MeanSe> {
    let n = xs.len();
    if n == 0 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Some(MeanSe { mean, se, n })
}

/// Paired difference `a − b` with a 95% normal-approximation interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedDiff {
    pub mean: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

pub fn paired_diff(a: &[f64], b: &[f64]) -> Option<PairedDiff> {
    if a.len() != b.len() {
        return None;
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = mean_se(&d)?;
    Some(PairedDiff {
        mean: m.mean,
        se: m.se,
        ci_low: m.mean - Z_95 * m.se,
        ci_high: m.mean + Z_95 * m.se,
        n: m.n,
    })
}

/// One-sided exact sign test: probability of at least `successes` positive
/// signs among `n` non-tied pairs under a fair coin.
pub fn sign_test_p(successes: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    // Work in log space so large n stays finite.
    let ln_choose = |k: usize| -> f64 { ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k) };
    let half = (0.5f64).ln() * n as f64;
    (successes..=n).map(|k| (ln_choose(k) + half).exp()).sum::<f64>().min(1.0)
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Sign test of the claim that every difference is `> 0`; zeros are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub positive: usize,
    pub negative: usize,
    pub ties: usize,
    pub p_value: f64,
}

pub fn sign_test(diffs: &[f64]) -> SignTest {
    let positive = diffs.iter().filter(|d| **d > 0.0).count();
    let negative = diffs.iter().filter(|d| **d < 0.0).count();
    SignTest {
        positive,
        negative,
        ties: diffs.len() - positive - negative,
        p_value: sign_test_p(positive, positive + negative),
    }
}
