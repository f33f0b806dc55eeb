//! Finite-difference check of the training gradients.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::dataset::Dataset;
use super::engine::{batch_mse, forward, kink_margin, loss_and_gradients};
use super::params::LampParams;
use super::train::{build_batch, next_priors, plans, Prior};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::rng::{complex_normal, derive_seed, rng_from_seed, SimRng, Stream};
use crate::system_model::ExpandedDictionary;

/// Points closer than this relative gap to a thresholding kink are moved.
pub const KINK_MARGIN: f64 = 1e-3;

const MAX_DRAWS: usize = 2000;
const STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientCheckPoint {
    /// 1-based subnetwork whose loss was differentiated.
    pub stage: usize,
    /// Directional derivative from the reverse pass.
    pub analytic: f64,
    /// Central finite difference along the same direction.
    pub numeric: f64,
    pub rel_error: f64,
    /// Relative distance of the nearest row norm to its threshold.
    pub kink_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheck {
    pub points: Vec<GradientCheckPoint>,
}

impl GradientCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.points.iter().map(|p| p.rel_error).fold(0.0, f64::max)
    }
}

/// Compares reverse-mode gradients of the batch loss with central finite
/// differences at `n_points` random parameter points near `params`.
///
/// Points cycle through the subnetworks in training order; later stages see
/// the priors produced by `params` itself. Every pair of `data` forms the
/// batch, so keep it small. Each point starts from a random perturbation and
/// is then nudged until no row norm lies within [`KINK_MARGIN`] of its
/// threshold.
pub fn check_gradients(
    data: &Dataset,
    dict: &ExpandedDictionary,
    params: &LampParams,
    n_points: usize,
    seed: u64,
) -> Result<GradientCheck> {
    params.check_dictionary(dict)?;
    if data.is_empty() {
        return Err(Error::config("data", "needs at least one pair"));
    }
    let stage_plans = plans(params);
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut priors: Vec<Option<Vec<Prior>>> = vec![None];
    for w in stage_plans.windows(2) {
        let prev = priors.last().and_then(|p| p.as_deref());
        priors.push(Some(next_priors(data, dict, params, &w[0], &w[1], prev, data.len())?));
    }

    let mut points = Vec::with_capacity(n_points);
    for point in 0..n_points {
        let k = point % stage_plans.len();
        let plan = &stage_plans[k];
        let batch = build_batch(data, &idx, plan, priors[k].as_deref(), dict.n_columns());
        let b0 = params.b(plan.index);
        let a0 = &params.alphas[plan.index];
        let b_scale = (b0.iter().map(|z| z.norm_sqr()).sum::<f64>() / b0.len().max(1) as f64).sqrt();
        let mut rng = rng_from_seed(derive_seed(seed, Stream::Training, &[u64::MAX, point as u64]));

        let perturb = |rng: &mut SimRng, b: &CMatrix, a: &[f64], spread: f64| {
            let b = b.map(|z| z + complex_normal(rng, (0.02 * spread * b_scale).powi(2)));
            let a: Vec<f64> = a.iter().map(|a| a * (0.1 * spread * rng.sample::<f64, _>(StandardNormal)).exp()).collect();
            (b, a)
        };
        let margin_at = |b: &CMatrix, a: &[f64]| {
            kink_margin(&forward(&batch, dict.matrix(), b, a, params.onsager_count, true), &batch)
        };
        // Random start, then a local walk that only accepts wider margins.
        let (mut b, mut alphas) = perturb(&mut rng, b0, a0, 1.0);
        let mut margin = margin_at(&b, &alphas);
        for _ in 0..MAX_DRAWS {
            if margin > KINK_MARGIN {
                break;
            }
            let (nb, na) = perturb(&mut rng, &b, &alphas, 0.1);
            let m = margin_at(&nb, &na);
            if m > margin {
                (b, alphas, margin) = (nb, na, m);
            }
        }
        if margin <= KINK_MARGIN {
            return Err(Error::config("gradient check", "no kink-free point found"));
        }

        let d_b = CMatrix::from_fn(b.nrows(), b.ncols(), |_, _| complex_normal(&mut rng, b_scale * b_scale));
        let d_a: Vec<f64> = alphas.iter().map(|_| rng.sample(StandardNormal)).collect();
        let g = loss_and_gradients(&batch, dict.matrix(), dict.adjoint(), &b, &alphas, params.onsager_count);
        let analytic = g.b.iter().zip(d_b.iter()).map(|(g, d)| (g.conj() * d).re).sum::<f64>()
            + g.log_alpha.iter().zip(&d_a).map(|(g, d)| g * d).sum::<f64>();
        let loss_at = |h: f64| {
            let bh = &b + &d_b * Complex64::new(h, 0.0);
            let ah: Vec<f64> = alphas.iter().zip(&d_a).map(|(a, d)| a * (h * d).exp()).collect();
            let f = forward(&batch, dict.matrix(), &bh, &ah, params.onsager_count, false);
            batch_mse(&f.x_out, &batch.target, batch.n_samples()).0
        };
        let numeric = (loss_at(STEP) - loss_at(-STEP)) / (2.0 * STEP);
        let scale = analytic.abs().max(numeric.abs());
        let rel_error = if scale > 0.0 { (analytic - numeric).abs() / scale } else { 0.0 };
        points.push(GradientCheckPoint {
            stage: plan.index + 1,
            analytic,
            numeric,
            rel_error,
            kink_margin: margin,
        });
    }
    Ok(GradientCheck { points })
}
