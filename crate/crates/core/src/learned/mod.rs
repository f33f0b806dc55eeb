//! Learned AMP: the AMP iteration unrolled into layers with a trainable
//! weight matrix `B` and per-layer threshold scale `α`, for the joint
//! (MMV) and backward-propagation receivers.

mod dataset;
mod engine;
mod gradcheck;
mod params;
mod train;

pub use dataset::{generate_dataset, generate_mixed_dataset, Dataset, SparseRows, DESK_DATASET_SIZE};
pub use gradcheck::{check_gradients, GradientCheck, GradientCheckPoint, KINK_MARGIN};
pub use params::{
    load_params, load_params_for, params_from_bytes, params_to_bytes, save_params, LampParams, Variant,
    PARAMS_MAGIC,
};
pub use train::{train_lamp, write_curve_csv, CurvePoint, TrainConfig, TrainingOutcome, CURVE_SCHEMA_VERSION};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::recovery::{backward_sweep, RecoveryResult, StageWeights, SweepOptions};
use crate::system_model::ExpandedDictionary;

fn sweep_options(params: &LampParams) -> SweepOptions {
    SweepOptions {
        stop_tol: 0.0,
        delta: params.delta,
        onsager_count: params.onsager_count,
        first_stage_onsager: params.first_stage_onsager,
    }
}

fn weights(params: &LampParams) -> Vec<StageWeights<'_>> {
    (0..params.n_subnetworks())
        .map(|i| StageWeights {
            b: params.b(i),
            alphas: params.alphas[i].clone(),
        })
        .collect()
}

/// Joint estimate of every column with a trained network; always runs all
/// layers.
pub fn lamp_mmv_forward(y: &CMatrix, dict: &ExpandedDictionary, params: &LampParams) -> Result<RecoveryResult> {
    if params.variant != Variant::Mmv {
        return Err(Error::config("variant", "expected joint (mmv) parameters"));
    }
    params.check_dictionary(dict)?;
    backward_sweep(y, dict, &weights(params), &sweep_options(params), y.ncols().max(1), 1)
}

/// Backward-propagation estimate with one trained subnetwork per slot.
pub fn lamp_bp_forward(y: &CMatrix, dict: &ExpandedDictionary, params: &LampParams) -> Result<RecoveryResult> {
    if params.variant != Variant::Bp {
        return Err(Error::config("variant", "expected backward-propagation (bp) parameters"));
    }
    params.check_dictionary(dict)?;
    backward_sweep(y, dict, &weights(params), &sweep_options(params), params.n_antennas, params.n_slots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::recovery::{amp_bp, amp_mmv, AlphaSchedule, AmpConfig};
    use crate::rng::{complex_normal, rng_from_seed};
    use crate::system_model::{draw_realization, synthesize_observation, SpreadingPool, SystemConfig};
    use proptest::prelude::*;

    fn cfg(n_antennas: usize) -> SystemConfig {
        SystemConfig {
            n_users: 60,
            n_sequences: 14,
            seq_len: 20,
            guard: 2,
            max_delay: 2,
            n_active: 5,
            n_antennas,
            snr_db: 20.0,
            ..Default::default()
        }
    }

    fn setup(c: &SystemConfig, seed: u64) -> (ExpandedDictionary, CMatrix) {
        let dict = ExpandedDictionary::expand(&SpreadingPool::generate(c, seed).unwrap(), c.guard);
        let real = draw_realization(c, seed + 1).unwrap();
        let y = synthesize_observation(&real, &dict, c.snr_db, seed + 2).unwrap().y;
        (dict, y)
    }

    fn amp_cfg() -> AmpConfig {
        AmpConfig {
            n_iters: 12,
            alpha: AlphaSchedule::PerIteration((0..12).map(|t| 1.2 + 0.05 * t as f64).collect()),
            stop_tol: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn amp_initialized_network_reproduces_amp() {
        for r in [1, 2] {
            let c = cfg(r);
            let (dict, y) = setup(&c, 10 + r as u64);
            let a = amp_cfg();
            let p = LampParams::from_amp(&dict, &a, Variant::Bp, r, c.n_slots(), true).unwrap();
            let lamp = lamp_bp_forward(&y, &dict, &p).unwrap();
            let amp = amp_bp(&y, &dict, &a, r, c.n_slots()).unwrap();
            assert!(max_abs_diff(&lamp.x_hat, &amp.x_hat) <= 1e-9);
            assert_eq!(lamp.support_history(), amp.support_history());

            let p = LampParams::from_amp(&dict, &a, Variant::Mmv, r, c.n_slots(), true).unwrap();
            let lamp = lamp_mmv_forward(&y, &dict, &p).unwrap();
            let amp = amp_mmv(&y, &dict, &a).unwrap();
            assert!(max_abs_diff(&lamp.x_hat, &amp.x_hat) <= 1e-9);
        }
    }

    #[test]
    fn single_slot_bp_network_equals_joint_network() {
        let (dict, _) = setup(&cfg(2), 3);
        let mut rng = rng_from_seed(5);
        let y = CMatrix::from_fn(dict.n_rows(), 2, |_, _| complex_normal(&mut rng, 1.0));
        let a = amp_cfg();
        let bp = LampParams::from_amp(&dict, &a, Variant::Bp, 2, 1, true).unwrap();
        let mmv = LampParams::from_amp(&dict, &a, Variant::Mmv, 2, 1, true).unwrap();
        let x_bp = lamp_bp_forward(&y, &dict, &bp).unwrap().x_hat;
        let x_mmv = lamp_mmv_forward(&y, &dict, &mmv).unwrap().x_hat;
        assert_eq!(x_bp, x_mmv);
    }

    #[test]
    fn wrong_variant_is_rejected() {
        let c = cfg(1);
        let (dict, y) = setup(&c, 4);
        let p = LampParams::from_amp(&dict, &amp_cfg(), Variant::Mmv, 1, c.n_slots(), true).unwrap();
        assert!(lamp_bp_forward(&y, &dict, &p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        // Relabelling users permutes the dictionary columns, the weight rows
        // and the estimate rows alike.
        #[test]
        fn permutation_equivariance(seed in 0u64..1000) {
            let c = cfg(1);
            let (dict, y) = setup(&c, seed);
            let n = dict.n_columns();
            let mut perm: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            perm.shuffle(&mut rng_from_seed(seed ^ 0xabc));
            let pd = CMatrix::from_fn(dict.n_rows(), n, |i, j| dict.matrix()[(i, perm[j])]);
            let pdict = ExpandedDictionary::from_matrix(pd);
            let a = amp_cfg();
            let p = LampParams::from_amp(&dict, &a, Variant::Bp, 1, c.n_slots(), true).unwrap();
            let mut pp = LampParams::from_amp(&pdict, &a, Variant::Bp, 1, c.n_slots(), true).unwrap();
            let mut rng = rng_from_seed(seed);
            let b = p.b(0) + CMatrix::from_fn(n, dict.n_rows(), |_, _| complex_normal(&mut rng, 1e-3));
            let mut p = p;
            *p.b_mut(0) = b.clone();
            *pp.b_mut(0) = CMatrix::from_fn(n, dict.n_rows(), |i, j| b[(perm[i], j)]);
            let x = lamp_bp_forward(&y, &dict, &p).unwrap().x_hat;
            let xp = lamp_bp_forward(&y, &pdict, &pp).unwrap().x_hat;
            let back = CMatrix::from_fn(n, x.ncols(), |i, j| xp[(perm.iter().position(|&k| k == i).unwrap(), j)]);
            prop_assert!(max_abs_diff(&x, &back) <= 1e-9);
        }
    }
}
