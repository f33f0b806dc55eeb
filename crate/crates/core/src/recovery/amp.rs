use super::config::{AmpConfig, DeltaRule, OnsagerCount};
use super::threshold::threshold_rows_in_place;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, columns, frobenius, gemm_into, lstsq_min_norm, row_norms, select_columns, CMatrix, ONE};
use crate::system_model::ExpandedDictionary;

/// Diagnostics of one AMP run over a contiguous block of columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDiagnostics {
    /// 1-based symbol slot this stage starts at (`L` for the first backward stage).
    pub slot: usize,
    pub first_column: usize,
    pub n_columns: usize,
    /// `‖Vᵗ‖_F` for every executed iteration.
    pub residual_norms: Vec<f64>,
    pub iterations: usize,
    /// Prior support handed to this stage, with the `δ` that produced it.
    pub prior_support: Option<Vec<usize>>,
    pub delta: Option<f64>,
    /// Residual norm went up at least once (reported, not an error).
    pub non_monotone: bool,
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub x_hat: CMatrix,
    pub stages: Vec<StageDiagnostics>,
}

impl RecoveryResult {
    pub fn residual_norms(&self) -> Vec<f64> {
        self.stages.iter().flat_map(|s| s.residual_norms.iter().copied()).collect()
    }

    /// Supports extracted for stages `L−1, …, 1` (empty for AMP-MMV).
    pub fn support_history(&self) -> Vec<Vec<usize>> {
        self.stages.iter().filter_map(|s| s.prior_support.clone()).collect()
    }
}

pub(crate) fn count_nonzero(x: &CMatrix, mode: OnsagerCount) -> usize {
    match mode {
        OnsagerCount::Entries => x.iter().filter(|z| z.re != 0.0 || z.im != 0.0).count(),
        OnsagerCount::Rows => row_norms(x).iter().filter(|&&n| n != 0.0).count(),
    }
}

pub(crate) struct StageOutput {
    pub x_hat: CMatrix,
    /// Last pre-threshold estimate `X̂ + B·V`.
    pub pseudo: CMatrix,
    pub residual_norms: Vec<f64>,
}

/// Weight matrix (`Ŝᴴ` for AMP) and per-iteration `α` of one stage.
pub(crate) struct StageWeights<'a> {
    pub b: &'a CMatrix,
    pub alphas: Vec<f64>,
}

/// Settings shared by every stage of a sweep.
#[derive(Debug, Clone)]
pub(crate) struct SweepOptions {
    pub stop_tol: f64,
    pub delta: DeltaRule,
    pub onsager_count: OnsagerCount,
    pub first_stage_onsager: bool,
}

impl SweepOptions {
    pub fn from_amp(cfg: &AmpConfig) -> Self {
        SweepOptions {
            stop_tol: cfg.stop_tol,
            delta: cfg.delta,
            onsager_count: cfg.onsager_count,
            first_stage_onsager: cfg.first_stage_onsager,
        }
    }
}

pub(crate) struct StageInput<'a> {
    pub y: &'a CMatrix,
    pub x0: CMatrix,
    pub mask: Option<&'a [bool]>,
    pub stage: usize,
    pub onsager: bool,
}

pub(crate) fn run_stage(
    dict: &ExpandedDictionary,
    weights: &StageWeights<'_>,
    opts: &SweepOptions,
    input: StageInput<'_>,
) -> Result<StageOutput> {
    let StageInput { y, x0, mask, stage, onsager } = input;
    let s = dict.matrix();
    let cols = y.ncols();
    let scale = ((s.nrows() * cols) as f64).max(1.0);
    let mut x = x0;
    let mut v_prev = CMatrix::zeros(s.nrows(), cols);
    let mut v = CMatrix::zeros(s.nrows(), cols);
    let mut pseudo = x.clone();
    let mut residual_norms = Vec::with_capacity(weights.alphas.len());
    for (t, &alpha) in weights.alphas.iter().enumerate() {
        let b = if onsager {
            count_nonzero(&x, opts.onsager_count) as f64 / scale
        } else {
            1.0
        };
        // V = Y − Ŝ·X̂ + b·V_prev
        v.copy_from(y);
        gemm_into(&mut v, -ONE, s, &x, ONE);
        if b != 0.0 {
            v.zip_apply(&v_prev, |a, p| *a += p * b);
        }
        let v_norm = frobenius(&v);
        residual_norms.push(v_norm);
        let lambda = alpha * v_norm / scale.sqrt();
        // X̂ ← η(X̂ + B·V; λ)
        pseudo.copy_from(&x);
        gemm_into(&mut pseudo, ONE, weights.b, &v, ONE);
        let mut next = pseudo.clone();
        threshold_rows_in_place(&mut next, lambda, mask);
        if !lambda.is_finite() || !all_finite(&next) {
            return Err(Error::NonFinite {
                context: "AMP iteration",
                stage: stage + 1,
                iteration: t,
            });
        }
        let change = {
            let mut d = 0.0;
            for (a, b) in next.iter().zip(x.iter()) {
                d += (a - b).norm_sqr();
            }
            d.sqrt()
        };
        x = next;
        std::mem::swap(&mut v_prev, &mut v);
        if opts.stop_tol > 0.0 && change <= opts.stop_tol * frobenius(&x).max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(StageOutput {
        x_hat: x,
        pseudo,
        residual_norms,
    })
}

fn non_monotone(r: &[f64]) -> bool {
    r.windows(2).any(|w| w[1] > w[0])
}

fn check_observation(y: &CMatrix, dict: &ExpandedDictionary) -> Result<()> {
    if y.nrows() != dict.n_rows() {
        return Err(Error::dims("observation rows", dict.n_rows(), y.nrows()));
    }
    if !all_finite(y) {
        return Err(Error::NonFinite {
            context: "observation",
            stage: 0,
            iteration: 0,
        });
    }
    Ok(())
}

/// AMP for the MMV problem `Y = Ŝ·X + N` with row soft-thresholding.
pub fn amp_mmv(y: &CMatrix, dict: &ExpandedDictionary, cfg: &AmpConfig) -> Result<RecoveryResult> {
    cfg.validate()?;
    let weights = [StageWeights {
        b: dict.adjoint(),
        alphas: (0..cfg.n_iters).map(|t| cfg.alpha.get(0, t, y.ncols())).collect(),
    }];
    let opts = SweepOptions {
        first_stage_onsager: true,
        ..SweepOptions::from_amp(cfg)
    };
    backward_sweep(y, dict, &weights, &opts, y.ncols().max(1), 1)
}

/// Indices of rows whose ℓ2 norm exceeds `delta`.
pub fn extract_support(x_block: &CMatrix, delta: f64) -> Vec<usize> {
    row_norms(x_block)
        .into_iter()
        .enumerate()
        .filter(|&(_, n)| n > delta)
        .map(|(j, _)| j)
        .collect()
}

/// Minimum-norm least-squares fit of `y_block` on the dictionary columns in
/// `support`; rows outside the support are zero.
pub fn ls_reinitialize(dict: &ExpandedDictionary, support: &[usize], y_block: &CMatrix) -> Result<CMatrix> {
    if support.len() > dict.n_rows() {
        return Err(Error::SupportTooLarge {
            support: support.len(),
            rows: dict.n_rows(),
        });
    }
    if y_block.nrows() != dict.n_rows() {
        return Err(Error::dims("least-squares block", dict.n_rows(), y_block.nrows()));
    }
    let mut x = CMatrix::zeros(dict.n_columns(), y_block.ncols());
    if support.is_empty() {
        return Ok(x);
    }
    let sub = select_columns(dict.matrix(), support);
    let w = lstsq_min_norm(&sub, y_block)?;
    for (k, &row) in support.iter().enumerate() {
        x.row_mut(row).copy_from(&w.row(k));
    }
    Ok(x)
}

/// AMP with backward propagation over symbol slots.
///
/// Stage `L` recovers the last slot's `R` columns from scratch. Each stage
/// `i < L` takes the support of the previous stage's estimate (slots
/// `i+1..L`), least-squares initializes slots `i..L` on it, and iterates with
/// the support rows exempt from thresholding. The stage-1 estimate covers
/// every column and is returned.
pub fn amp_bp(
    y: &CMatrix,
    dict: &ExpandedDictionary,
    cfg: &AmpConfig,
    n_antennas: usize,
    n_slots: usize,
) -> Result<RecoveryResult> {
    cfg.validate()?;
    if let Some(k) = cfg.alpha.n_stages() {
        if k != n_slots {
            return Err(Error::dims("per-stage alpha schedule", n_slots, k));
        }
    }
    let weights: Vec<StageWeights> = (0..n_slots)
        .map(|stage| StageWeights {
            b: dict.adjoint(),
            alphas: (0..cfg.n_iters)
                .map(|t| cfg.alpha.get(stage, t, n_antennas * (n_slots - stage)))
                .collect(),
        })
        .collect();
    backward_sweep(y, dict, &weights, &SweepOptions::from_amp(cfg), n_antennas, n_slots)
}

/// Boolean row mask of a support.
pub(crate) fn support_mask(support: &[usize], n: usize) -> Vec<bool> {
    let mut m = vec![false; n];
    for &j in support {
        m[j] = true;
    }
    m
}

/// Backward sweep over slots `L, …, 1`; `weights[i − 1]` drives stage `i`.
pub(crate) fn backward_sweep(
    y: &CMatrix,
    dict: &ExpandedDictionary,
    weights: &[StageWeights<'_>],
    opts: &SweepOptions,
    n_antennas: usize,
    n_slots: usize,
) -> Result<RecoveryResult> {
    check_observation(y, dict)?;
    if n_antennas == 0 || n_slots == 0 || y.ncols() != n_antennas * n_slots {
        return Err(Error::dims("columns (R·L)", n_antennas * n_slots, y.ncols()));
    }
    if weights.len() != n_slots {
        return Err(Error::dims("stage weights", n_slots, weights.len()));
    }
    for w in weights {
        if w.b.shape() != (dict.n_columns(), dict.n_rows()) {
            return Err(Error::dims(
                "weight matrix",
                format!("{}x{}", dict.n_columns(), dict.n_rows()),
                format!("{}x{}", w.b.nrows(), w.b.ncols()),
            ));
        }
    }
    let mut stages = Vec::with_capacity(n_slots);
    let mut prev: Option<StageOutput> = None;
    for slot in (1..=n_slots).rev() {
        let first = (slot - 1) * n_antennas;
        let n_cols = y.ncols() - first;
        let y_block = columns(y, first, n_cols);
        let (x0, support, delta) = match &prev {
            None => (CMatrix::zeros(dict.n_columns(), n_cols), None, None),
            Some(p) => {
                let delta = opts.delta.resolve(&row_norms(&p.pseudo));
                let support = extract_support(&p.x_hat, delta);
                let x0 = ls_reinitialize(dict, &support, &y_block)?;
                (x0, Some(support), Some(delta))
            }
        };
        let mask = support.as_ref().map(|s| support_mask(s, dict.n_columns()));
        let out = run_stage(
            dict,
            &weights[slot - 1],
            opts,
            StageInput {
                y: &y_block,
                x0,
                mask: mask.as_deref(),
                stage: slot - 1,
                onsager: slot < n_slots || opts.first_stage_onsager,
            },
        )?;
        let non_monotone = non_monotone(&out.residual_norms);
        if non_monotone {
            log::debug!("stage {slot}: residual norm not monotone");
        }
        stages.push(StageDiagnostics {
            slot,
            first_column: first,
            n_columns: n_cols,
            iterations: out.residual_norms.len(),
            non_monotone,
            residual_norms: out.residual_norms.clone(),
            prior_support: support,
            delta,
        });
        prev = Some(out);
    }
    let x_hat = prev.map(|p| p.x_hat).expect("at least one stage");
    Ok(RecoveryResult { x_hat, stages })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius_sq, matmul};
    use crate::recovery::config::AlphaSchedule;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        CMatrix::from_fn(rows, cols, |_, _| Complex64::new(next(), next()))
    }

    fn unit_dict(rows: usize, cols: usize, seed: u64) -> ExpandedDictionary {
        let mut m = lcg_matrix(rows, cols, seed);
        for mut c in m.column_iter_mut() {
            let n = c.norm();
            c /= Complex64::new(n, 0.0);
        }
        ExpandedDictionary::from_matrix(m)
    }

    #[test]
    fn zero_observation_gives_zero_estimate() {
        let dict = unit_dict(8, 16, 1);
        let y = CMatrix::zeros(8, 2);
        let r = amp_mmv(&y, &dict, &AmpConfig::default()).unwrap();
        assert!(r.x_hat.iter().all(|z| z.norm() == 0.0));
        let r = amp_bp(&y, &dict, &AmpConfig::default(), 1, 2).unwrap();
        assert!(r.x_hat.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn noiseless_one_sparse_recovery() {
        let dict = unit_dict(8, 16, 7);
        let mut x = CMatrix::zeros(16, 2);
        x[(5, 0)] = Complex64::new(1.0, 0.0);
        x[(5, 1)] = Complex64::new(-0.6, 0.8);
        let y = matmul(dict.matrix(), &x);
        let cfg = AmpConfig {
            n_iters: 50,
            alpha: AlphaSchedule::Constant(1.1),
            stop_tol: 0.0,
            ..Default::default()
        };
        let r = amp_bp(&y, &dict, &cfg, 1, 2).unwrap();
        let nmse = 10.0 * (frobenius_sq(&(&r.x_hat - &x)) / frobenius_sq(&x)).log10();
        assert!(nmse <= -60.0, "{nmse}");

        // Oracle: exhaustive single-column least-squares fit picks the same row.
        let best = (0..16)
            .map(|j| {
                let w = ls_reinitialize(&dict, &[j], &y).unwrap();
                (j, frobenius(&(&y - matmul(dict.matrix(), &w))))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert_eq!(best.0, 5);
        assert_eq!(extract_support(&r.x_hat, 0.5), vec![5]);
    }

    #[test]
    fn single_slot_bp_equals_mmv() {
        let dict = unit_dict(10, 30, 3);
        let y = lcg_matrix(10, 3, 4);
        let cfg = AmpConfig::default();
        let a = amp_mmv(&y, &dict, &cfg).unwrap();
        let b = amp_bp(&y, &dict, &cfg, 3, 1).unwrap();
        assert_eq!(a.x_hat, b.x_hat);
        assert!(b.support_history().is_empty());
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let dict = unit_dict(6, 10, 11);
        let y = lcg_matrix(6, 2, 12);
        let support = [1, 4, 7];
        let x = ls_reinitialize(&dict, &support, &y).unwrap();
        // Oracle: (AᴴA)⁻¹Aᴴy via nalgebra's LU.
        let a = select_columns(dict.matrix(), &support);
        let ah = a.adjoint();
        let w = (&ah * &a).lu().solve(&(&ah * &y)).unwrap();
        for (k, &j) in support.iter().enumerate() {
            for c in 0..2 {
                assert!((x[(j, c)] - w[(k, c)]).norm() < 1e-10);
            }
        }
        assert_eq!(x[(0, 0)], Complex64::new(0.0, 0.0));
        let too_many: Vec<usize> = (0..7).collect();
        assert!(matches!(
            ls_reinitialize(&dict, &too_many, &y),
            Err(Error::SupportTooLarge { support: 7, rows: 6 })
        ));
    }

    #[test]
    fn support_uses_strict_inequality() {
        let x = CMatrix::from_row_slice(3, 1, &[Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.0), Complex64::new(0.0, 0.0)]);
        assert_eq!(extract_support(&x, 0.5), vec![0]);
        assert_eq!(extract_support(&x, 0.0), vec![0, 1]);
    }

    #[test]
    fn rejects_bad_geometry() {
        let dict = unit_dict(8, 16, 1);
        assert!(amp_bp(&CMatrix::zeros(8, 3), &dict, &AmpConfig::default(), 2, 2).is_err());
        assert!(amp_mmv(&CMatrix::zeros(7, 1), &dict, &AmpConfig::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn estimate_shape_and_finiteness(seed in 0u64..1000, slots in 1usize..4, ants in 1usize..3) {
            let dict = unit_dict(12, 24, seed);
            let y = lcg_matrix(12, slots * ants, seed + 1);
            let r = amp_bp(&y, &dict, &AmpConfig::default(), ants, slots).unwrap();
            prop_assert_eq!(r.x_hat.shape(), (24, slots * ants));
            prop_assert!(all_finite(&r.x_hat));
            prop_assert_eq!(r.stages.len(), slots);
            prop_assert_eq!(r.support_history().len(), slots - 1);
        }
    }
}
