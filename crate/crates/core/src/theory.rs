//! Exhaustive checks of uniqueness for row-sparse MMV solutions when part of
//! the support is known.
//!
//! A support is *consistent* with `Y` if `Y` lies (to a relative residual of
//! [`CONSISTENCY_TOL`]) in the span of its dictionary columns. Consistent
//! supports are reported canonically: coefficient rows that vanish are
//! removed, so supersets of a consistent support collapse onto it.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius, lstsq_min_norm, matmul, numerical_rank, row_norms, select_columns, CMatrix};
use crate::rng::{complex_normal, derive_seed, rng_from_seed, Stream};

pub const CONSISTENCY_TOL: f64 = 1e-9;
/// Coefficient rows at or below this norm are dropped from a support.
pub const ZERO_ROW_TOL: f64 = 1e-10;
/// Maximum number of least-squares solves one enumeration may perform.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;
const RANK_TOL: f64 = 1e-8;
const MAX_REDRAWS: usize = 1000;

/// Largest sparsity `r = ⌈(M̃ + L̃ + r_s)/2⌉ − 1` for which the sparse
/// solution is unique.
pub fn admissible_sparsity(m_dim: usize, l_dim: usize, r_known: usize) -> usize {
    (m_dim + l_dim + r_known).div_ceil(2).saturating_sub(1)
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of supports of size at most `max_sparsity` containing `n_known`
/// fixed indices out of `n`.
pub fn enumeration_size(n: usize, max_sparsity: usize, n_known: usize) -> u128 {
    if n_known > max_sparsity {
        return 0;
    }
    (0..=max_sparsity - n_known).map(|k| binomial(n - n_known, k)).sum()
}

/// Calls `f` with every `k`-subset of `pool` in lexicographic order.
fn for_each_subset(pool: &[usize], k: usize, f: &mut impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let n = pool.len();
    if k > n {
        return Ok(());
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut chosen: Vec<usize> = idx.iter().map(|&i| pool[i]).collect();
    loop {
        f(&chosen)?;
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return Ok(());
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
        for j in pos..k {
            chosen[j] = pool[idx[j]];
        }
    }
}

/// All canonical consistent supports of size at most `max_sparsity` that
/// contain `known_support`, sorted.
pub fn brute_force_mmv(
    y: &CMatrix,
    dict: &CMatrix,
    max_sparsity: usize,
    known_support: &[usize],
) -> Result<Vec<Vec<usize>>> {
    if y.nrows() != dict.nrows() {
        return Err(Error::dims("brute-force observation rows", dict.nrows(), y.nrows()));
    }
    let known: BTreeSet<usize> = known_support.iter().copied().collect();
    if known.len() != known_support.len() || known.iter().any(|&k| k >= dict.ncols()) {
        return Err(Error::config("known_support", "must hold distinct column indices"));
    }
    if known.len() > max_sparsity {
        return Err(Error::config("known_support", "is larger than the sparsity limit"));
    }
    let required = enumeration_size(dict.ncols(), max_sparsity, known.len());
    if required > ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard {
            required,
            limit: ENUMERATION_LIMIT,
        });
    }
    let y_norm = frobenius(y);
    let free: Vec<usize> = (0..dict.ncols()).filter(|j| !known.contains(j)).collect();
    let mut found = BTreeSet::new();
    let mut support = Vec::with_capacity(max_sparsity);
    for extra in 0..=max_sparsity - known.len() {
        for_each_subset(&free, extra, &mut |chosen| {
            support.clear();
            support.extend(known.iter().copied());
            support.extend_from_slice(chosen);
            support.sort_unstable();
            let sub = select_columns(dict, &support);
            let w = lstsq_min_norm(&sub, y)?;
            let residual = frobenius(&(y - matmul(&sub, &w)));
            if residual <= CONSISTENCY_TOL * y_norm {
                let norms = row_norms(&w);
                let canonical: Vec<usize> = support
                    .iter()
                    .zip(&norms)
                    .filter(|(j, &n)| known.contains(j) || n > ZERO_ROW_TOL)
                    .map(|(&j, _)| j)
                    .collect();
                found.insert(canonical);
            }
            Ok(())
        })?;
    }
    Ok(found.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessTrialConfig {
    /// Measurement dimension `M̃`.
    pub m_dim: usize,
    /// Number of dictionary columns `Ñ`.
    pub n_dim: usize,
    /// `L̃ = rank(Y)`.
    pub l_dim: usize,
    /// Known support size `r_s`.
    pub r_known: usize,
    pub trials: usize,
    pub seed: u64,
}

impl UniquenessTrialConfig {
    pub fn sparsity(&self) -> usize {
        admissible_sparsity(self.m_dim, self.l_dim, self.r_known)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_dim == 0 || self.l_dim > self.m_dim || self.m_dim >= self.n_dim {
            return Err(Error::config("dimensions", "need 1 ≤ l_dim ≤ m_dim < n_dim"));
        }
        let r = self.sparsity();
        if self.r_known > r {
            return Err(Error::config("r_known", format!("exceeds the admissible sparsity {r}")));
        }
        if r < self.l_dim || r > self.n_dim {
            return Err(Error::config("l_dim", format!("a rank-{} block needs at least that many rows", self.l_dim)));
        }
        let required = enumeration_size(self.n_dim, r, self.r_known);
        if required > ENUMERATION_LIMIT {
            return Err(Error::EnumerationGuard {
                required,
                limit: ENUMERATION_LIMIT,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub config: UniquenessTrialConfig,
    pub sparsity: usize,
    pub unique_trials: usize,
    pub unique_fraction: f64,
    /// Trials whose returned supports included the planted one.
    pub planted_found: usize,
    pub redraws: usize,
    pub wall_time_s: f64,
}

struct TrialOutcome {
    unique: bool,
    planted_found: bool,
    redraws: usize,
}

fn run_trial(cfg: &UniquenessTrialConfig, trial: usize) -> Result<TrialOutcome> {
    let r = cfg.sparsity();
    let mut rng = rng_from_seed(derive_seed(cfg.seed, Stream::Theory, &[trial as u64]));
    let dict = CMatrix::from_fn(cfg.m_dim, cfg.n_dim, |_, _| complex_normal(&mut rng, 1.0));
    let mut planted = sample(&mut rng, cfg.n_dim, r).into_vec();
    let known: Vec<usize> = planted[..cfg.r_known].to_vec();
    planted.sort_unstable();
    let mut redraws = 0;
    let y = loop {
        let block = CMatrix::from_fn(r, cfg.l_dim, |_, _| complex_normal(&mut rng, 1.0));
        let y = matmul(&select_columns(&dict, &planted), &block);
        if numerical_rank(&y, RANK_TOL) == cfg.l_dim {
            break y;
        }
        redraws += 1;
        if redraws > MAX_REDRAWS {
            return Err(Error::config("l_dim", "could not draw a full-rank observation"));
        }
    };
    let supports = brute_force_mmv(&y, &dict, r, &known)?;
    Ok(TrialOutcome {
        unique: supports.len() == 1,
        planted_found: supports.contains(&planted),
        redraws,
    })
}

/// Plants rank-`L̃` row-sparse solutions at the admissible sparsity and
/// counts the trials where exactly one consistent support exists.
pub fn verify_uniqueness_bound(cfg: &UniquenessTrialConfig) -> Result<UniquenessReport> {
    cfg.validate()?;
    let start = Instant::now();
    let outcomes: Vec<TrialOutcome> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t))
        .collect::<Result<_>>()?;
    let unique_trials = outcomes.iter().filter(|o| o.unique).count();
    Ok(UniquenessReport {
        config: cfg.clone(),
        sparsity: cfg.sparsity(),
        unique_trials,
        unique_fraction: if cfg.trials == 0 { 1.0 } else { unique_trials as f64 / cfg.trials as f64 },
        planted_found: outcomes.iter().filter(|o| o.planted_found).count(),
        redraws: outcomes.iter().map(|o| o.redraws).sum(),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// An instance with two distinct consistent supports of the same size.
#[derive(Debug, Clone)]
pub struct NonUniquenessWitness {
    pub dict: CMatrix,
    pub y: CMatrix,
    pub supports: Vec<Vec<usize>>,
    pub sparsity: usize,
    pub trial: usize,
}

/// Looks for a counterexample one above the admissible sparsity (no known
/// support): two disjoint supports `A`, `B` with `Y` in the intersection of
/// their column spans, `Y = D_A·X_A = D_B·X_B`.
///
/// Returns `None` if no trial within `max_trials` yields a witness.
pub fn find_non_uniqueness_witness(
    m_dim: usize,
    n_dim: usize,
    l_dim: usize,
    seed: u64,
    max_trials: usize,
) -> Result<Option<NonUniquenessWitness>> {
    let r = admissible_sparsity(m_dim, l_dim, 0) + 1;
    if 2 * r > n_dim || 2 * r < m_dim + l_dim || r > m_dim {
        return Err(Error::config("dimensions", "need two disjoint supports whose spans meet in L̃ dimensions"));
    }
    for trial in 0..max_trials {
        let mut rng = rng_from_seed(derive_seed(seed, Stream::Theory, &[u64::MAX, trial as u64]));
        let dict = CMatrix::from_fn(m_dim, n_dim, |_, _| complex_normal(&mut rng, 1.0));
        let picks = sample(&mut rng, n_dim, 2 * r).into_vec();
        let (mut a, mut b) = (picks[..r].to_vec(), picks[r..].to_vec());
        a.sort_unstable();
        b.sort_unstable();
        // Null space of [D_A, −D_B] gives coefficient pairs with
        // D_A·x_a = D_B·x_b. Zero-padding to a square matrix makes the SVD
        // return the full set of right singular vectors.
        let mut joint = CMatrix::zeros(2 * r, 2 * r);
        joint.view_mut((0, 0), (m_dim, r)).copy_from(&select_columns(&dict, &a));
        joint.view_mut((0, r), (m_dim, r)).copy_from(&(-select_columns(&dict, &b)));
        let svd = joint.svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let mut order: Vec<usize> = (0..2 * r).collect();
        order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
        let null: Vec<usize> = order.into_iter().take(l_dim).collect();
        if let Some(w) = witness_from_null(&dict, (&a, &b), &v_t, &null, trial)? {
            return Ok(Some(w));
        }
    }
    Ok(None)
}

fn witness_from_null(
    dict: &CMatrix,
    (a, b): (&[usize], &[usize]),
    v_t: &CMatrix,
    null_rows: &[usize],
    trial: usize,
) -> Result<Option<NonUniquenessWitness>> {
    let (r, l_dim) = (a.len(), null_rows.len());
    // Each null vector (conjugated row of Vᴴ) is [x_a; x_b].
    let coeffs = CMatrix::from_fn(2 * r, l_dim, |i, k| v_t[(null_rows[k], i)].conj());
    let x_a = coeffs.rows(0, r).into_owned();
    let y = matmul(&select_columns(dict, a), &x_a);
    if numerical_rank(&y, RANK_TOL) < l_dim {
        return Ok(None);
    }
    let supports = brute_force_mmv(&y, dict, r, &[])?;
    let distinct_full: Vec<Vec<usize>> = supports.into_iter().filter(|s| s.len() == r).collect();
    if distinct_full.contains(&a.to_vec()) && distinct_full.contains(&b.to_vec()) {
        return Ok(Some(NonUniquenessWitness {
            dict: dict.clone(),
            y,
            supports: distinct_full,
            sparsity: r,
            trial,
        }));
    }
    Ok(None)
}
