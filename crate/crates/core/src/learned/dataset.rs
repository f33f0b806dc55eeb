use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::rng::{derive_seed, Stream};
use crate::system_model::{draw_realization, synthesize_observation, ExpandedDictionary, SystemConfig};

/// Training-set size used at desk scale.
pub const DESK_DATASET_SIZE: usize = 50_000;

/// Nonzero rows of one ground-truth matrix.
pub type SparseRows = Vec<(usize, Vec<Complex64>)>;

/// Observation/ground-truth pairs sharing one dictionary.
///
/// Observations are stacked column-wise (`M̃ × count·R·L`); ground truths are
/// kept as their nonzero rows.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub cfg: SystemConfig,
    pub dict_hash: String,
    pub seed: u64,
    /// Number of active users of each pair.
    pub n_active: Vec<usize>,
    y: CMatrix,
    x_rows: Vec<SparseRows>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x_rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_rows.is_empty()
    }

    pub fn n_columns(&self) -> usize {
        self.cfg.n_columns()
    }

    /// Observation of pair `k`.
    pub fn y(&self, k: usize) -> CMatrix {
        let c = self.n_columns();
        self.y.columns(k * c, c).into_owned()
    }

    /// Columns `first..first+len` of observation `k`.
    pub(crate) fn y_columns(&self, k: usize, first: usize, len: usize) -> nalgebra::DMatrixView<'_, Complex64> {
        self.y.columns(k * self.n_columns() + first, len)
    }

    pub fn x_rows(&self, k: usize) -> &SparseRows {
        &self.x_rows[k]
    }

    /// Dense ground truth of pair `k`.
    pub fn x(&self, k: usize) -> CMatrix {
        let mut x = CMatrix::zeros(self.cfg.n_dict_columns(), self.n_columns());
        for (row, vals) in &self.x_rows[k] {
            for (j, v) in vals.iter().enumerate() {
                x[(*row, j)] = *v;
            }
        }
        x
    }
}

/// `count` i.i.d. pairs under `cfg`, deterministic per seed.
pub fn generate_dataset(cfg: &SystemConfig, dict: &ExpandedDictionary, count: usize, seed: u64) -> Result<Dataset> {
    generate_mixed_dataset(cfg, dict, count, seed, &[cfg.n_active])
}

/// Like [`generate_dataset`], cycling the number of active users through
/// `n_active_values` (pair `k` uses entry `k mod len`).
pub fn generate_mixed_dataset(
    cfg: &SystemConfig,
    dict: &ExpandedDictionary,
    count: usize,
    seed: u64,
    n_active_values: &[usize],
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::config("count", "must be at least 1"));
    }
    if n_active_values.is_empty() {
        return Err(Error::config("n_active", "needs at least one value"));
    }
    cfg.validate()?;
    if dict.n_rows() != cfg.n_rows() || dict.n_columns() != cfg.n_dict_columns() {
        return Err(Error::dims("dataset dictionary", cfg.n_dict_columns(), dict.n_columns()));
    }
    let pairs: Vec<(CMatrix, SparseRows, usize)> = (0..count)
        .into_par_iter()
        .map(|k| {
            let n_active = n_active_values[k % n_active_values.len()];
            let c = SystemConfig { n_active, ..cfg.clone() };
            let real = draw_realization(&c, derive_seed(seed, Stream::Dataset, &[k as u64, 0]))?;
            let obs = synthesize_observation(&real, dict, c.snr_db, derive_seed(seed, Stream::Dataset, &[k as u64, 1]))?;
            let x = real.x_true();
            let rows = (0..x.nrows())
                .filter(|&i| x.row(i).iter().any(|z| z.re != 0.0 || z.im != 0.0))
                .map(|i| (i, x.row(i).iter().copied().collect()))
                .collect();
            Ok((obs.y, rows, n_active))
        })
        .collect::<Result<_>>()?;
    let c = cfg.n_columns();
    let mut y = CMatrix::zeros(cfg.n_rows(), count * c);
    let mut x_rows = Vec::with_capacity(count);
    let mut n_active = Vec::with_capacity(count);
    for (k, (yk, rows, na)) in pairs.into_iter().enumerate() {
        y.columns_mut(k * c, c).copy_from(&yk);
        x_rows.push(rows);
        n_active.push(na);
    }
    Ok(Dataset {
        cfg: cfg.clone(),
        dict_hash: dict.content_hash().to_string(),
        seed,
        n_active,
        y,
        x_rows,
    })
}
