use num_complex::Complex64;
use sha2::{Digest, Sha256};

use super::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::rng::{complex_normal, rng_from_seed};

/// Shared pool of unit-norm spreading sequences, one per column (`L_s × M`).
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadingPool {
    columns: CMatrix,
}

impl SpreadingPool {
    /// Draws i.i.d. CN(0,1) entries and scales every column to unit norm.
    pub fn generate(cfg: &SystemConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng_from_seed(seed);
        let raw = CMatrix::from_fn(cfg.seq_len, cfg.n_sequences, |_, _| complex_normal(&mut rng, 1.0));
        Self::normalized(raw)
    }

    /// Builds a pool from arbitrary columns, normalizing each one.
    pub fn normalized(mut raw: CMatrix) -> Result<Self> {
        for (j, mut col) in raw.column_iter_mut().enumerate() {
            let n = col.norm();
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::Format {
                    what: "spreading pool",
                    reason: format!("column {j} has norm {n}"),
                });
            }
            col /= Complex64::new(n, 0.0);
        }
        Ok(SpreadingPool { columns: raw })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.columns
    }

    pub fn seq_len(&self) -> usize {
        self.columns.nrows()
    }

    pub fn n_sequences(&self) -> usize {
        self.columns.ncols()
    }
}

/// Delay-expanded dictionary `Ŝ` of shape `(L_s+T_g) × M(T_g+1)`.
///
/// Column `m(T_g+1)+t` is sequence `m` preceded by `t` zeros and followed by
/// `T_g − t` zeros. The conjugate transpose is cached for the AMP back-projection.
#[derive(Debug, Clone)]
pub struct ExpandedDictionary {
    matrix: CMatrix,
    adjoint: CMatrix,
    guard: usize,
    hash: String,
}

impl ExpandedDictionary {
    pub fn expand(pool: &SpreadingPool, guard: usize) -> Self {
        let ls = pool.seq_len();
        let m = pool.n_sequences();
        let mut matrix = CMatrix::zeros(ls + guard, m * (guard + 1));
        for seq in 0..m {
            for t in 0..=guard {
                let col = seq * (guard + 1) + t;
                for i in 0..ls {
                    matrix[(t + i, col)] = pool.matrix()[(i, seq)];
                }
            }
        }
        Self::with_guard(matrix, guard)
    }

    /// Wraps an arbitrary sensing matrix (treated as an undelayed pool).
    pub fn from_matrix(matrix: CMatrix) -> Self {
        Self::with_guard(matrix, 0)
    }

    fn with_guard(matrix: CMatrix, guard: usize) -> Self {
        let adjoint = matrix.adjoint();
        let hash = content_hash(&matrix);
        ExpandedDictionary {
            matrix,
            adjoint,
            guard,
            hash,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// `Ŝᴴ`, shape `Ñ × M̃`.
    pub fn adjoint(&self) -> &CMatrix {
        &self.adjoint
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn guard(&self) -> usize {
        self.guard
    }

    /// SHA-256 over shape and entries; ties trained parameters to a dictionary.
    pub fn content_hash(&self) -> &str {
        &self.hash
    }
}

fn content_hash(m: &CMatrix) -> String {
    let mut h = Sha256::new();
    h.update((m.nrows() as u64).to_le_bytes());
    h.update((m.ncols() as u64).to_le_bytes());
    for z in m.iter() {
        h.update(z.re.to_le_bytes());
        h.update(z.im.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
