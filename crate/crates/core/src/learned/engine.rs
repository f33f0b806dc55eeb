//! Batched forward and reverse-mode passes through one unrolled stage.
//!
//! `Q` samples with `c` columns each are stacked side by side, so every layer
//! costs two large products. Per-sample quantities (`b`, `λ`, masks) are
//! applied block-wise. Gradients use the convention `∂ℓ/∂Re + i·∂ℓ/∂Im`.

use num_complex::Complex64;

use crate::linalg::{gemm_into, CMatrix, ONE, ZERO};
use crate::recovery::OnsagerCount;
use crate::recovery::shrink_factor;

/// Inputs of one stage for `Q` stacked samples.
#[derive(Debug, Clone)]
pub(crate) struct StageBatch {
    /// `M̃ × Q·c`.
    pub y: CMatrix,
    /// Initial estimate, `Ñ × Q·c`.
    pub x0: CMatrix,
    /// Ground truth, `Ñ × Q·c`.
    pub target: CMatrix,
    /// Rows kept out of thresholding, `Q·Ñ` entries, sample-major.
    pub mask: Option<Vec<bool>>,
    pub cols: usize,
    pub onsager: bool,
}

impl StageBatch {
    pub fn n_samples(&self) -> usize {
        if self.cols == 0 {
            0
        } else {
            self.y.ncols() / self.cols
        }
    }
}

pub(crate) struct LayerTape {
    v: CMatrix,
    r: CMatrix,
    v_norm: Vec<f64>,
    lambda: Vec<f64>,
    onsager: Vec<f64>,
}

pub(crate) struct Forward {
    pub x_out: CMatrix,
    /// Pre-threshold estimate of the last layer.
    pub pseudo: CMatrix,
    tape: Vec<LayerTape>,
}

#[derive(Debug, Clone)]
pub(crate) struct Gradients {
    pub loss: f64,
    /// `∂ℓ/∂ log α` per layer.
    pub log_alpha: Vec<f64>,
    pub b: CMatrix,
}

/// Per-sample row norms of an `n × Q·c` matrix, `Q·n` entries.
pub(crate) fn sample_row_norms(m: &CMatrix, q_count: usize, c: usize) -> Vec<f64> {
    let n = m.nrows();
    let data = m.as_slice();
    let mut out = vec![0.0; n * q_count];
    for q in 0..q_count {
        let acc = &mut out[q * n..(q + 1) * n];
        for k in 0..c {
            let col = &data[(q * c + k) * n..(q * c + k + 1) * n];
            for (a, z) in acc.iter_mut().zip(col) {
                *a += z.norm_sqr();
            }
        }
        for a in acc.iter_mut() {
            *a = a.sqrt();
        }
    }
    out
}

fn block_norms(m: &CMatrix, q_count: usize, c: usize) -> Vec<f64> {
    let n = m.nrows();
    let data = m.as_slice();
    (0..q_count)
        .map(|q| {
            data[q * c * n..(q + 1) * c * n]
                .iter()
                .map(|z| z.norm_sqr())
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

fn onsager_coefficients(x: &CMatrix, batch: &StageBatch, scale: f64, mode: OnsagerCount) -> Vec<f64> {
    let q_count = batch.n_samples();
    if !batch.onsager {
        return vec![1.0; q_count];
    }
    let n = x.nrows();
    let c = batch.cols;
    let data = x.as_slice();
    match mode {
        OnsagerCount::Entries => (0..q_count)
            .map(|q| {
                data[q * c * n..(q + 1) * c * n]
                    .iter()
                    .filter(|z| z.re != 0.0 || z.im != 0.0)
                    .count() as f64
                    / scale
            })
            .collect(),
        OnsagerCount::Rows => {
            let norms = sample_row_norms(x, q_count, c);
            (0..q_count)
                .map(|q| norms[q * n..(q + 1) * n].iter().filter(|&&v| v != 0.0).count() as f64 / scale)
                .collect()
        }
    }
}

/// Scales sample `q`'s column block of `m` by `f[q]`.
fn scale_blocks(m: &mut CMatrix, f: &[f64], c: usize) {
    let n = m.nrows();
    for (q, chunk) in m.as_mut_slice().chunks_mut(c * n).enumerate() {
        let s = f[q];
        if s != 1.0 {
            for z in chunk {
                *z *= s;
            }
        }
    }
}

/// Runs the unrolled stage; the tape is kept only when `record` is set.
pub(crate) fn forward(
    batch: &StageBatch,
    s: &CMatrix,
    b: &CMatrix,
    alphas: &[f64],
    mode: OnsagerCount,
    record: bool,
) -> Forward {
    let q_count = batch.n_samples();
    let c = batch.cols;
    let n_rows = s.ncols();
    let scale = (s.nrows() * c) as f64;
    let root = scale.sqrt();
    let mut x = batch.x0.clone();
    let mut v_prev = CMatrix::zeros(s.nrows(), batch.y.ncols());
    let mut pseudo = x.clone();
    let mut tape = Vec::with_capacity(if record { alphas.len() } else { 0 });
    for &alpha in alphas {
        let onsager = onsager_coefficients(&x, batch, scale, mode);
        let mut v = batch.y.clone();
        gemm_into(&mut v, -ONE, s, &x, ONE);
        scale_blocks(&mut v_prev, &onsager, c);
        v += &v_prev;
        let v_norm = block_norms(&v, q_count, c);
        let lambda: Vec<f64> = v_norm.iter().map(|nv| alpha * nv / root).collect();
        pseudo.copy_from(&x);
        gemm_into(&mut pseudo, ONE, b, &v, ONE);
        let norms = sample_row_norms(&pseudo, q_count, c);
        x.copy_from(&pseudo);
        {
            let data = x.as_mut_slice();
            for q in 0..q_count {
                let keep = batch.mask.as_ref().map(|m| &m[q * n_rows..(q + 1) * n_rows]);
                let f: Vec<f64> = (0..n_rows)
                    .map(|j| match keep {
                        Some(k) if k[j] => 1.0,
                        _ => shrink_factor(norms[q * n_rows + j], lambda[q]),
                    })
                    .collect();
                for k in 0..c {
                    let col = &mut data[(q * c + k) * n_rows..(q * c + k + 1) * n_rows];
                    for (z, &fj) in col.iter_mut().zip(&f) {
                        if fj != 1.0 {
                            *z *= fj;
                        }
                    }
                }
            }
        }
        if record {
            tape.push(LayerTape {
                v: v.clone(),
                r: pseudo.clone(),
                v_norm,
                lambda,
                onsager,
            });
        }
        v_prev = v;
    }
    Forward {
        x_out: x,
        pseudo,
        tape,
    }
}

/// Smallest relative gap `|‖r_j‖ − λ| / λ` over every thresholded row, layer
/// and sample of a recorded pass; infinite when nothing is thresholded.
pub(crate) fn kink_margin(fwd: &Forward, batch: &StageBatch) -> f64 {
    let q_count = batch.n_samples();
    let c = batch.cols;
    let mut margin = f64::INFINITY;
    for layer in &fwd.tape {
        let n_rows = layer.r.nrows();
        let norms = sample_row_norms(&layer.r, q_count, c);
        for q in 0..q_count {
            let lam = layer.lambda[q];
            if lam <= 0.0 {
                continue;
            }
            let keep = batch.mask.as_ref().map(|m| &m[q * n_rows..(q + 1) * n_rows]);
            for j in 0..n_rows {
                if keep.is_some_and(|k| k[j]) {
                    continue;
                }
                margin = margin.min((norms[q * n_rows + j] - lam).abs() / lam);
            }
        }
    }
    margin
}

/// Batch mean squared error `(1/Q) Σ_q ‖X̂_q − X_q‖²_F`, returned with the
/// divisor `Q`.
pub(crate) fn batch_mse(x_out: &CMatrix, target: &CMatrix, n_samples: usize) -> (f64, f64) {
    let err: f64 = x_out.iter().zip(target.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
    let denom = n_samples.max(1) as f64;
    (err / denom, denom)
}

/// Loss and its gradients with respect to `log α` and `B`.
pub(crate) fn loss_and_gradients(
    batch: &StageBatch,
    s: &CMatrix,
    s_adj: &CMatrix,
    b: &CMatrix,
    alphas: &[f64],
    mode: OnsagerCount,
) -> Gradients {
    let fwd = forward(batch, s, b, alphas, mode, true);
    let (loss, denom) = batch_mse(&fwd.x_out, &batch.target, batch.n_samples());
    let q_count = batch.n_samples();
    let c = batch.cols;
    let n_rows = s.ncols();
    let root = ((s.nrows() * c) as f64).sqrt();
    let b_adj = b.adjoint();

    let mut g_x = (&fwd.x_out - &batch.target) * Complex64::new(2.0 / denom, 0.0);
    let mut g_v_next = CMatrix::zeros(s.nrows(), batch.y.ncols());
    let mut g_alpha = vec![0.0; alphas.len()];
    let mut g_b = CMatrix::zeros(b.nrows(), b.ncols());
    let mut g_v = CMatrix::zeros(s.nrows(), batch.y.ncols());

    for (t, layer) in fwd.tape.iter().enumerate().rev() {
        let alpha = alphas[t];
        // Through the row threshold X̂ᵗ⁺¹ = η(Rᵗ; λ).
        let norms = sample_row_norms(&layer.r, q_count, c);
        let mut g_lambda = vec![0.0; q_count];
        {
            let r = layer.r.as_slice();
            let g = g_x.as_mut_slice();
            for q in 0..q_count {
                let keep = batch.mask.as_ref().map(|m| &m[q * n_rows..(q + 1) * n_rows]);
                let lam = layer.lambda[q];
                for j in 0..n_rows {
                    if keep.is_some_and(|k| k[j]) {
                        continue;
                    }
                    let rho = norms[q * n_rows + j];
                    if rho <= lam || rho == 0.0 {
                        for k in 0..c {
                            g[(q * c + k) * n_rows + j] = ZERO;
                        }
                        continue;
                    }
                    // Re⟨r̂, g⟩ over the row.
                    let mut proj = 0.0;
                    for k in 0..c {
                        let idx = (q * c + k) * n_rows + j;
                        proj += (r[idx].conj() * g[idx]).re;
                    }
                    proj /= rho;
                    g_lambda[q] -= proj;
                    let shrink = 1.0 - lam / rho;
                    let radial = lam / rho * proj / rho;
                    for k in 0..c {
                        let idx = (q * c + k) * n_rows + j;
                        g[idx] = g[idx] * shrink + r[idx] * radial;
                    }
                }
            }
        }
        // g_x now holds ∂ℓ/∂Rᵗ. λ = α‖V‖/√(M̃c).
        for q in 0..q_count {
            g_alpha[t] += g_lambda[q] * layer.v_norm[q] / root;
        }
        // Rᵗ = X̂ᵗ + B·Vᵗ
        gemm_into(&mut g_b, ONE, &g_x, &layer.v.adjoint(), ONE);
        g_v.copy_from(&g_v_next);
        gemm_into(&mut g_v, ONE, &b_adj, &g_x, ONE);
        {
            let v = layer.v.as_slice();
            let gv = g_v.as_mut_slice();
            let m = s.nrows();
            for q in 0..q_count {
                let nv = layer.v_norm[q];
                if nv == 0.0 {
                    continue;
                }
                let coef = g_lambda[q] * alpha / root / nv;
                for idx in q * c * m..(q + 1) * c * m {
                    gv[idx] += v[idx] * coef;
                }
            }
        }
        // Vᵗ = Y − Ŝ·X̂ᵗ + bᵗ·Vᵗ⁻¹
        gemm_into(&mut g_x, -ONE, s_adj, &g_v, ONE);
        g_v_next.copy_from(&g_v);
        scale_blocks(&mut g_v_next, &layer.onsager, c);
    }
    Gradients {
        loss,
        log_alpha: g_alpha.iter().zip(alphas).map(|(g, a)| g * a).collect(),
        b: g_b,
    }
}
