//! Multi-label supervised contrastive loss.
//!
//! For a batch of unit vectors `z` with multi-hot labels `y`:
//!
//! ```text
//! L = -(1/N) Σ_i Σ_{j≠i} β_ij · log( w_ij / Σ_{k≠i} w_ik )
//! β_ij = (y_i·y_j) / Σ_{k≠i} (y_i·y_k),   w_ij = exp(-D(z_i, z_j) / τ)
//! ```
//!
//! Anchors without any positive partner in the batch contribute zero, while
//! the `1/N` normalization still counts every anchor.

use crate::error::{Error, Result};
use crate::kernel::DistanceMode;
use crate::labels::LabelMatrix;
use crate::linalg::{dot, squared_euclidean, Matrix};

fn check_inputs(z: &Matrix, y: &LabelMatrix, tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Config(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    if z.rows() < 2 {
        return Err(Error::Batch(format!(
            "contrastive loss needs at least 2 samples, got {}",
            z.rows()
        )));
    }
    if y.n_samples() != z.rows() {
        return Err(Error::shape(
            z.rows(),
            y.n_samples(),
            "label rows vs embedding rows",
        ));
    }
    Ok(())
}

/// Raw distance without clamping, so the loss stays smooth in cosine mode.
fn raw_distance(mode: DistanceMode, a: &[f64], b: &[f64]) -> f64 {
    match mode {
        DistanceMode::Euclidean => squared_euclidean(a, b).sqrt(),
        DistanceMode::Cosine => 1.0 - dot(a, b),
    }
}

/// `β_ij = (y_i·y_j) / Σ_{k≠i} y_i·y_k`, with zero rows for anchors that
/// share no label with any other sample. The diagonal is zero.
pub fn beta_matrix(y: &LabelMatrix) -> Matrix {
    let n = y.n_samples();
    let mut beta = Matrix::zeros(n, n);
    for i in 0..n {
        let row = beta.row_mut(i);
        let mut total = 0.0;
        for (j, b) in row.iter_mut().enumerate() {
            if j != i {
                *b = y.overlap(i, j) as f64;
                total += *b;
            }
        }
        if total > 0.0 {
            row.iter_mut().for_each(|b| *b /= total);
        }
    }
    beta
}

pub fn supcon_multilabel_loss(
    z: &Matrix,
    y: &LabelMatrix,
    mode: DistanceMode,
    tau: f64,
) -> Result<f64> {
    supcon_loss_impl(z, y, mode, tau, false).map(|(l, _)| l)
}

/// Loss value and its gradient with respect to each row of `z`.
pub fn supcon_multilabel_loss_grad(
    z: &Matrix,
    y: &LabelMatrix,
    mode: DistanceMode,
    tau: f64,
) -> Result<(f64, Matrix)> {
    supcon_loss_impl(z, y, mode, tau, true).map(|(l, g)| (l, g.expect("gradient requested")))
}

fn supcon_loss_impl(
    z: &Matrix,
    y: &LabelMatrix,
    mode: DistanceMode,
    tau: f64,
    with_grad: bool,
) -> Result<(f64, Option<Matrix>)> {
    check_inputs(z, y, tau)?;
    let n = z.rows();
    let dim = z.cols();
    let inv_n = 1.0 / n as f64;

    let mut dist = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = raw_distance(mode, z.row(i), z.row(j));
            dist.set(i, j, d);
            dist.set(j, i, d);
        }
    }

    let mut grad = with_grad.then(|| Matrix::zeros(n, dim));
    let mut total = 0.0;
    let mut logits = vec![0.0; n];
    let beta = beta_matrix(y);

    for i in 0..n {
        let beta_i = beta.row(i);
        if beta_i.iter().all(|&b| b == 0.0) {
            continue;
        }

        let mut max_logit = f64::NEG_INFINITY;
        for j in 0..n {
            if j != i {
                logits[j] = -dist.get(i, j) / tau;
                max_logit = max_logit.max(logits[j]);
            }
        }
        let sum_exp: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| (logits[j] - max_logit).exp())
            .sum();
        let lse = max_logit + sum_exp.ln();

        // Σ_j β_ij (lse - s_ij), with Σ_j β_ij = 1
        let weighted: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| beta_i[j] * logits[j])
            .sum();
        total += lse - weighted;

        if let Some(g) = grad.as_mut() {
            for j in 0..n {
                if j == i {
                    continue;
                }
                let softmax = (logits[j] - lse).exp();
                // dL/ds_ij, and ds_ij = -dD_ij / tau
                let coeff = inv_n * (softmax - beta_i[j]) * (-1.0 / tau);
                if coeff == 0.0 {
                    continue;
                }
                match mode {
                    DistanceMode::Euclidean => {
                        let d = dist.get(i, j);
                        if d == 0.0 {
                            continue;
                        }
                        for c in 0..dim {
                            let diff = (z.get(i, c) - z.get(j, c)) / d;
                            g.row_mut(i)[c] += coeff * diff;
                            g.row_mut(j)[c] -= coeff * diff;
                        }
                    }
                    DistanceMode::Cosine => {
                        for c in 0..dim {
                            let zi = z.get(i, c);
                            let zj = z.get(j, c);
                            g.row_mut(i)[c] -= coeff * zj;
                            g.row_mut(j)[c] -= coeff * zi;
                        }
                    }
                }
            }
        }
    }
    Ok((total * inv_n, grad))
}
