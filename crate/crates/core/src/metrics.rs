//! Evaluation metrics for multi-label predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::PredictionSet;
use crate::labels::LabelMatrix;
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    fn f1(&self) -> Option<f64> {
        let denom = self.tp as f64 + 0.5 * (self.fp + self.fn_) as f64;
        (self.tp + self.fp + self.fn_ > 0).then(|| self.tp as f64 / denom)
    }
}

pub fn per_class_confusion(pred: &LabelMatrix, truth: &LabelMatrix) -> Result<Vec<Confusion>> {
    pred.ensure_same_shape(truth)?;
    let mut out = vec![Confusion::default(); truth.n_classes()];
    for i in 0..truth.n_samples() {
        for (c, (&p, &t)) in pred.row(i).iter().zip(truth.row(i)).enumerate() {
            match (p, t) {
                (1, 1) => out[c].tp += 1,
                (1, 0) => out[c].fp += 1,
                (0, 1) => out[c].fn_ += 1,
                _ => {}
            }
        }
    }
    Ok(out)
}

/// `TP / (TP + (FP + FN) / 2)` over all cells; 0 when there is nothing to count.
pub fn micro_f1(pred: &LabelMatrix, truth: &LabelMatrix) -> Result<f64> {
    let total = per_class_confusion(pred, truth)?
        .into_iter()
        .fold(Confusion::default(), |a, c| Confusion {
            tp: a.tp + c.tp,
            fp: a.fp + c.fp,
            fn_: a.fn_ + c.fn_,
        });
    Ok(total.f1().unwrap_or(0.0))
}

/// Per-class F1; `None` for classes with no predicted or true positives.
pub fn per_class_f1(pred: &LabelMatrix, truth: &LabelMatrix) -> Result<Vec<Option<f64>>> {
    Ok(per_class_confusion(pred, truth)?
        .iter()
        .map(Confusion::f1)
        .collect())
}

/// Mean per-class F1 over classes with `TP + FP + FN > 0`.
pub fn macro_f1(pred: &LabelMatrix, truth: &LabelMatrix) -> Result<f64> {
    let scores: Vec<f64> = per_class_f1(pred, truth)?.into_iter().flatten().collect();
    if scores.is_empty() {
        return Err(Error::UndefinedMetric(
            "macro F1 has no class with predicted or true positives".into(),
        ));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Geometric mean of the posteriors of positively predicted classes,
/// 0 when nothing is predicted.
pub fn confidence_score(posteriors: &[f64], pred: &[u8]) -> f64 {
    let chosen: Vec<f64> = posteriors
        .iter()
        .zip(pred)
        .filter(|(_, &p)| p == 1)
        .map(|(&v, _)| v)
        .collect();
    if chosen.is_empty() {
        return 0.0;
    }
    let n = chosen.len() as f64;
    let product: f64 = chosen.iter().product();
    if product > 0.0 || chosen.contains(&0.0) {
        product.powf(1.0 / n)
    } else {
        // product underflowed
        (chosen.iter().map(|v| v.ln()).sum::<f64>() / n).exp()
    }
}

/// Sample indices sorted by confidence, most confident first; ties by index.
pub fn confidence_ranking(predictions: &[PredictionSet]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..predictions.len()).collect();
    idx.sort_by(|&a, &b| {
        predictions[b]
            .confidence
            .total_cmp(&predictions[a].confidence)
            .then(a.cmp(&b))
    });
    idx
}

fn prediction_matrix(predictions: &[PredictionSet], n_classes: usize) -> Result<LabelMatrix> {
    let rows: Vec<&[u8]> = predictions.iter().map(|p| p.pred.as_slice()).collect();
    LabelMatrix::from_rows(&rows, n_classes)
}

fn posterior_matrix(predictions: &[PredictionSet], n_classes: usize) -> Result<Matrix> {
    if predictions.is_empty() {
        return Ok(Matrix::zeros(0, n_classes));
    }
    let rows: Vec<&[f64]> = predictions
        .iter()
        .map(|p| p.posteriors.as_slice())
        .collect();
    let m = Matrix::from_rows(&rows)?;
    if m.cols() != n_classes {
        return Err(Error::shape(n_classes, m.cols(), "posterior columns"));
    }
    Ok(m)
}

/// Micro and macro F1 over the `m` most confident samples.
pub fn f1_at_m(predictions: &[PredictionSet], truth: &LabelMatrix, m: usize) -> Result<(f64, f64)> {
    if predictions.len() != truth.n_samples() {
        return Err(Error::shape(
            truth.n_samples(),
            predictions.len(),
            "predictions vs truth rows",
        ));
    }
    if m > truth.n_samples() {
        return Err(Error::Config(format!(
            "M = {m} exceeds the number of test samples {}",
            truth.n_samples()
        )));
    }
    let top: Vec<usize> = confidence_ranking(predictions)
        .into_iter()
        .take(m)
        .collect();
    let pred = prediction_matrix(predictions, truth.n_classes())?.select_rows(&top);
    let sub_truth = truth.select_rows(&top);
    Ok((micro_f1(&pred, &sub_truth)?, macro_f1(&pred, &sub_truth)?))
}

/// Mean over samples with at least one true label of the fraction of true
/// labels among the `R_j` classes with the highest posterior.
pub fn precision_at_r(posteriors: &Matrix, truth: &LabelMatrix) -> Result<f64> {
    if posteriors.rows() != truth.n_samples() {
        return Err(Error::shape(
            truth.n_samples(),
            posteriors.rows(),
            "posterior rows",
        ));
    }
    if posteriors.cols() != truth.n_classes() {
        return Err(Error::shape(
            truth.n_classes(),
            posteriors.cols(),
            "posterior columns",
        ));
    }
    let mut sum = 0.0;
    let mut counted = 0usize;
    let mut order: Vec<usize> = Vec::with_capacity(truth.n_classes());
    for j in 0..truth.n_samples() {
        let t = truth.row(j);
        let r_j = t.iter().filter(|&&v| v == 1).count();
        if r_j == 0 {
            continue;
        }
        let p = posteriors.row(j);
        order.clear();
        order.extend(0..p.len());
        order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
        let hits = order[..r_j].iter().filter(|&&c| t[c] == 1).count();
        sum += hits as f64 / r_j as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::UndefinedMetric(
            "P@R needs at least one sample with a true label".into(),
        ));
    }
    Ok(sum / counted as f64)
}

/// Pearson φ between every pair of label columns. Entries involving a
/// constant column are 0.
pub fn phi_matrix(y: &LabelMatrix) -> Matrix {
    let r = y.n_classes();
    let n = y.n_samples() as i64;
    let ones: Vec<i64> = y.column_counts().into_iter().map(|c| c as i64).collect();
    let mut both = vec![0i64; r * r];
    for i in 0..y.n_samples() {
        let row = y.row(i);
        for h in 0..r {
            if row[h] == 1 {
                for p in 0..r {
                    both[h * r + p] += i64::from(row[p]);
                }
            }
        }
    }
    let mut phi = Matrix::zeros(r, r);
    for h in 0..r {
        for p in 0..r {
            let n11 = both[h * r + p];
            let n10 = ones[h] - n11;
            let n01 = ones[p] - n11;
            let n00 = n - n11 - n10 - n01;
            let denom = (ones[h] as f64)
                * ((n - ones[h]) as f64)
                * (ones[p] as f64)
                * ((n - ones[p]) as f64);
            if denom > 0.0 {
                phi.set(h, p, (n11 * n00 - n01 * n10) as f64 / denom.sqrt());
            }
        }
    }
    phi
}

/// Frobenius distance between the φ matrices of predictions and truth.
pub fn csd(pred: &LabelMatrix, truth: &LabelMatrix) -> Result<f64> {
    if pred.n_classes() != truth.n_classes() {
        return Err(Error::shape(
            truth.n_classes(),
            pred.n_classes(),
            "label matrix classes",
        ));
    }
    if pred.n_samples() != truth.n_samples() {
        return Err(Error::shape(
            truth.n_samples(),
            pred.n_samples(),
            "label matrix samples",
        ));
    }
    let a = phi_matrix(pred);
    let b = phi_matrix(truth);
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    /// Sample counts for micro/macro F1@M. Values above the test size are skipped.
    pub m_values: Vec<usize>,
    pub include_phi: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtM {
    pub m: usize,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_samples: usize,
    pub num_classes: usize,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_class_f1: Vec<Option<f64>>,
    pub p_at_r: f64,
    pub csd: f64,
    pub at_m: Vec<AtM>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_pred: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_truth: Option<Vec<Vec<f64>>>,
    /// Echo of the configuration that produced the predictions.
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub config: serde_json::Value,
}

/// Computes every metric for `predictions` aligned row-by-row with `truth`.
pub fn evaluate(
    predictions: &[PredictionSet],
    truth: &LabelMatrix,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let r = truth.n_classes();
    if predictions.len() != truth.n_samples() {
        return Err(Error::shape(
            truth.n_samples(),
            predictions.len(),
            "predictions vs truth rows",
        ));
    }
    let pred = prediction_matrix(predictions, r)?;
    let post = posterior_matrix(predictions, r)?;
    let mut at_m = Vec::new();
    for &m in &options.m_values {
        if m == 0 || m > truth.n_samples() {
            continue;
        }
        let (micro, macro_) = f1_at_m(predictions, truth, m)?;
        at_m.push(AtM {
            m,
            micro_f1: micro,
            macro_f1: macro_,
        });
    }
    Ok(EvalReport {
        num_samples: truth.n_samples(),
        num_classes: r,
        micro_f1: micro_f1(&pred, truth)?,
        macro_f1: macro_f1(&pred, truth)?,
        per_class_f1: per_class_f1(&pred, truth)?,
        p_at_r: precision_at_r(&post, truth)?,
        csd: csd(&pred, truth)?,
        at_m,
        phi_pred: options.include_phi.then(|| phi_matrix(&pred).to_rows()),
        phi_truth: options.include_phi.then(|| phi_matrix(truth).to_rows()),
        config: serde_json::Value::Null,
    })
}
