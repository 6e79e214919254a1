//! Bayesian kNN multi-label inference over a datastore of projected
//! training samples.
//!
//! Each class is an independent binary problem. With neighbor weights
//! `w_n = exp(-d_n / τ)` and prior `p = P(r_h)`:
//!
//! ```text
//! P(r_h | z) = Σ_n p·y_n·w_n / Σ_n [p·y_n + (1-p)·(1-y_n)]·w_n
//! ```

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::PairSample;
use crate::error::{Error, Result};
use crate::kernel::DistanceMode;
use crate::labels::LabelMatrix;
use crate::linalg::{norm, Matrix};
use crate::model::ProjectionModel;

/// Projected training set with its labels. Immutable once built.
#[derive(Debug, Clone)]
pub struct Datastore {
    z: Matrix,
    y: LabelMatrix,
    class_counts: Vec<usize>,
    distance_mode: DistanceMode,
    tau: f64,
}

impl Datastore {
    /// Builds a store from already projected unit rows.
    pub fn from_parts(
        z: Matrix,
        y: LabelMatrix,
        distance_mode: DistanceMode,
        tau: f64,
    ) -> Result<Self> {
        if z.rows() == 0 {
            return Err(Error::Validation("empty datastore".into()));
        }
        if z.rows() != y.n_samples() {
            return Err(Error::shape(z.rows(), y.n_samples(), "datastore labels"));
        }
        if !(tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {tau}")));
        }
        for (i, row) in z.iter_rows().enumerate() {
            let n = norm(row);
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::Validation(format!(
                    "datastore row {i} has norm {n}, expected unit norm"
                )));
            }
        }
        let class_counts = y.column_counts();
        Ok(Self {
            z,
            y,
            class_counts,
            distance_mode,
            tau,
        })
    }

    pub fn len(&self) -> usize {
        self.z.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.z.rows() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.y.n_classes()
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.z
    }

    pub fn labels(&self) -> &LabelMatrix {
        &self.y
    }

    /// `n_h`, the number of stored samples carrying each class.
    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn distance_mode(&self) -> DistanceMode {
        self.distance_mode
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Class frequency priors `n_h / Σ_j n_j`.
    pub fn frequency_priors(&self) -> Vec<f64> {
        let total: usize = self.class_counts.iter().sum();
        self.class_counts
            .iter()
            .map(|&n| {
                if total == 0 {
                    0.0
                } else {
                    n as f64 / total as f64
                }
            })
            .collect()
    }
}

/// Projects every training sample and stores it with its labels.
pub fn build_datastore(
    model: &ProjectionModel,
    train: &[PairSample],
    num_classes: usize,
) -> Result<Datastore> {
    if train.is_empty() {
        return Err(Error::Validation("empty datastore".into()));
    }
    let rows = train
        .iter()
        .map(|s| {
            model
                .project(&s.x)
                .map_err(|e| Error::Validation(format!("sample {}: {e}", s.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let z = Matrix::from_rows(&rows)?;
    let y = crate::data::label_matrix(train, num_classes)?;
    Datastore::from_parts(z, y, model.distance_mode, model.tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// `P(r_h) = 1/2` for every class.
    #[default]
    Flat,
    /// `P(r_h) = n_h / Σ_j n_j` from the datastore.
    Informative,
}

impl FromStr for PriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(PriorMode::Flat),
            "informative" => Ok(PriorMode::Informative),
            other => Err(Error::Config(format!(
                "unknown prior {other:?} (expected flat or informative)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// One threshold `c` for all classes.
    #[default]
    Universal,
    /// Per-class threshold `n_h / Σ_j n_j`.
    ClassSpecific,
}

impl FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "universal" => Ok(ThresholdMode::Universal),
            "class" | "class_specific" => Ok(ThresholdMode::ClassSpecific),
            other => Err(Error::Config(format!(
                "unknown threshold mode {other:?} (expected universal or class)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub k: usize,
    pub prior_mode: PriorMode,
    pub threshold_mode: ThresholdMode,
    pub c: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            k: 10,
            prior_mode: PriorMode::Flat,
            threshold_mode: ThresholdMode::Universal,
            c: 0.5,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self, store_len: usize) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.k > store_len {
            return Err(Error::Config(format!(
                "k = {} exceeds datastore size {store_len}",
                self.k
            )));
        }
        if !(0.0..=1.0).contains(&self.c) {
            return Err(Error::Config(format!(
                "threshold c must lie in [0, 1], got {}",
                self.c
            )));
        }
        Ok(())
    }
}

/// Exact k nearest stored rows as `(index, distance)`, nearest first.
/// Equal distances are ordered by ascending index.
pub fn knn_query(store: &Datastore, z: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
    if k > store.len() {
        return Err(Error::Config(format!(
            "k = {k} exceeds datastore size {}",
            store.len()
        )));
    }
    if z.len() != store.z.cols() {
        return Err(Error::shape(store.z.cols(), z.len(), "query dimension"));
    }
    let mode = store.distance_mode;
    let mut all: Vec<(usize, f64)> = store
        .z
        .iter_rows()
        .enumerate()
        .map(|(i, row)| (i, mode.distance(z, row)))
        .collect();
    let cmp = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    if k == 0 {
        return Ok(Vec::new());
    }
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, cmp);
        all.truncate(k);
    }
    all.sort_by(cmp);
    Ok(all)
}

/// Posterior probability of every class given the neighbors of a query.
///
/// Weights are computed relative to the nearest neighbor, which leaves the
/// ratio unchanged and keeps the exponent from underflowing at small `τ`.
pub fn posterior(
    store: &Datastore,
    neighbors: &[(usize, f64)],
    config: &InferenceConfig,
) -> Vec<f64> {
    let r = store.num_classes();
    let Some(d_min) = neighbors.iter().map(|n| n.1).min_by(f64::total_cmp) else {
        return vec![0.0; r];
    };
    let weights: Vec<f64> = neighbors
        .iter()
        .map(|&(_, d)| (-(d - d_min) / store.tau).exp())
        .collect();
    let priors = match config.prior_mode {
        PriorMode::Flat => vec![0.5; r],
        PriorMode::Informative => store.frequency_priors(),
    };

    (0..r)
        .map(|h| {
            let p = priors[h];
            let (mut with, mut without) = (0.0, 0.0);
            for (&(idx, _), &w) in neighbors.iter().zip(&weights) {
                if store.y.get(idx, h) {
                    with += w;
                } else {
                    without += w;
                }
            }
            let num = p * with;
            let den = num + (1.0 - p) * without;
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        })
        .collect()
}

/// Thresholds posteriors into a 0/1 prediction (strictly greater than).
pub fn sharp_predict(posteriors: &[f64], store: &Datastore, config: &InferenceConfig) -> Vec<u8> {
    match config.threshold_mode {
        ThresholdMode::Universal => posteriors.iter().map(|&p| u8::from(p > config.c)).collect(),
        ThresholdMode::ClassSpecific => posteriors
            .iter()
            .zip(store.frequency_priors())
            .map(|(&p, t)| u8::from(p > t))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub id: String,
    pub posteriors: Vec<f64>,
    pub pred: Vec<u8>,
    /// Geometric mean of the posteriors of the predicted classes.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchPredictions {
    pub predictions: Vec<PredictionSet>,
    pub failures: Vec<SampleFailure>,
}

/// Full inference for one projected query.
pub fn predict_one(
    store: &Datastore,
    id: &str,
    z: &[f64],
    config: &InferenceConfig,
) -> Result<PredictionSet> {
    let neighbors = knn_query(store, z, config.k)?;
    let posteriors = posterior(store, &neighbors, config);
    let pred = sharp_predict(&posteriors, store, config);
    let confidence = crate::metrics::confidence_score(&posteriors, &pred);
    Ok(PredictionSet {
        id: id.to_string(),
        posteriors,
        pred,
        confidence,
    })
}

/// Projects and classifies every test sample, preserving input order.
/// Samples that fail are reported in `failures` and skipped.
pub fn predict_batch(
    model: &ProjectionModel,
    store: &Datastore,
    test: &[PairSample],
    config: &InferenceConfig,
) -> Result<BatchPredictions> {
    config.validate(store.len())?;
    let results: Vec<Result<PredictionSet>> = test
        .par_iter()
        .map(|s| {
            let z = model.project(&s.x)?;
            predict_one(store, &s.id, &z, config)
        })
        .collect();
    let mut out = BatchPredictions::default();
    for (s, r) in test.iter().zip(results) {
        match r {
            Ok(p) => out.predictions.push(p),
            Err(e) => out.failures.push(SampleFailure {
                id: s.id.clone(),
                message: e.to_string(),
            }),
        }
    }
    Ok(out)
}
