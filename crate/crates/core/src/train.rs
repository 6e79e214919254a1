//! Minibatch training of the projection head with early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::PairSample;
use crate::error::{Error, Result};
use crate::kernel::DistanceMode;
use crate::labels::LabelMatrix;
use crate::linalg::Matrix;
use crate::loss::supcon_multilabel_loss_grad;
pub use crate::model::Gradients;
use crate::model::{ArchConfig, ProjectionModel};
use crate::optim::{AdamW, AdamWConfig};

pub const DEFAULT_TEMPERATURE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub distance_mode: DistanceMode,
    pub temperature: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub optimizer: AdamWConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            distance_mode: DistanceMode::Euclidean,
            temperature: DEFAULT_TEMPERATURE,
            learning_rate: 5e-3,
            batch_size: 256,
            max_epochs: 30,
            patience: 5,
            seed: 0,
            optimizer: AdamWConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Config(format!(
                "train.temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "train.batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if self.patience < 1 {
            return Err(Error::Config("train.patience must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "train.learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        let o = &self.optimizer;
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return Err(Error::Config("optimizer betas must lie in [0, 1)".into()));
        }
        if !(o.eps > 0.0) || !(o.weight_decay >= 0.0) {
            return Err(Error::Config(
                "optimizer eps must be positive and weight_decay non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStopping,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean minibatch loss of each epoch, taken while the weights were updating.
    pub train_loss: Vec<f64>,
    /// Validation loss after each epoch, when a validation set was given.
    pub val_loss: Option<Vec<f64>>,
    /// Loss used for early stopping after each epoch.
    pub monitored_loss: Vec<f64>,
    /// Monitored loss of the freshly initialized model.
    pub initial_monitored_loss: f64,
    /// Training-set loss before the first update.
    pub initial_train_loss: f64,
    /// Training-set loss of the returned (best) weights.
    pub final_train_loss: f64,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_loss: f64,
    pub epochs_run: usize,
    pub stop_reason: StopReason,
}

/// Loss and parameter gradients of the contrastive loss over one batch.
pub fn loss_gradients<R: AsRef<[f64]>>(
    model: &ProjectionModel,
    xs: &[R],
    y: &LabelMatrix,
    config: &TrainConfig,
) -> Result<(f64, Gradients)> {
    if xs.len() != y.n_samples() {
        return Err(Error::shape(xs.len(), y.n_samples(), "batch labels"));
    }
    let traces = xs
        .iter()
        .map(|x| model.trace(x.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let z = Matrix::from_rows(&traces.iter().map(|t| t.z.as_slice()).collect::<Vec<_>>())?;
    let (loss, dz) = supcon_multilabel_loss_grad(&z, y, config.distance_mode, config.temperature)?;
    let mut grads = Gradients::zeros_like(model);
    for (i, trace) in traces.iter().enumerate() {
        let g = dz.row(i);
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        model.backward(trace, g, &mut grads);
    }
    Ok((loss, grads))
}

/// Contrastive loss of a batch, without gradients.
pub fn batch_loss<R: AsRef<[f64]>>(
    model: &ProjectionModel,
    xs: &[R],
    y: &LabelMatrix,
    mode: DistanceMode,
    tau: f64,
) -> Result<f64> {
    let z = model.project_batch(xs)?;
    crate::loss::supcon_multilabel_loss(&z, y, mode, tau)
}

/// Splits `order` into batches of `batch_size`; a trailing singleton is
/// merged into the previous batch since the loss needs two samples.
fn batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        out.pop();
        let start = (out.len() - 1) * batch_size;
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

fn num_classes(samples: &[PairSample]) -> usize {
    samples
        .iter()
        .flat_map(|s| s.labels.iter().copied())
        .max()
        .map_or(0, |m| m + 1)
}

/// Size-weighted mean of per-batch losses over `samples` in their given order.
fn dataset_loss(
    model: &ProjectionModel,
    samples: &[PairSample],
    labels: &LabelMatrix,
    config: &TrainConfig,
) -> Result<f64> {
    let order: Vec<usize> = (0..samples.len()).collect();
    let mut total = 0.0;
    for b in batches(&order, config.batch_size) {
        let xs: Vec<&[f64]> = b.iter().map(|&i| samples[i].x.as_slice()).collect();
        let y = labels.select_rows(b);
        let l = batch_loss(model, &xs, &y, config.distance_mode, config.temperature)?;
        total += l * b.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Trains a projection head from scratch.
///
/// After every epoch the validation loss (or the training loss without a
/// validation set) is monitored; training stops once it has not improved for
/// `patience` epochs and the best weights are returned.
pub fn train(
    train_set: &[PairSample],
    val_set: Option<&[PairSample]>,
    arch: ArchConfig,
    config: &TrainConfig,
) -> Result<(ProjectionModel, TrainHistory)> {
    config.validate()?;
    arch.validate()?;
    if train_set.is_empty() {
        return Err(Error::Validation("empty training set".into()));
    }
    if config.batch_size > train_set.len() {
        return Err(Error::Config(format!(
            "batch_size {} exceeds training set size {}",
            config.batch_size,
            train_set.len()
        )));
    }
    let val_set = val_set.filter(|v| !v.is_empty());
    if val_set.is_some_and(|v| v.len() < 2) {
        return Err(Error::Validation(
            "validation set needs at least 2 samples".into(),
        ));
    }

    let r = num_classes(train_set).max(val_set.map_or(0, num_classes));
    let train_labels = crate::data::label_matrix(train_set, r)?;
    let val_labels = val_set
        .map(|v| crate::data::label_matrix(v, r))
        .transpose()?;

    let mut model = ProjectionModel::init(arch, config.seed)?
        .with_geometry(config.distance_mode, config.temperature);
    let shapes: Vec<usize> = model.param_slices().iter().map(|s| s.len()).collect();
    let mut opt = AdamW::new(config.optimizer, config.learning_rate, &shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));

    let monitor = |m: &ProjectionModel| -> Result<(f64, Option<f64>)> {
        match (val_set, &val_labels) {
            (Some(v), Some(vl)) => {
                let l = dataset_loss(m, v, vl, config)?;
                Ok((l, Some(l)))
            }
            _ => Ok((dataset_loss(m, train_set, &train_labels, config)?, None)),
        }
    };

    let initial_train_loss = dataset_loss(&model, train_set, &train_labels, config)?;
    let initial_monitored_loss = match val_set {
        Some(_) => monitor(&model)?.0,
        None => initial_train_loss,
    };

    let mut train_loss = Vec::new();
    let mut val_loss = val_set.map(|_| Vec::new());
    let mut monitored_loss = Vec::new();
    let mut best: Option<(usize, f64, ProjectionModel)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for (bi, b) in batches(&order, config.batch_size).into_iter().enumerate() {
            let xs: Vec<&[f64]> = b.iter().map(|&i| train_set[i].x.as_slice()).collect();
            let y = train_labels.select_rows(b);
            let (loss, grads) = loss_gradients(&model, &xs, &y, config)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            epoch_total += loss * b.len() as f64;
            opt.step(model.param_slices_mut(), grads.slices());
        }
        let epoch_loss = epoch_total / train_set.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        train_loss.push(epoch_loss);

        let monitored = match monitor(&model) {
            Ok((l, v)) => {
                if let (Some(vs), Some(v)) = (val_loss.as_mut(), v) {
                    vs.push(v);
                }
                l
            }
            // a later epoch pushed some sample onto a degenerate output
            Err(Error::Degenerate { .. }) => f64::NAN,
            Err(e) => return Err(e),
        };
        if !monitored.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        monitored_loss.push(monitored);

        if best.as_ref().is_none_or(|(_, l, _)| monitored < *l) {
            best = Some((epoch, monitored, model.clone()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.0);
        if epoch - best_epoch >= config.patience {
            stop_reason = StopReason::EarlyStopping;
            break;
        }
    }

    let (best_epoch, best_loss, best_model) = match best {
        Some(b) => b,
        // max_epochs == 0
        None => (0, initial_monitored_loss, model),
    };
    let final_train_loss = dataset_loss(&best_model, train_set, &train_labels, config)?;
    let history = TrainHistory {
        epochs_run: train_loss.len(),
        train_loss,
        val_loss,
        monitored_loss,
        initial_monitored_loss,
        initial_train_loss,
        final_train_loss,
        best_epoch,
        best_loss,
        stop_reason,
    };
    Ok((best_model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthSpec};
    use crate::model::Activation;

    fn toy() -> (Vec<PairSample>, Vec<PairSample>) {
        generate_synthetic(&SynthSpec {
            num_classes: 2,
            samples_per_cluster: 20,
            input_dim: 6,
            cluster_count: 2,
            label_sets_per_cluster: vec![vec![0], vec![1]],
            noise_scale: 0.0,
            multilabel_fraction: 1.0,
            seed: 3,
        })
        .unwrap()
    }

    fn arch() -> ArchConfig {
        ArchConfig {
            num_layers: 2,
            width: 16,
            output_dim: 4,
            activation: Activation::Swish,
            input_dim: 6,
        }
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            temperature: 0.1,
            learning_rate: 1e-2,
            batch_size: 8,
            max_epochs: 10,
            seed: 1,
            ..Default::default()
        }
    }

    #[test]
    fn batches_merge_trailing_singleton() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.len(), 2);
        assert_eq!(b[1], &[4, 5, 6, 7, 8]);
        assert_eq!(batches(&order[..8], 4).len(), 2);
        assert_eq!(batches(&order[..3], 4), vec![&[0, 1, 2][..]]);
    }

    #[test]
    fn learnable_toy_reduces_loss() {
        let (tr, _) = toy();
        let (_, h) = train(&tr, None, arch(), &cfg()).unwrap();
        assert!(h.final_train_loss < h.initial_train_loss, "{h:?}");
        let best = h.monitored_loss[h.best_epoch - 1];
        assert!(h.monitored_loss.iter().all(|&l| l >= best));
        assert_eq!(best, h.best_loss);
    }

    #[test]
    fn frozen_lr_stops_at_best_plus_patience() {
        let (tr, _) = toy();
        let c = TrainConfig {
            learning_rate: 0.0,
            max_epochs: 30,
            patience: 5,
            ..cfg()
        };
        let (_, h) = train(&tr, Some(&tr), arch(), &c).unwrap();
        assert_eq!(h.stop_reason, StopReason::EarlyStopping);
        assert_eq!(h.best_epoch, 1);
        assert_eq!(h.epochs_run, h.best_epoch + c.patience);
        assert_eq!(h.val_loss.as_ref().unwrap().len(), h.epochs_run);
    }

    #[test]
    fn training_is_deterministic() {
        let (tr, te) = toy();
        let a = train(&tr, Some(&te), arch(), &cfg()).unwrap();
        let b = train(&tr, Some(&te), arch(), &cfg()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn rejects_bad_setups() {
        let (tr, _) = toy();
        assert!(matches!(
            train(&[], None, arch(), &cfg()),
            Err(Error::Validation(_))
        ));
        let big = TrainConfig {
            batch_size: 1000,
            ..cfg()
        };
        assert!(matches!(
            train(&tr, None, arch(), &big),
            Err(Error::Config(_))
        ));
        let hot = TrainConfig {
            temperature: 0.0,
            ..cfg()
        };
        assert!(matches!(
            train(&tr, None, arch(), &hot),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn exploding_learning_rate_is_reported_or_survives() {
        let (tr, _) = toy();
        let c = TrainConfig {
            learning_rate: 1e6,
            max_epochs: 3,
            ..cfg()
        };
        match train(&tr, None, arch(), &c) {
            Ok((_, h)) => assert!(h.best_loss.is_finite()),
            Err(e) => assert!(matches!(
                e,
                Error::NonFiniteLoss { .. } | Error::Degenerate { .. }
            )),
        }
    }

    #[test]
    fn config_rejects_unknown_fields() {
        let err = serde_json::from_str::<TrainConfig>(r#"{"temprature": 0.1}"#).unwrap_err();
        assert!(err.to_string().contains("temprature"));
    }
}
