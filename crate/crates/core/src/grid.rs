//! Grid search over training and inference hyperparameters.
//!
//! Cells sharing the same architecture and training configuration reuse one
//! trained model; `k` and `c` only affect inference. Each cell is scored by
//! validation micro F1 under a flat prior and universal threshold.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{label_matrix, PairSample};
use crate::error::{Error, Result};
use crate::knn::{build_datastore, predict_batch, Datastore, InferenceConfig};
use crate::metrics::micro_f1;
use crate::model::{ArchConfig, ProjectionModel};
use crate::train::{train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub k: usize,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    /// Position of the cell in the input grid.
    pub cell_index: usize,
    pub cell: GridCell,
    pub val_micro_f1: Option<f64>,
    /// Set when the cell could not be trained or evaluated.
    pub error: Option<String>,
}

impl GridResult {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

fn score_cell(
    trained: &std::result::Result<(ProjectionModel, Datastore), String>,
    cell: &GridCell,
    val: &[PairSample],
    num_classes: usize,
) -> Result<f64> {
    let (model, store) = trained.as_ref().map_err(|e| Error::Config(e.clone()))?;
    let config = InferenceConfig {
        k: cell.k,
        c: cell.c,
        ..Default::default()
    };
    let out = predict_batch(model, store, val, &config)?;
    if let Some(f) = out.failures.first() {
        return Err(Error::Validation(format!(
            "{} validation sample(s) failed, first {}: {}",
            out.failures.len(),
            f.id,
            f.message
        )));
    }
    let rows: Vec<&[u8]> = out.predictions.iter().map(|p| p.pred.as_slice()).collect();
    let pred = crate::labels::LabelMatrix::from_rows(&rows, num_classes)?;
    micro_f1(&pred, &label_matrix(val, num_classes)?)
}

/// Trains and scores every cell. Failed cells are reported, not fatal, and
/// rank after all successful ones.
pub fn grid_search(
    train_set: &[PairSample],
    val_set: &[PairSample],
    grid: &[GridCell],
    num_classes: usize,
) -> Result<Vec<GridResult>> {
    if grid.is_empty() {
        return Err(Error::Config("grid search needs at least one cell".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Validation(
            "grid search needs a non-empty validation set".into(),
        ));
    }

    let mut trained: HashMap<String, std::result::Result<(ProjectionModel, Datastore), String>> =
        HashMap::new();
    let mut results = Vec::with_capacity(grid.len());
    for (cell_index, cell) in grid.iter().enumerate() {
        let key = serde_json::to_string(&(&cell.arch, &cell.train)).expect("serializable config");
        let entry = trained.entry(key).or_insert_with(|| {
            train(train_set, Some(val_set), cell.arch, &cell.train)
                .and_then(|(model, _)| {
                    let store = build_datastore(&model, train_set, num_classes)?;
                    Ok((model, store))
                })
                .map_err(|e| e.to_string())
        });
        let outcome = score_cell(entry, cell, val_set, num_classes);
        results.push(GridResult {
            cell_index,
            cell: cell.clone(),
            val_micro_f1: outcome.as_ref().ok().copied(),
            error: outcome.err().map(|e| e.to_string()),
        });
    }

    results.sort_by(|a, b| match (a.val_micro_f1, b.val_micro_f1) {
        (Some(fa), Some(fb)) => fb
            .total_cmp(&fa)
            .then(a.cell.k.cmp(&b.cell.k))
            .then(a.cell.c.total_cmp(&b.cell.c))
            .then(
                a.cell
                    .train
                    .learning_rate
                    .total_cmp(&b.cell.train.learning_rate),
            )
            .then(a.cell_index.cmp(&b.cell_index)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cell_index.cmp(&b.cell_index),
    });
    Ok(results)
}
