//! Subcommand implementations.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use score_core::io::{self, DatasetDir};
use score_core::{
    build_datastore, build_pair_vectors, evaluate, generate_synthetic, grid_search, label_matrix,
    predict_batch, train, validate_dataset, DistanceMode, Error, EvalOptions, GridCell,
    InferenceConfig, PairSample, PredictionSet, ProjectionModel, Result, SynthSpec,
    TokenSentenceRecord, TrainConfig,
};

use crate::config::{apply_preset, ArchOptions, RunConfig};
use crate::timing::RunTimer;
use crate::{
    Command, EvalArgs, GridArgs, PairsArgs, PredictArgs, SynthArgs, TrainArgs, ValidateArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Gridsearch(a) => gridsearch(a),
        Command::Validate(a) => validate(a),
        Command::Pairs(a) => pairs(a),
    }
}

/// `<path>.log`, next to a file artifact.
fn log_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".log");
    PathBuf::from(s)
}

/// `<dir>/<stem>.<suffix>` for a file artifact `<dir>/<stem>.<ext>`.
fn sibling(artifact: &Path, suffix: &str) -> PathBuf {
    let stem = artifact
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    artifact.with_file_name(format!("{stem}.{suffix}"))
}

fn synth(args: SynthArgs) -> Result<()> {
    let timer = RunTimer::start("synth");
    let mut spec: SynthSpec = io::read_json(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let (train_set, test_set) = generate_synthetic(&spec)?;
    io::write_dataset(
        &args.out,
        &spec.meta(),
        &[("train", &train_set), ("test", &test_set)],
    )?;
    eprintln!(
        "wrote {} train and {} test samples to {}",
        train_set.len(),
        test_set.len(),
        args.out.display()
    );
    timer.finish(&args.out.join("synth.log"));
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let timer = RunTimer::start("train");
    let run = RunConfig::load(args.config.as_deref())?;
    let mut config = run.train_config(args.seed);
    if let Some(e) = args.epochs {
        config.max_epochs = e;
    }
    if let Some(d) = args.distance {
        config.distance_mode = d;
    }
    if let Some(t) = args.temperature {
        config.temperature = t;
    }
    let data = DatasetDir::open(&args.data)?;
    let train_set = data.load_split("train")?;
    let val_set = data.load_optional_split("val")?;
    let arch = run.arch.with_input(data.meta.embedding_dim);
    let (model, history) = train(&train_set, val_set.as_deref(), arch, &config)?;
    model.save(&args.out)?;
    io::write_json(sibling(&args.out, "history.json"), &history)?;
    eprintln!(
        "trained {} epochs ({:?}), best epoch {} with loss {:.6}",
        history.epochs_run, history.stop_reason, history.best_epoch, history.best_loss
    );
    timer.finish(&log_path(&args.out));
    Ok(())
}

/// Inference settings written next to the predictions so `eval` can echo them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictSidecar {
    pub inference: InferenceConfig,
    pub distance_mode: DistanceMode,
    pub tau: f64,
    pub num_classes: usize,
    pub datastore_size: usize,
}

pub fn sidecar_path(pred: &Path) -> PathBuf {
    sibling(pred, "config.json")
}

fn predict(args: PredictArgs) -> Result<()> {
    let timer = RunTimer::start("predict");
    let run = RunConfig::load(args.config.as_deref())?;
    let mut inference = run.inference;
    let flags = &args.inference;
    if let Some(p) = &flags.preset {
        apply_preset(&mut inference, p)?;
    }
    if let Some(k) = flags.k {
        inference.k = k;
    }
    if let Some(c) = flags.threshold {
        inference.c = c;
    }
    if let Some(p) = flags.prior_mode() {
        inference.prior_mode = p;
    }
    if let Some(t) = flags.threshold_mode() {
        inference.threshold_mode = t;
    }

    let model = ProjectionModel::load(&args.model)?;
    let data = DatasetDir::open(&args.data)?;
    if model.arch.input_dim != data.meta.embedding_dim {
        return Err(Error::shape(
            model.arch.input_dim,
            data.meta.embedding_dim,
            "model input dimension vs dataset embedding_dim",
        ));
    }
    let train_set = data.load_split("train")?;
    let test_set: Vec<PairSample> = match &args.test {
        Some(path) => {
            let records: Vec<PairSample> = io::read_jsonl(path)?;
            let report = validate_dataset(&records, &data.meta);
            if let Some(v) = report.violations.first() {
                return Err(Error::Validation(format!("{}: {v}", path.display())));
            }
            records
        }
        None => data.load_split("test")?,
    };
    let store = build_datastore(&model, &train_set, data.meta.num_classes)?;
    let out = predict_batch(&model, &store, &test_set, &inference)?;
    io::write_jsonl(&args.out, &out.predictions)?;
    io::write_json(
        sidecar_path(&args.out),
        &PredictSidecar {
            inference,
            distance_mode: model.distance_mode,
            tau: model.tau,
            num_classes: data.meta.num_classes,
            datastore_size: store.len(),
        },
    )?;
    timer.finish(&log_path(&args.out));
    if out.failures.is_empty() {
        return Ok(());
    }
    for f in &out.failures {
        eprintln!("sample {}: {}", f.id, f.message);
    }
    Err(Error::Validation(format!(
        "{} of {} samples failed",
        out.failures.len(),
        test_set.len()
    )))
}

fn eval(args: EvalArgs) -> Result<()> {
    let timer = RunTimer::start("eval");
    let run = RunConfig::load(args.config.as_deref())?;
    let mut options: EvalOptions = run.metrics;
    if let Some(m) = args.m_values {
        options.m_values = m;
    }
    options.include_phi |= args.phi;

    let manifest = match &args.manifest {
        Some(m) => m.clone(),
        None => args
            .truth
            .parent()
            .unwrap_or(Path::new("."))
            .join(io::MANIFEST_FILE),
    };
    let meta = io::read_manifest(&manifest)?;
    let r = meta.num_classes;
    let truth: Vec<PairSample> = io::read_jsonl(&args.truth)?;
    let report = validate_dataset(&truth, &meta);
    if let Some(v) = report.violations.first() {
        return Err(Error::Validation(format!("{}: {v}", args.truth.display())));
    }
    let preds: Vec<PredictionSet> = io::read_jsonl(&args.pred)?;
    if let Some(p) = preds
        .iter()
        .find(|p| p.posteriors.len() != r || p.pred.len() != r)
    {
        return Err(Error::Validation(format!(
            "dimension mismatch: prediction {} has {} classes but the truth label space has R = {r}",
            p.id,
            p.posteriors.len().max(p.pred.len()),
        )));
    }

    let mut by_id: HashMap<&str, &PredictionSet> = HashMap::with_capacity(preds.len());
    for p in &preds {
        if by_id.insert(p.id.as_str(), p).is_some() {
            return Err(Error::Validation(format!(
                "duplicate prediction id {}",
                p.id
            )));
        }
    }
    if preds.len() != truth.len() {
        return Err(Error::shape(
            truth.len(),
            preds.len(),
            "prediction count vs truth count",
        ));
    }
    let aligned = truth
        .iter()
        .map(|t| {
            by_id
                .get(t.id.as_str())
                .map(|p| (*p).clone())
                .ok_or_else(|| Error::Validation(format!("no prediction for truth id {}", t.id)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = evaluate(&aligned, &label_matrix(&truth, r)?, &options)?;
    let sidecar = sidecar_path(&args.pred);
    if sidecar.is_file() {
        report.config = io::read_json(&sidecar)?;
    }
    match &args.out {
        Some(out) => {
            io::write_json(out, &report)?;
            timer.finish(&log_path(out));
        }
        None => {
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Validation(e.to_string()))?;
            println!("{text}");
        }
    }
    Ok(())
}

/// Grid file: a base configuration plus value lists to sweep. An empty
/// list keeps the base value. Cells are the cartesian product.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridFile {
    pub arch: ArchOptions,
    pub train: TrainConfig,
    pub num_layers: Vec<usize>,
    pub width: Vec<usize>,
    pub output_dim: Vec<usize>,
    pub distance_mode: Vec<DistanceMode>,
    pub temperature: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub k: Vec<usize>,
    pub c: Vec<f64>,
}

fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl GridFile {
    pub fn cells(&self, input_dim: usize, seed: Option<u64>) -> Vec<GridCell> {
        let inference = InferenceConfig::default();
        let mut cells = Vec::new();
        for &num_layers in &axis(&self.num_layers, self.arch.num_layers) {
            for &width in &axis(&self.width, self.arch.width) {
                for &output_dim in &axis(&self.output_dim, self.arch.output_dim) {
                    for &distance_mode in &axis(&self.distance_mode, self.train.distance_mode) {
                        for &temperature in &axis(&self.temperature, self.train.temperature) {
                            for &learning_rate in
                                &axis(&self.learning_rate, self.train.learning_rate)
                            {
                                for &k in &axis(&self.k, inference.k) {
                                    for &c in &axis(&self.c, inference.c) {
                                        let arch = ArchOptions {
                                            num_layers,
                                            width,
                                            output_dim,
                                            ..self.arch
                                        };
                                        let mut train = TrainConfig {
                                            distance_mode,
                                            temperature,
                                            learning_rate,
                                            ..self.train
                                        };
                                        if let Some(s) = seed {
                                            train.seed = s;
                                        }
                                        cells.push(GridCell {
                                            arch: arch.with_input(input_dim),
                                            train,
                                            k,
                                            c,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        cells
    }
}

fn gridsearch(args: GridArgs) -> Result<()> {
    let timer = RunTimer::start("gridsearch");
    let grid: GridFile = io::read_json(&args.grid).map_err(|e| match e {
        Error::Parse {
            path,
            line,
            message,
        } => Error::Config(format!("{}:{line}: {message}", path.display())),
        other => other,
    })?;
    let data = DatasetDir::open(&args.data)?;
    let train_set = data.load_split("train")?;
    let val_set = match data.load_optional_split("val")? {
        Some(v) => v,
        None => {
            eprintln!("warning: no val split, scoring cells on the training set");
            train_set.clone()
        }
    };
    let cells = grid.cells(data.meta.embedding_dim, args.seed);
    let results = grid_search(&train_set, &val_set, &cells, data.meta.num_classes)?;
    io::write_json(&args.out, &results)?;
    if let Some(best) = results.first().filter(|r| !r.failed()) {
        eprintln!(
            "best cell {} with validation micro F1 {:.4}",
            best.cell_index,
            best.val_micro_f1.unwrap_or(0.0)
        );
    }
    timer.finish(&log_path(&args.out));
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<()> {
    let data = DatasetDir::open(&args.data)?;
    data.meta.validate()?;
    let mut bad = 0;
    for split in ["train", "val", "test"] {
        if !data.has_split(split) {
            continue;
        }
        let records: Vec<PairSample> = io::read_jsonl(data.split_path(split))?;
        let report = validate_dataset(&records, &data.meta);
        println!(
            "{split}: {} records, {} violations, multi-label fraction {:.4}",
            report.num_records,
            report.violations.len(),
            report.multilabel_fraction
        );
        for v in &report.violations {
            println!("  {v}");
        }
        bad += report.violations.len();
    }
    if bad > 0 {
        return Err(Error::Validation(format!("{bad} violation(s)")));
    }
    Ok(())
}

fn pairs(args: PairsArgs) -> Result<()> {
    let records: Vec<TokenSentenceRecord> = io::read_jsonl(&args.tokens)?;
    let mut out = Vec::new();
    for r in &records {
        out.extend(build_pair_vectors(r)?);
    }
    io::write_jsonl(&args.out, &out)?;
    eprintln!("wrote {} pair samples", out.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expands_cartesian_product() {
        let grid: GridFile =
            serde_json::from_str(r#"{"k": [5, 10], "c": [0.4, 0.5, 0.6]}"#).unwrap();
        let cells = grid.cells(8, Some(3));
        assert_eq!(cells.len(), 6);
        assert!(cells
            .iter()
            .all(|c| c.arch.input_dim == 8 && c.train.seed == 3));
        assert_eq!((cells[1].k, cells[1].c), (5, 0.5));
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(
            sibling(Path::new("out/model.json"), "history.json"),
            Path::new("out/model.history.json")
        );
        assert_eq!(log_path(Path::new("p.jsonl")), Path::new("p.jsonl.log"));
    }
}
