use std::path::Path;
use std::process::{Command, Output};

use score_core::io::{read_jsonl, DatasetDir};
use score_core::{validate_dataset, EvalReport, PairSample, PredictionSet, ProjectionModel};

fn score(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_score"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SPEC: &str = r#"{"num_classes": 4, "samples_per_cluster": 30, "input_dim": 8, "cluster_count": 3,
    "label_sets_per_cluster": [[0], [1], [2, 3]], "noise_scale": 0.1, "seed": 5}"#;
const CONFIG: &str = r#"{"arch": {"num_layers": 1, "width": 16, "output_dim": 4},
    "train": {"batch_size": 24, "max_epochs": 5, "temperature": 0.1}}"#;

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.json"), SPEC).unwrap();
    std::fs::write(dir.path().join("cfg.json"), CONFIG).unwrap();
    dir
}

fn synth_and_train(dir: &Path) {
    let o = score(dir, &["synth", "--spec", "spec.json", "--out", "data"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = score(
        dir,
        &[
            "train",
            "--data",
            "data",
            "--config",
            "cfg.json",
            "--out",
            "model.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn synth_then_train_writes_valid_files() {
    let dir = setup();
    synth_and_train(dir.path());
    let data = DatasetDir::open(dir.path().join("data")).unwrap();
    for split in ["train", "test"] {
        let records: Vec<PairSample> = read_jsonl(data.split_path(split)).unwrap();
        assert!(validate_dataset(&records, &data.meta).ok);
    }
    let model = ProjectionModel::load(dir.path().join("model.json")).unwrap();
    assert_eq!(model.arch.input_dim, 8);
    assert!(dir.path().join("model.history.json").is_file());
    assert!(dir.path().join("model.json.log").is_file());
}

#[test]
fn predict_and_eval_produce_a_report() {
    let dir = setup();
    synth_and_train(dir.path());
    let o = score(
        dir.path(),
        &[
            "predict",
            "--model",
            "model.json",
            "--data",
            "data",
            "--out",
            "p.jsonl",
            "--k",
            "5",
            "--prior",
            "informative",
            "--threshold-mode",
            "class",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let preds: Vec<PredictionSet> = read_jsonl(dir.path().join("p.jsonl")).unwrap();
    assert_eq!(preds.len(), 18);
    assert!(preds.iter().all(|p| p.posteriors.len() == 4));

    let o = score(
        dir.path(),
        &[
            "eval",
            "--pred",
            "p.jsonl",
            "--truth",
            "data/test.jsonl",
            "--m-values",
            "5,10,100",
            "--phi",
            "--out",
            "r.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report: EvalReport = score_core::io::read_json(dir.path().join("r.json")).unwrap();
    assert_eq!(report.num_samples, 18);
    assert_eq!(
        report.at_m.iter().map(|a| a.m).collect::<Vec<_>>(),
        vec![5, 10]
    );
    assert!(report.phi_pred.is_some());
    assert_eq!(report.config["inference"]["k"], 5);
    assert_eq!(
        report.config["inference"]["threshold_mode"],
        "class_specific"
    );
}

#[test]
fn eval_with_mismatched_class_count_names_the_conflict() {
    let dir = setup();
    let o = score(
        dir.path(),
        &["synth", "--spec", "spec.json", "--out", "data"],
    );
    assert!(o.status.success());
    std::fs::write(
        dir.path().join("p.jsonl"),
        "{\"id\":\"c0_s4\",\"posteriors\":[0.9,0.1,0.0],\"pred\":[1,0,0],\"confidence\":0.9}\n",
    )
    .unwrap();
    let o = score(
        dir.path(),
        &["eval", "--pred", "p.jsonl", "--truth", "data/test.jsonl"],
    );
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(
        msg.contains("dimension mismatch") && msg.contains("R = 4"),
        "{msg}"
    );
}

#[test]
fn exit_codes() {
    let dir = setup();
    assert_eq!(score(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        score(dir.path(), &["train", "--bogus"]).status.code(),
        Some(1)
    );
    assert_eq!(score(dir.path(), &["--help"]).status.code(), Some(0));
    let o = score(
        dir.path(),
        &["train", "--data", "missing", "--out", "m.json"],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn malformed_config_names_the_field() {
    let dir = setup();
    score(
        dir.path(),
        &["synth", "--spec", "spec.json", "--out", "data"],
    );
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"train": {"learning_rte": 0.1}}"#,
    )
    .unwrap();
    let o = score(
        dir.path(),
        &[
            "train", "--data", "data", "--config", "bad.json", "--out", "m.json",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("learning_rte"), "{}", stderr(&o));
}

#[test]
fn rerun_is_byte_identical() {
    let dir = setup();
    synth_and_train(dir.path());
    let first = std::fs::read(dir.path().join("model.json")).unwrap();
    let o = score(
        dir.path(),
        &[
            "train",
            "--data",
            "data",
            "--config",
            "cfg.json",
            "--out",
            "model.json",
        ],
    );
    assert!(o.status.success());
    assert_eq!(first, std::fs::read(dir.path().join("model.json")).unwrap());
    let o = score(
        dir.path(),
        &[
            "train",
            "--data",
            "data",
            "--config",
            "cfg.json",
            "--out",
            "other.json",
            "--seed",
            "9",
        ],
    );
    assert!(o.status.success());
    assert_ne!(first, std::fs::read(dir.path().join("other.json")).unwrap());
}

#[test]
fn gridsearch_ranks_cells() {
    let dir = setup();
    score(
        dir.path(),
        &["synth", "--spec", "spec.json", "--out", "data"],
    );
    std::fs::write(
        dir.path().join("grid.json"),
        r#"{"arch": {"num_layers": 1, "width": 16, "output_dim": 4},
            "train": {"batch_size": 24, "max_epochs": 3, "temperature": 0.1},
            "k": [3, 5], "c": [0.5]}"#,
    )
    .unwrap();
    let o = score(
        dir.path(),
        &[
            "gridsearch",
            "--data",
            "data",
            "--grid",
            "grid.json",
            "--out",
            "g.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let results: Vec<score_core::GridResult> =
        score_core::io::read_json(dir.path().join("g.json")).unwrap();
    assert_eq!(results.len(), 2);
    assert!(results.iter().all(|r| r.val_micro_f1.is_some()));
}

#[test]
fn pairs_and_validate() {
    let dir = setup();
    std::fs::write(
        dir.path().join("tokens.jsonl"),
        r#"{"sentence_id":"s1","hidden_dim":2,"token_embeddings":[[1,2],[3,4],[5,6]],"mentions":[{"head":[0,1],"tail":[2],"relations":[0]}]}
"#,
    )
    .unwrap();
    let o = score(
        dir.path(),
        &["pairs", "--tokens", "tokens.jsonl", "--out", "pairs.jsonl"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let pairs: Vec<PairSample> = read_jsonl(dir.path().join("pairs.jsonl")).unwrap();
    assert_eq!(pairs[0].x, vec![2.0, 3.0, 5.0, 6.0]);
    assert_eq!(pairs[0].id, "s1#0");

    score(
        dir.path(),
        &["synth", "--spec", "spec.json", "--out", "data"],
    );
    assert!(score(dir.path(), &["validate", "--data", "data"])
        .status
        .success());
}
