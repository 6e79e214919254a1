//! Training, inference and grid search on small synthetic datasets.

use std::time::Instant;

use score_core::data::label_matrix;
use score_core::*;

fn four_cluster_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        num_classes: 6,
        samples_per_cluster: 200,
        input_dim: 20,
        cluster_count: 4,
        label_sets_per_cluster: vec![vec![0], vec![1], vec![2, 3], vec![4, 5]],
        noise_scale: 0.15,
        multilabel_fraction: 1.0,
        seed,
    }
}

#[test]
fn separable_clusters_are_recovered() {
    let start = Instant::now();
    let (train_set, test_set) = generate_synthetic(&four_cluster_spec(42)).unwrap();
    let arch = ArchConfig {
        num_layers: 3,
        width: 64,
        output_dim: 8,
        activation: Activation::Swish,
        input_dim: 20,
    };
    let cfg = TrainConfig {
        max_epochs: 15,
        seed: 42,
        ..Default::default()
    };
    let (model, history) = train(&train_set, None, arch, &cfg).unwrap();
    let store = build_datastore(&model, &train_set, 6).unwrap();
    let inf = InferenceConfig {
        k: 15,
        c: 0.5,
        ..Default::default()
    };
    let out = predict_batch(&model, &store, &test_set, &inf).unwrap();
    assert!(out.failures.is_empty());
    let truth = label_matrix(&test_set, 6).unwrap();
    let rep = evaluate(&out.predictions, &truth, &EvalOptions::default()).unwrap();
    assert!(history.final_train_loss < history.initial_train_loss);
    assert!(start.elapsed().as_secs() < 120);
    assert!(rep.micro_f1 >= 0.95 && rep.p_at_r >= 0.95 && rep.csd <= 0.5);
}

fn toy() -> (Vec<PairSample>, Vec<PairSample>) {
    generate_synthetic(&SynthSpec {
        num_classes: 3,
        samples_per_cluster: 30,
        input_dim: 6,
        cluster_count: 3,
        label_sets_per_cluster: vec![vec![0], vec![1], vec![1, 2]],
        noise_scale: 0.0,
        multilabel_fraction: 1.0,
        seed: 5,
    })
    .unwrap()
}

fn cell(lr: f64, tau: f64, k: usize, c: f64) -> GridCell {
    GridCell {
        arch: ArchConfig {
            num_layers: 1,
            width: 16,
            output_dim: 4,
            activation: Activation::Swish,
            input_dim: 6,
        },
        train: TrainConfig {
            temperature: tau,
            learning_rate: lr,
            batch_size: 16,
            max_epochs: 8,
            seed: 3,
            ..Default::default()
        },
        k,
        c,
    }
}

#[test]
fn single_cell_grid() {
    let (tr, va) = toy();
    let res = grid_search(&tr, &va, &[cell(5e-3, 0.1, 5, 0.5)], 3).unwrap();
    assert_eq!(res.len(), 1);
    assert!(!res[0].failed());
    assert!(res[0].val_micro_f1.unwrap() > 0.9);
}

#[test]
fn broken_cell_is_marked_and_ranked_last() {
    let (tr, va) = toy();
    let grid = [
        cell(5e-3, 0.0, 5, 0.5),
        cell(5e-3, 0.1, 5, 0.5),
        cell(5e-3, 0.1, 500, 0.5),
    ];
    let res = grid_search(&tr, &va, &grid, 3).unwrap();
    assert_eq!(res[0].cell_index, 1);
    assert!(res[1].failed() && res[2].failed());
    assert_eq!(res[1].cell_index, 0);
    assert!(res[1].error.as_ref().unwrap().contains("temperature"));
    assert!(grid_search(&tr, &va, &[], 3).is_err());
}

#[test]
fn sane_learning_rate_beats_absurd_one() {
    let (tr, va) = toy();
    // overlapping label sets make a collapsed embedding score poorly
    let res = grid_search(
        &tr,
        &va,
        &[cell(10.0, 0.1, 5, 0.5), cell(5e-3, 0.1, 5, 0.5)],
        3,
    )
    .unwrap();
    assert_eq!(res[0].cell.train.learning_rate, 5e-3);
    if let Some(bad) = res[1].val_micro_f1 {
        assert!(res[0].val_micro_f1.unwrap() >= bad);
    }
}

#[test]
fn ties_prefer_smaller_k_then_c() {
    let (tr, va) = toy();
    let grid = [
        cell(5e-3, 0.1, 7, 0.5),
        cell(5e-3, 0.1, 5, 0.6),
        cell(5e-3, 0.1, 5, 0.5),
    ];
    let res = grid_search(&tr, &va, &grid, 3).unwrap();
    let scores: Vec<f64> = res.iter().map(|r| r.val_micro_f1.unwrap()).collect();
    if scores.iter().all(|&s| s == scores[0]) {
        let order: Vec<usize> = res.iter().map(|r| r.cell_index).collect();
        assert_eq!(order, vec![2, 1, 0]);
    }
}
