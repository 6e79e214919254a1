//! Fixtures shared by the benchmarks.

use score_core::{
    build_datastore, generate_synthetic, Activation, ArchConfig, Datastore, LabelMatrix,
    PairSample, ProjectionModel, SynthSpec,
};

pub const INPUT_DIM: usize = 64;
pub const NUM_CLASSES: usize = 8;

pub fn samples(per_cluster: usize) -> Vec<PairSample> {
    let spec = SynthSpec {
        num_classes: NUM_CLASSES,
        samples_per_cluster: per_cluster,
        input_dim: INPUT_DIM,
        cluster_count: 6,
        label_sets_per_cluster: vec![vec![0], vec![1], vec![2, 3], vec![4], vec![5, 6], vec![7]],
        noise_scale: 0.2,
        multilabel_fraction: 0.8,
        seed: 1,
    };
    let (mut train, test) = generate_synthetic(&spec).expect("valid spec");
    train.extend(test);
    train
}

pub fn model(width: usize, output_dim: usize) -> ProjectionModel {
    let arch = ArchConfig {
        num_layers: 3,
        width,
        output_dim,
        activation: Activation::Swish,
        input_dim: INPUT_DIM,
    };
    ProjectionModel::init(arch, 0).expect("valid arch")
}

pub fn datastore(model: &ProjectionModel, samples: &[PairSample]) -> Datastore {
    build_datastore(model, samples, NUM_CLASSES).expect("non-empty store")
}

pub fn batch(samples: &[PairSample], n: usize) -> (Vec<Vec<f64>>, LabelMatrix) {
    let xs = samples[..n].iter().map(|s| s.x.clone()).collect();
    let sets: Vec<Vec<usize>> = samples[..n].iter().map(|s| s.labels.clone()).collect();
    (
        xs,
        LabelMatrix::from_label_sets(&sets, NUM_CLASSES).expect("labels in range"),
    )
}
