//! Dataset records, pair-vector construction, validation and synthetic data.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelMatrix;

/// Label space and dimensionality of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub num_classes: usize,
    pub embedding_dim: usize,
    pub relation_names: Vec<String>,
    #[serde(default)]
    pub split_sizes: BTreeMap<String, usize>,
}

impl DatasetMeta {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::Validation("num_classes must be positive".into()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::Validation("embedding_dim must be positive".into()));
        }
        if self.relation_names.len() != self.num_classes {
            return Err(Error::Validation(format!(
                "relation_names has {} entries but num_classes is {}",
                self.relation_names.len(),
                self.num_classes
            )));
        }
        let mut seen = HashSet::new();
        for name in &self.relation_names {
            if name.is_empty() {
                return Err(Error::Validation("empty relation name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate relation name {name:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Token embeddings of one sentence plus its annotated mention pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSentenceRecord {
    pub sentence_id: String,
    pub hidden_dim: usize,
    /// `T × h`, one row per token.
    pub token_embeddings: Vec<Vec<f64>>,
    pub mentions: Vec<MentionAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionAnnotation {
    #[serde(rename = "head")]
    pub head_token_indices: Vec<usize>,
    #[serde(rename = "tail")]
    pub tail_token_indices: Vec<usize>,
    #[serde(rename = "relations")]
    pub relation_ids: Vec<usize>,
}

/// One head/tail mention pair: the concatenated mean embeddings and its relation types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub id: String,
    pub x: Vec<f64>,
    pub labels: Vec<usize>,
}

impl PairSample {
    /// Multi-hot label vector over `num_classes`.
    pub fn one_hot(&self, num_classes: usize) -> Vec<u8> {
        let mut y = vec![0; num_classes];
        for &l in &self.labels {
            if l < num_classes {
                y[l] = 1;
            }
        }
        y
    }
}

/// Label matrix for a slice of samples.
pub fn label_matrix(samples: &[PairSample], num_classes: usize) -> Result<LabelMatrix> {
    let sets: Vec<&[usize]> = samples.iter().map(|s| s.labels.as_slice()).collect();
    LabelMatrix::from_label_sets(&sets, num_classes)
}

fn mean_rows(
    record: &TokenSentenceRecord,
    indices: &[usize],
    what: &str,
    j: usize,
) -> Result<Vec<f64>> {
    if indices.is_empty() {
        return Err(Error::Validation(format!(
            "sentence {}: mention {j} has an empty {what} token set",
            record.sentence_id
        )));
    }
    let mut acc = vec![0.0; record.hidden_dim];
    for &t in indices {
        let row = record.token_embeddings.get(t).ok_or_else(|| {
            Error::Validation(format!(
                "sentence {}: mention {j} {what} token index {t} out of range (sentence has {} tokens)",
                record.sentence_id,
                record.token_embeddings.len()
            ))
        })?;
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = indices.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Builds one [`PairSample`] per mention: `x = [mean(head rows) ; mean(tail rows)]`.
///
/// Sample ids are `<sentence_id>#<mention index>`.
pub fn build_pair_vectors(record: &TokenSentenceRecord) -> Result<Vec<PairSample>> {
    if record.token_embeddings.is_empty() {
        return Err(Error::Validation(format!(
            "sentence {}: no tokens",
            record.sentence_id
        )));
    }
    for (t, row) in record.token_embeddings.iter().enumerate() {
        if row.len() != record.hidden_dim {
            return Err(Error::shape(
                record.hidden_dim,
                row.len(),
                format!("sentence {} token {t}", record.sentence_id),
            ));
        }
    }
    record
        .mentions
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let mut x = mean_rows(record, &m.head_token_indices, "head", j)?;
            x.extend(mean_rows(record, &m.tail_token_indices, "tail", j)?);
            Ok(PairSample {
                id: format!("{}#{j}", record.sentence_id),
                x,
                labels: m.relation_ids.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DimMismatch,
    LabelOutOfRange,
    DuplicateId,
    EmptyLabels,
    NonFinite,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::DimMismatch => "dimension mismatch",
            ViolationKind::LabelOutOfRange => "label out of range",
            ViolationKind::DuplicateId => "duplicate id",
            ViolationKind::EmptyLabels => "empty labels",
            ViolationKind::NonFinite => "non-finite value",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub record: usize,
    pub id: String,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "record {} ({}): {}: {}",
            self.record, self.id, self.kind, self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub num_records: usize,
    pub violations: Vec<Violation>,
    /// `n_h`: number of records carrying each class.
    pub class_counts: Vec<usize>,
    /// Fraction of records with more than one label.
    pub multilabel_fraction: f64,
}

pub fn validate_dataset(records: &[PairSample], meta: &DatasetMeta) -> ValidationReport {
    let mut violations = Vec::new();
    let mut class_counts = vec![0; meta.num_classes];
    let mut seen = HashSet::new();
    let mut multi = 0usize;

    for (i, r) in records.iter().enumerate() {
        let mut flag = |kind, detail: String| {
            violations.push(Violation {
                record: i,
                id: r.id.clone(),
                kind,
                detail,
            })
        };
        if !seen.insert(r.id.as_str()) {
            flag(
                ViolationKind::DuplicateId,
                format!("id {:?} seen before", r.id),
            );
        }
        if r.x.len() != meta.embedding_dim {
            flag(
                ViolationKind::DimMismatch,
                format!(
                    "x has length {}, expected {}",
                    r.x.len(),
                    meta.embedding_dim
                ),
            );
        }
        if r.x.iter().any(|v| !v.is_finite()) {
            flag(
                ViolationKind::NonFinite,
                "x contains NaN or infinity".into(),
            );
        }
        if r.labels.is_empty() {
            flag(ViolationKind::EmptyLabels, "no labels".into());
        }
        let mut distinct = HashSet::new();
        for &l in &r.labels {
            if l >= meta.num_classes {
                flag(
                    ViolationKind::LabelOutOfRange,
                    format!("label {l} not in [0, {})", meta.num_classes),
                );
            } else if distinct.insert(l) {
                class_counts[l] += 1;
            }
        }
        if distinct.len() > 1 {
            multi += 1;
        }
    }

    let multilabel_fraction = if records.is_empty() {
        0.0
    } else {
        multi as f64 / records.len() as f64
    };
    ValidationReport {
        ok: violations.is_empty(),
        num_records: records.len(),
        violations,
        class_counts,
        multilabel_fraction,
    }
}

/// Parameters of a clustered synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub samples_per_cluster: usize,
    pub input_dim: usize,
    pub cluster_count: usize,
    pub label_sets_per_cluster: Vec<Vec<usize>>,
    pub noise_scale: f64,
    /// Fraction of samples in multi-label clusters that keep the full label
    /// set; the rest keep one member of it, picked uniformly.
    #[serde(default = "default_multilabel_fraction")]
    pub multilabel_fraction: f64,
    pub seed: u64,
}

fn default_multilabel_fraction() -> f64 {
    1.0
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cluster_count == 0 {
            return Err(Error::Config("cluster_count must be positive".into()));
        }
        if self.cluster_count != self.label_sets_per_cluster.len() {
            return Err(Error::Config(format!(
                "cluster_count is {} but {} label sets were given",
                self.cluster_count,
                self.label_sets_per_cluster.len()
            )));
        }
        if self.num_classes == 0 || self.input_dim == 0 {
            return Err(Error::Config(
                "num_classes and input_dim must be positive".into(),
            ));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!(
                "noise_scale must be finite and non-negative, got {}",
                self.noise_scale
            )));
        }
        if !(0.0..=1.0).contains(&self.multilabel_fraction) {
            return Err(Error::Config(format!(
                "multilabel_fraction must lie in [0, 1], got {}",
                self.multilabel_fraction
            )));
        }
        for (c, set) in self.label_sets_per_cluster.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::Config(format!("cluster {c} has an empty label set")));
            }
            if let Some(l) = set.iter().find(|&&l| l >= self.num_classes) {
                return Err(Error::Config(format!(
                    "cluster {c}: label {l} not in [0, {})",
                    self.num_classes
                )));
            }
        }
        Ok(())
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            num_classes: self.num_classes,
            embedding_dim: self.input_dim,
            relation_names: (0..self.num_classes).map(|c| format!("rel_{c}")).collect(),
            split_sizes: BTreeMap::new(),
        }
    }
}

/// Every fifth sample of a cluster goes to the test split.
const TEST_STRIDE: usize = 5;

/// Generates Gaussian clusters around random unit-sphere centers.
///
/// Samples are emitted interleaved across clusters (sample 0 of every
/// cluster, then sample 1, ...), and within each cluster every fifth sample
/// lands in the test split, giving an 80/20 split.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(Vec<PairSample>, Vec<PairSample>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let centers: Vec<Vec<f64>> = (0..spec.cluster_count)
        .map(|_| loop {
            let v: Vec<f64> = (0..spec.input_dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let n = crate::linalg::norm(&v);
            if n > 1e-12 {
                break v.into_iter().map(|x| x / n).collect();
            }
        })
        .collect();

    let mut train = Vec::new();
    let mut test = Vec::new();
    for s in 0..spec.samples_per_cluster {
        for (c, center) in centers.iter().enumerate() {
            let x: Vec<f64> = center
                .iter()
                .map(|&m| m + spec.noise_scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let set = &spec.label_sets_per_cluster[c];
            let labels = if set.len() > 1 && spec.multilabel_fraction < 1.0 {
                if rng.random::<f64>() < spec.multilabel_fraction {
                    set.clone()
                } else {
                    vec![set[rng.random_range(0..set.len())]]
                }
            } else {
                set.clone()
            };
            let sample = PairSample {
                id: format!("c{c}_s{s}"),
                x,
                labels,
            };
            if s % TEST_STRIDE == TEST_STRIDE - 1 {
                test.push(sample);
            } else {
                train.push(sample);
            }
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(tokens: Vec<Vec<f64>>, head: Vec<usize>, tail: Vec<usize>) -> TokenSentenceRecord {
        TokenSentenceRecord {
            sentence_id: "s1".into(),
            hidden_dim: tokens[0].len(),
            token_embeddings: tokens,
            mentions: vec![MentionAnnotation {
                head_token_indices: head,
                tail_token_indices: tail,
                relation_ids: vec![0],
            }],
        }
    }

    #[test]
    fn pair_vector_mean_and_concat() {
        let r = record(
            vec![vec![1.0, 1.0], vec![3.0, 3.0], vec![5.0, 5.0]],
            vec![0, 1],
            vec![2],
        );
        let out = build_pair_vectors(&r).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, "s1#0");
        assert_eq!(out[0].x, vec![2.0, 2.0, 5.0, 5.0]);
        assert_eq!(out[0].labels, vec![0]);
    }

    #[test]
    fn single_token_mentions_concat_rows() {
        let r = record(vec![vec![0.25, -1.5], vec![7.0, 3.125]], vec![0], vec![1]);
        let out = build_pair_vectors(&r).unwrap();
        assert_eq!(out[0].x, vec![0.25, -1.5, 7.0, 3.125]);
    }

    #[test]
    fn index_out_of_range_names_sentence_and_mention() {
        let r = record(vec![vec![1.0], vec![2.0]], vec![0], vec![2]);
        let msg = build_pair_vectors(&r).unwrap_err().to_string();
        assert!(msg.contains("s1") && msg.contains("mention 0"), "{msg}");
    }

    #[test]
    fn empty_token_set_rejected() {
        let r = record(vec![vec![1.0], vec![2.0]], vec![], vec![1]);
        assert!(matches!(build_pair_vectors(&r), Err(Error::Validation(_))));
    }

    fn meta(r: usize, d: usize) -> DatasetMeta {
        DatasetMeta {
            num_classes: r,
            embedding_dim: d,
            relation_names: (0..r).map(|i| format!("r{i}")).collect(),
            split_sizes: BTreeMap::new(),
        }
    }

    fn sample(id: &str, labels: Vec<usize>) -> PairSample {
        PairSample {
            id: id.into(),
            x: vec![0.0, 1.0],
            labels,
        }
    }

    #[test]
    fn validate_well_formed() {
        let recs = vec![
            sample("a", vec![0]),
            sample("b", vec![0, 1]),
            sample("c", vec![2]),
        ];
        let rep = validate_dataset(&recs, &meta(3, 2));
        assert!(rep.ok);
        assert_eq!(rep.class_counts, vec![2, 1, 1]);
        assert!((rep.multilabel_fraction - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn validate_label_out_of_range() {
        let rep = validate_dataset(&[sample("a", vec![3])], &meta(3, 2));
        assert!(!rep.ok);
        assert_eq!(rep.violations[0].kind.to_string(), "label out of range");
    }

    #[test]
    fn validate_duplicate_id() {
        let rep = validate_dataset(&[sample("a", vec![0]), sample("a", vec![1])], &meta(3, 2));
        assert!(!rep.ok);
        assert_eq!(rep.violations.len(), 1);
        assert_eq!(rep.violations[0].kind.to_string(), "duplicate id");
    }

    #[test]
    fn validate_dim_and_empty() {
        let mut bad = sample("a", vec![]);
        bad.x.push(3.0);
        let rep = validate_dataset(&[bad], &meta(3, 2));
        let kinds: Vec<_> = rep.violations.iter().map(|v| v.kind).collect();
        assert_eq!(
            kinds,
            vec![ViolationKind::DimMismatch, ViolationKind::EmptyLabels]
        );
    }

    #[test]
    fn meta_validation() {
        assert!(meta(2, 4).validate().is_ok());
        let mut m = meta(2, 4);
        m.relation_names[1] = "r0".into();
        assert!(m.validate().is_err());
        let mut m = meta(2, 4);
        m.relation_names.pop();
        assert!(m.validate().is_err());
        assert!(meta(2, 0).validate().is_err());
    }

    fn synth(noise: f64) -> SynthSpec {
        SynthSpec {
            num_classes: 3,
            samples_per_cluster: 10,
            input_dim: 5,
            cluster_count: 2,
            label_sets_per_cluster: vec![vec![0], vec![1, 2]],
            noise_scale: noise,
            multilabel_fraction: 1.0,
            seed: 7,
        }
    }

    #[test]
    fn zero_noise_samples_sit_on_centers() {
        let (train, test) = generate_synthetic(&synth(0.0)).unwrap();
        assert_eq!(train.len(), 16);
        assert_eq!(test.len(), 4);
        for c in 0..2 {
            let members: Vec<_> = train
                .iter()
                .chain(&test)
                .filter(|s| s.id.starts_with(&format!("c{c}_")))
                .collect();
            assert_eq!(members.len(), 10);
            for m in &members {
                assert_eq!(m.x, members[0].x);
                assert_eq!(m.labels, if c == 0 { vec![0] } else { vec![1, 2] });
            }
            let n = crate::linalg::norm(&members[0].x);
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        assert_eq!(
            generate_synthetic(&synth(0.3)).unwrap(),
            generate_synthetic(&synth(0.3)).unwrap()
        );
    }

    #[test]
    fn synthetic_rejects_zero_clusters() {
        let mut s = synth(0.1);
        s.cluster_count = 0;
        s.label_sets_per_cluster.clear();
        assert!(matches!(generate_synthetic(&s), Err(Error::Config(_))));
    }

    #[test]
    fn partial_multilabel_fraction_keeps_subsets() {
        let mut s = synth(0.1);
        s.multilabel_fraction = 0.5;
        s.samples_per_cluster = 200;
        let (train, _) = generate_synthetic(&s).unwrap();
        let single = train
            .iter()
            .filter(|p| p.id.starts_with("c1_") && p.labels.len() == 1)
            .count();
        assert!(single > 40 && single < 120, "{single}");
        assert!(train.iter().all(|p| p.labels.iter().all(|l| *l < 3)));
    }
}
