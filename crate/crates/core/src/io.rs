//! On-disk formats: `manifest.json`, `<split>.jsonl`, `tokens.jsonl`,
//! prediction JSONL and JSON artifacts.
//!
//! All writers are deterministic: identical values produce identical bytes.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetMeta, PairSample};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// JSON formatter that writes every float with 17 significant digits.
#[derive(Debug, Default, Clone, Copy)]
pub struct PreciseFloatFormatter;

impl serde_json::ser::Formatter for PreciseFloatFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        write!(writer, "{value:.8e}")
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn json_err(path: &Path, e: serde_json::Error) -> Error {
    if e.is_io() {
        Error::io(path, e.into())
    } else {
        Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| json_err(path, e))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| json_err(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Compact JSON with 17-significant-digit floats.
pub fn write_json_precise<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut ser = serde_json::Serializer::with_formatter(&mut w, PreciseFloatFormatter);
    value.serialize(&mut ser).map_err(|e| json_err(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| json_err(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestFile {
    format_version: u32,
    num_classes: usize,
    embedding_dim: usize,
    relation_names: Vec<String>,
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    split_sizes: std::collections::BTreeMap<String, usize>,
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetMeta> {
    let path = path.as_ref();
    let m: ManifestFile = read_json(path)?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Validation(format!(
            "{}: unsupported format_version {}",
            path.display(),
            m.format_version
        )));
    }
    let meta = DatasetMeta {
        num_classes: m.num_classes,
        embedding_dim: m.embedding_dim,
        relation_names: m.relation_names,
        split_sizes: m.split_sizes,
    };
    meta.validate()?;
    Ok(meta)
}

pub fn write_manifest(path: impl AsRef<Path>, meta: &DatasetMeta) -> Result<()> {
    write_json(
        path,
        &ManifestFile {
            format_version: FORMAT_VERSION,
            num_classes: meta.num_classes,
            embedding_dim: meta.embedding_dim,
            relation_names: meta.relation_names.clone(),
            split_sizes: meta.split_sizes.clone(),
        },
    )
}

/// A dataset directory: `manifest.json` plus `train.jsonl`, and optionally
/// `val.jsonl` and `test.jsonl`.
#[derive(Debug, Clone)]
pub struct DatasetDir {
    pub root: PathBuf,
    pub meta: DatasetMeta,
}

impl DatasetDir {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let meta = read_manifest(root.join(MANIFEST_FILE))?;
        Ok(Self { root, meta })
    }

    pub fn split_path(&self, split: &str) -> PathBuf {
        self.root.join(format!("{split}.jsonl"))
    }

    pub fn has_split(&self, split: &str) -> bool {
        self.split_path(split).is_file()
    }

    /// Reads a split and rejects it unless it validates against the manifest.
    pub fn load_split(&self, split: &str) -> Result<Vec<PairSample>> {
        let path = self.split_path(split);
        let records: Vec<PairSample> = read_jsonl(&path)?;
        let report = crate::data::validate_dataset(&records, &self.meta);
        if let Some(v) = report.violations.first() {
            return Err(Error::Validation(format!(
                "{}: {} violation(s), first: {v}",
                path.display(),
                report.violations.len()
            )));
        }
        Ok(records)
    }

    pub fn load_optional_split(&self, split: &str) -> Result<Option<Vec<PairSample>>> {
        if self.has_split(split) {
            self.load_split(split).map(Some)
        } else {
            Ok(None)
        }
    }
}

/// Writes `manifest.json` plus one JSONL file per split; split sizes are
/// recorded in the manifest.
pub fn write_dataset(
    root: impl AsRef<Path>,
    meta: &DatasetMeta,
    splits: &[(&str, &[PairSample])],
) -> Result<()> {
    let root = root.as_ref();
    let mut meta = meta.clone();
    meta.split_sizes = splits
        .iter()
        .map(|(n, s)| (n.to_string(), s.len()))
        .collect();
    for (name, samples) in splits {
        write_jsonl(root.join(format!("{name}.jsonl")), samples)?;
    }
    write_manifest(root.join(MANIFEST_FILE), &meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta() -> DatasetMeta {
        DatasetMeta {
            num_classes: 2,
            embedding_dim: 3,
            relation_names: vec!["a".into(), "b".into()],
            split_sizes: Default::default(),
        }
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let train = vec![PairSample {
            id: "x".into(),
            x: vec![0.1, -2.5e-7, 3.0],
            labels: vec![0, 1],
        }];
        write_dataset(dir.path(), &meta(), &[("train", &train)]).unwrap();
        let ds = DatasetDir::open(dir.path()).unwrap();
        assert_eq!(ds.meta.split_sizes["train"], 1);
        assert_eq!(ds.load_split("train").unwrap(), train);
        assert!(ds.load_optional_split("test").unwrap().is_none());
    }

    #[test]
    fn invalid_split_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let bad = vec![PairSample {
            id: "x".into(),
            x: vec![0.1],
            labels: vec![0],
        }];
        write_dataset(dir.path(), &meta(), &[("train", &bad)]).unwrap();
        let err = DatasetDir::open(dir.path())
            .unwrap()
            .load_split("train")
            .unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"), "{err}");
    }

    #[test]
    fn missing_file_is_io_error_with_path() {
        let err = read_manifest("/nonexistent/manifest.json").unwrap_err();
        assert!(err.is_io());
        assert!(err.to_string().contains("/nonexistent/manifest.json"));
    }

    #[test]
    fn manifest_version_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        std::fs::write(
            &p,
            r#"{"format_version":2,"num_classes":1,"embedding_dim":2,"relation_names":["a"]}"#,
        )
        .unwrap();
        assert!(matches!(read_manifest(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn parse_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        std::fs::write(&p, "{\"id\":\"a\",\"x\":[1.0],\"labels\":[0]}\n{oops}\n").unwrap();
        match read_jsonl::<PairSample>(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn precise_floats_round_trip(v in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 1..20)) {
            let mut buf = Vec::new();
            let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFloatFormatter);
            v.serialize(&mut ser).unwrap();
            let back: Vec<f64> = serde_json::from_slice(&buf).unwrap();
            prop_assert_eq!(back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), v.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        }

        #[test]
        fn jsonl_pair_round_trip(x in proptest::collection::vec(-1e6f64..1e6, 1..16)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("s.jsonl");
            let s = vec![PairSample { id: "a".into(), x, labels: vec![1] }];
            write_jsonl(&p, &s).unwrap();
            prop_assert_eq!(read_jsonl::<PairSample>(&p).unwrap(), s);
        }
    }
}
