//! Binary sample × class label matrices.

use crate::error::{Error, Result};

/// `n_samples × n_classes` matrix with entries in {0, 1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    n_samples: usize,
    n_classes: usize,
    data: Vec<u8>,
}

impl LabelMatrix {
    pub fn zeros(n_samples: usize, n_classes: usize) -> Self {
        Self {
            n_samples,
            n_classes,
            data: vec![0; n_samples * n_classes],
        }
    }

    /// Builds a matrix from per-sample label index sets.
    pub fn from_label_sets<S: AsRef<[usize]>>(sets: &[S], n_classes: usize) -> Result<Self> {
        let mut m = Self::zeros(sets.len(), n_classes);
        for (i, set) in sets.iter().enumerate() {
            for &c in set.as_ref() {
                if c >= n_classes {
                    return Err(Error::Validation(format!(
                        "sample {i}: label {c} out of range for {n_classes} classes"
                    )));
                }
                m.data[i * n_classes + c] = 1;
            }
        }
        Ok(m)
    }

    /// Builds a matrix from 0/1 rows. Any other entry value is rejected.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R], n_classes: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * n_classes);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n_classes {
                return Err(Error::shape(n_classes, r.len(), format!("label row {i}")));
            }
            if let Some(v) = r.iter().find(|&&v| v > 1) {
                return Err(Error::Validation(format!(
                    "label row {i}: entry {v} is not binary"
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            n_samples: rows.len(),
            n_classes,
            data,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn get(&self, i: usize, c: usize) -> bool {
        self.data[i * self.n_classes + c] == 1
    }

    pub fn set(&mut self, i: usize, c: usize, v: bool) {
        self.data[i * self.n_classes + c] = u8::from(v);
    }

    /// Number of positive entries in each class column.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for i in 0..self.n_samples {
            for (c, &v) in self.row(i).iter().enumerate() {
                counts[c] += usize::from(v);
            }
        }
        counts
    }

    /// Shared-label count between two rows (`y_i · y_j`).
    pub fn overlap(&self, i: usize, j: usize) -> usize {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .filter(|(&a, &b)| a == 1 && b == 1)
            .count()
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.n_classes);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self {
            n_samples: rows.len(),
            n_classes: self.n_classes,
            data,
        }
    }

    pub fn ensure_same_shape(&self, other: &LabelMatrix) -> Result<()> {
        if self.n_classes != other.n_classes {
            return Err(Error::shape(
                self.n_classes,
                other.n_classes,
                "label matrix classes",
            ));
        }
        if self.n_samples != other.n_samples {
            return Err(Error::shape(
                self.n_samples,
                other.n_samples,
                "label matrix samples",
            ));
        }
        Ok(())
    }
}
