//! Labeled feature matrices and their on-disk format.
//!
//! A dataset is stored as `name.csv` plus a `name.json` sidecar. The CSV header is
//! `f0,...,f{d-1},noisy_label[,clean_label][,trusted]`; the sidecar carries the class
//! count, split tag and the noise recipe that produced the labels.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise_model::OneHotLabel;
use crate::noise_synth::NoiseSpec;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Row-major `N x d` features with noisy labels and optional hidden clean labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    features: Vec<T>,
    dim: usize,
    noisy_labels: Vec<usize>,
    clean_labels: Option<Vec<usize>>,
    trusted: Option<Vec<bool>>,
    classes: usize,
    pub split: Split,
    pub noise_spec: Option<NoiseSpec>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        features: Vec<T>,
        dim: usize,
        noisy_labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDataset("feature dimension is zero".into()));
        }
        if features.len() != dim * noisy_labels.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * noisy_labels.len(),
                found: features.len(),
            });
        }
        check_labels(&noisy_labels, classes)?;
        Ok(Self {
            features,
            dim,
            noisy_labels,
            clean_labels: None,
            trusted: None,
            classes,
            split: Split::Train,
            noise_spec: None,
        })
    }

    /// Attaches hidden clean labels.
    pub fn with_clean_labels(mut self, clean: Vec<usize>) -> Result<Self> {
        if clean.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: clean.len(),
            });
        }
        check_labels(&clean, self.classes)?;
        self.clean_labels = Some(clean);
        self.check_trusted()?;
        Ok(self)
    }

    /// Marks instances whose noisy label is known to be correct.
    pub fn with_trusted(mut self, trusted: Vec<bool>) -> Result<Self> {
        if trusted.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: trusted.len(),
            });
        }
        self.trusted = Some(trusted);
        self.check_trusted()?;
        Ok(self)
    }

    /// Replaces the noisy labels, keeping features and clean labels untouched.
    pub fn with_noisy_labels(mut self, noisy: Vec<usize>) -> Result<Self> {
        if noisy.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: noisy.len(),
            });
        }
        check_labels(&noisy, self.classes)?;
        self.noisy_labels = noisy;
        self.check_trusted()?;
        Ok(self)
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    fn check_trusted(&self) -> Result<()> {
        if let (Some(trusted), Some(clean)) = (&self.trusted, &self.clean_labels) {
            for (i, ((&t, &c), &n)) in trusted
                .iter()
                .zip(clean)
                .zip(&self.noisy_labels)
                .enumerate()
            {
                if t && c != n {
                    return Err(Error::InvalidDataset(format!(
                        "instance {i} is trusted but its noisy label {n} differs from clean label {c}"
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.noisy_labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.noisy_labels.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn features(&self) -> &[T] {
        &self.features
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn noisy_labels(&self) -> &[usize] {
        &self.noisy_labels
    }

    pub fn clean_labels(&self) -> Option<&[usize]> {
        self.clean_labels.as_deref()
    }

    pub fn trusted(&self) -> Option<&[bool]> {
        self.trusted.as_deref()
    }

    #[inline]
    pub fn noisy_label(&self, i: usize) -> OneHotLabel {
        OneHotLabel::new(self.noisy_labels[i], self.classes).expect("validated label")
    }

    /// Whether each instance's noisy label differs from its clean label.
    pub fn corrupted_mask(&self) -> Option<Vec<bool>> {
        self.clean_labels.as_ref().map(|c| {
            c.iter()
                .zip(&self.noisy_labels)
                .map(|(a, b)| a != b)
                .collect()
        })
    }

    /// Instances at `indices`, in that order. Indices may repeat.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        let pick = |v: &Vec<usize>| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            features,
            dim: self.dim,
            noisy_labels: pick(&self.noisy_labels),
            clean_labels: self.clean_labels.as_ref().map(pick),
            trusted: self
                .trusted
                .as_ref()
                .map(|t| indices.iter().map(|&i| t[i]).collect()),
            classes: self.classes,
            split: self.split,
            noise_spec: self.noise_spec.clone(),
        }
    }

    /// Counts of each noisy label.
    pub fn noisy_histogram(&self) -> Vec<usize> {
        histogram(&self.noisy_labels, self.classes)
    }

    fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            classes: self.classes,
            dim: self.dim,
            len: self.len(),
            split: self.split,
            noise_spec: self.noise_spec.clone(),
        }
    }

    /// Writes `path` (CSV) and its JSON sidecar (see [`sidecar_path`]).
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("f{j}")).collect();
        header.push("noisy_label".into());
        if self.clean_labels.is_some() {
            header.push("clean_label".into());
        }
        if self.trusted.is_some() {
            header.push("trusted".into());
        }
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            record.clear();
            record.extend(self.row(i).iter().map(|v| v.to_string()));
            record.push(self.noisy_labels[i].to_string());
            if let Some(c) = &self.clean_labels {
                record.push(c[i].to_string());
            }
            if let Some(t) = &self.trusted {
                record.push(if t[i] { "1" } else { "0" }.to_string());
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        let meta = serde_json::to_string_pretty(&self.meta())?;
        fs::write(sidecar_path(path), meta + "\n")?;
        Ok(())
    }

    /// Reads a dataset written by [`Dataset::write`].
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let col = |name: &str| header.iter().position(|h| h == name);
        let noisy_col = col("noisy_label")
            .ok_or_else(|| Error::InvalidDataset("missing `noisy_label` column".into()))?;
        let feature_cols: Vec<usize> = (0..meta.dim)
            .map(|j| {
                col(&format!("f{j}"))
                    .ok_or_else(|| Error::InvalidDataset(format!("missing `f{j}` column")))
            })
            .collect::<Result<_>>()?;
        let clean_col = col("clean_label");
        let trusted_col = col("trusted");

        let mut features = Vec::new();
        let mut noisy = Vec::new();
        let mut clean = Vec::new();
        let mut trusted = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |c: usize| rec.get(c).unwrap_or("").trim();
            for &c in &feature_cols {
                features.push(field(c).parse::<T>().map_err(|_| {
                    Error::InvalidDataset(format!("row {line}: bad feature `{}`", field(c)))
                })?);
            }
            noisy.push(parse_label(field(noisy_col), line)?);
            if let Some(c) = clean_col {
                clean.push(parse_label(field(c), line)?);
            }
            if let Some(c) = trusted_col {
                trusted.push(match field(c) {
                    "1" => true,
                    "0" => false,
                    other => {
                        return Err(Error::InvalidDataset(format!(
                            "row {line}: trusted must be 0 or 1, got `{other}`"
                        )))
                    }
                });
            }
        }
        if noisy.len() != meta.len {
            return Err(Error::InvalidDataset(format!(
                "sidecar says {} rows, CSV has {}",
                meta.len,
                noisy.len()
            )));
        }
        let mut d = Dataset::new(features, meta.dim, noisy, meta.classes)?;
        if clean_col.is_some() {
            d = d.with_clean_labels(clean)?;
        }
        if trusted_col.is_some() {
            d = d.with_trusted(trusted)?;
        }
        d.split = meta.split;
        d.noise_spec = meta.noise_spec;
        Ok(d)
    }
}

fn parse_label(s: &str, line: usize) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::InvalidDataset(format!("row {line}: bad label `{s}`")))
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    if classes < 2 {
        return Err(Error::InvalidDataset("need at least two classes".into()));
    }
    match labels.iter().find(|&&l| l >= classes) {
        Some(&index) => Err(Error::ClassOutOfRange { index, classes }),
        None => Ok(()),
    }
}

pub(crate) fn histogram(labels: &[usize], classes: usize) -> Vec<usize> {
    let mut h = vec![0; classes];
    for &l in labels {
        h[l] += 1;
    }
    h
}

/// `data/train.csv` -> `data/train.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub classes: usize,
    pub dim: usize,
    pub len: usize,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_spec: Option<NoiseSpec>,
}
