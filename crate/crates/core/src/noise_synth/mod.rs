//! Noisy-label generators and noise statistics.
//!
//! Three corruption protocols are provided:
//!
//! * [`corrupt_weak_model`]: relabel with the predictions of a deliberately weak
//!   classifier trained on the clean labels. Errors follow that model's decision
//!   boundaries, so the noise is instance-dependent.
//! * [`corrupt_cluster_vote`]: k-means++ on the features, then every member of a
//!   cluster gets the cluster's majority clean label.
//! * [`corrupt_pairflip`]: class-conditional flips `source -> target` with rate `r`.
//!
//! All of them leave features and clean labels untouched.

mod cluster_vote;
mod gaussian;
mod pairflip;
mod weak_model;

use serde::{Deserialize, Serialize};

pub use cluster_vote::{
    corrupt_cluster_vote, kmeans, ClusterVoteOutcome, KMeans, KMEANS_MAX_ITERATIONS,
};
pub use gaussian::{class_means, synth_gaussian_dataset};
pub use pairflip::{corrupt_pairflip, CIFAR10_PAIRS};
pub use weak_model::{corrupt_weak_model, search_weak_model, WeakModelParams, WeakModelSearch};

use crate::data::{histogram, Dataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Corruption protocol and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "kebab-case")]
pub enum NoiseProtocol {
    WeakModel(WeakModelParams),
    ClusterVote {
        k: usize,
    },
    PairFlip {
        pairs: Vec<(usize, usize)>,
        rate: f64,
    },
}

/// The recipe that produced a dataset's noisy labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub protocol: NoiseProtocol,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self, classes: usize) -> Result<()> {
        match &self.protocol {
            NoiseProtocol::WeakModel(p) => p.validate(),
            NoiseProtocol::ClusterVote { k } => {
                if *k < 2 {
                    return Err(Error::InvalidConfig(format!(
                        "cluster count k = {k} must be >= 2"
                    )));
                }
                Ok(())
            }
            NoiseProtocol::PairFlip { pairs, rate } => pairflip::validate(pairs, *rate, classes),
        }
    }

    /// Applies the protocol to `clean`.
    pub fn apply<T: Scalar>(&self, clean: &Dataset<T>) -> Result<Dataset<T>> {
        match &self.protocol {
            NoiseProtocol::WeakModel(p) => corrupt_weak_model(clean, p, self.seed),
            NoiseProtocol::ClusterVote { k } => {
                corrupt_cluster_vote(clean, *k, self.seed).map(|o| o.dataset)
            }
            NoiseProtocol::PairFlip { pairs, rate } => {
                corrupt_pairflip(clean, pairs, *rate, self.seed)
            }
        }
    }
}

/// Label-noise statistics of a dataset with known clean labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub instances: usize,
    pub corrupted: usize,
    pub noise_rate: f64,
    pub label_accuracy: f64,
    /// `confusion[clean][noisy]` counts.
    pub confusion: Vec<Vec<usize>>,
    pub noisy_histogram: Vec<usize>,
    pub clean_histogram: Vec<usize>,
}

pub fn noise_report<T: Scalar>(d: &Dataset<T>) -> Result<NoiseReport> {
    let clean = d.clean_labels().ok_or(Error::MissingCleanLabels)?;
    let c = d.classes();
    let mut confusion = vec![vec![0usize; c]; c];
    for (&y, &n) in clean.iter().zip(d.noisy_labels()) {
        confusion[y][n] += 1;
    }
    let corrupted = clean
        .iter()
        .zip(d.noisy_labels())
        .filter(|(a, b)| a != b)
        .count();
    let rate = if d.is_empty() {
        0.0
    } else {
        corrupted as f64 / d.len() as f64
    };
    Ok(NoiseReport {
        instances: d.len(),
        corrupted,
        noise_rate: rate,
        label_accuracy: 1.0 - rate,
        confusion,
        noisy_histogram: d.noisy_histogram(),
        clean_histogram: histogram(clean, c),
    })
}

pub(crate) fn require_clean<T: Scalar>(d: &Dataset<T>) -> Result<&[usize]> {
    d.clean_labels().ok_or(Error::MissingCleanLabels)
}
