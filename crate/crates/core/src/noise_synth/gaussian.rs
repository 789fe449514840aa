use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Class means with minimum pairwise distance `separation`.
///
/// With `classes <= dim` the means sit on scaled coordinate axes (all pairs exactly
/// `separation` apart). Otherwise they are spaced evenly on a circle in the first two
/// coordinates with adjacent means `separation` apart, or on a line when `dim == 1`.
pub fn class_means(classes: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|k| {
            let mut m = vec![0.0; dim];
            if classes <= dim {
                m[k] = separation / std::f64::consts::SQRT_2;
            } else if dim == 1 {
                m[0] = k as f64 * separation;
            } else {
                let step = std::f64::consts::TAU / classes as f64;
                let radius = separation / (2.0 * (step / 2.0).sin());
                m[0] = radius * (k as f64 * step).cos();
                m[1] = radius * (k as f64 * step).sin();
            }
            m
        })
        .collect()
}

/// Isotropic unit-variance Gaussian blobs, `per_class` instances per class, in
/// shuffled order. Noisy labels start equal to the clean labels.
pub fn synth_gaussian_dataset<T: Scalar>(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    if classes < 2 || per_class < 1 || dim < 1 {
        return Err(Error::InvalidConfig(format!(
            "gaussian task needs classes >= 2, per_class >= 1, dim >= 1 (got {classes}, {per_class}, {dim})"
        )));
    }
    let means = class_means(classes, dim, separation);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..classes)
        .flat_map(|k| std::iter::repeat_n(k, per_class))
        .collect();
    labels.shuffle(&mut rng);
    let mut features = Vec::with_capacity(labels.len() * dim);
    for &y in &labels {
        for &mu in &means[y] {
            let z: f64 = StandardNormal.sample(&mut rng);
            features.push(T::lit(mu + z));
        }
    }
    Dataset::new(features, dim, labels.clone(), classes)?.with_clean_labels(labels)
}
