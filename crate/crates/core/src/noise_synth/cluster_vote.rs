use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{require_clean, NoiseProtocol, NoiseSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::noise_model::argmax;
use crate::scalar::Scalar;

pub const KMEANS_MAX_ITERATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans<T> {
    /// `k x dim`, row-major.
    pub centroids: Vec<T>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

#[inline]
fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum()
}

fn nearest<T: Scalar>(x: &[T], centroids: &[T], dim: usize) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (c, mu) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(x, mu);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding: first centre uniform, then each next centre drawn with
/// probability proportional to squared distance from the nearest chosen centre.
fn seed_plus_plus<T: Scalar, R: Rng>(data: &[T], dim: usize, k: usize, rng: &mut R) -> Vec<T> {
    let n = data.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centroids.extend_from_slice(row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(row(i), row(first)).as_f64())
        .collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            // guard against rounding landing on a zero-weight tail
            while d2[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            // every point coincides with a centre: fall back to an unchosen index
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        centroids.extend_from_slice(row(next));
        for (i, w) in d2.iter_mut().enumerate() {
            *w = w.min(sq_dist(row(i), row(next)).as_f64());
        }
    }
    centroids
}

/// k-means++ seeding followed by Lloyd iterations, stopping when assignments no longer
/// change or after [`KMEANS_MAX_ITERATIONS`]. An emptied cluster is re-seeded at the
/// point farthest from its assigned centroid.
pub fn kmeans<T: Scalar>(data: &[T], dim: usize, k: usize, seed: u64) -> Result<KMeans<T>> {
    let n = data.len().checked_div(dim).unwrap_or(0);
    if k < 2 || k > n {
        return Err(Error::InvalidConfig(format!(
            "k-means needs 2 <= k <= N (k = {k}, N = {n})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = seed_plus_plus(data, dim, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut iterations = 0;

    while iterations < KMEANS_MAX_ITERATIONS {
        iterations += 1;
        let mut changed = false;
        let mut dist = vec![T::zero(); n];
        for i in 0..n {
            let (c, d) = nearest(row(i), &centroids, dim);
            dist[i] = d;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        for &c in &assignments {
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[assignments[i]] > 1)
                .max_by(|&a, &b| dist[a].partial_cmp(&dist[b]).unwrap().then(b.cmp(&a)))
                .expect("k <= N leaves a cluster with two members");
            counts[assignments[far]] -= 1;
            assignments[far] = c;
            counts[c] = 1;
            dist[far] = T::zero();
            changed = true;
        }
        let mut sums = vec![T::zero(); k * dim];
        for (i, &c) in assignments.iter().enumerate() {
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            let inv = T::one() / T::from_usize(counts[c]).unwrap();
            for (mu, s) in centroids[c * dim..(c + 1) * dim]
                .iter_mut()
                .zip(&sums[c * dim..(c + 1) * dim])
            {
                *mu = *s * inv;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(KMeans {
        centroids,
        assignments,
        iterations,
    })
}

#[derive(Clone, Debug)]
pub struct ClusterVoteOutcome<T> {
    pub dataset: Dataset<T>,
    pub clustering: KMeans<T>,
    /// Majority clean label of each cluster.
    pub cluster_labels: Vec<usize>,
}

/// Clusters the features and relabels every instance with its cluster's majority clean
/// label (ties to the lowest class index).
pub fn corrupt_cluster_vote<T: Scalar>(
    clean: &Dataset<T>,
    k: usize,
    seed: u64,
) -> Result<ClusterVoteOutcome<T>> {
    let truth = require_clean(clean)?;
    let clustering = kmeans(clean.features(), clean.dim(), k, seed)?;
    let mut votes = vec![vec![0usize; clean.classes()]; k];
    for (&c, &y) in clustering.assignments.iter().zip(truth) {
        votes[c][y] += 1;
    }
    let cluster_labels: Vec<usize> = votes.iter().map(|v| argmax(v)).collect();
    let noisy = clustering
        .assignments
        .iter()
        .map(|&c| cluster_labels[c])
        .collect();
    let mut dataset = clean.clone().with_noisy_labels(noisy)?;
    dataset.noise_spec = Some(NoiseSpec {
        protocol: NoiseProtocol::ClusterVote { k },
        seed,
    });
    Ok(ClusterVoteOutcome {
        dataset,
        clustering,
        cluster_labels,
    })
}
