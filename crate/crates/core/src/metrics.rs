//! Accuracy and ranking metrics.

use crate::classifier::{ForwardCache, Mlp};
use crate::data::Dataset;
use crate::error::Result;
use crate::noise_model::argmax;
use crate::scalar::Scalar;

/// Area under the ROC curve of `scores` as a detector of `positives`, computed from
/// mid-ranks (Mann-Whitney U), so tied scores count one half.
///
/// `None` when either class is empty.
pub fn auroc<T: Scalar>(scores: &[T], positives: &[bool]) -> Option<f64> {
    assert_eq!(
        scores.len(),
        positives.len(),
        "scores and labels differ in length"
    );
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("NaN score"));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += mid * order[i..=j].iter().filter(|&&k| positives[k]).count() as f64;
        i = j + 1;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Argmax predictions for every instance.
pub fn predict<T: Scalar>(model: &Mlp<T>, d: &Dataset<T>) -> Result<Vec<usize>> {
    let mut cache = ForwardCache::new(model.architecture());
    (0..d.len())
        .map(|i| {
            model.forward_cached(d.row(i), &mut cache)?;
            Ok(argmax(cache.probs()))
        })
        .collect()
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64
}

/// `(correct, total)` per class of `labels`.
pub fn per_class_accuracy(
    predicted: &[usize],
    labels: &[usize],
    classes: usize,
) -> Vec<(usize, usize)> {
    let mut out = vec![(0, 0); classes];
    for (&p, &y) in predicted.iter().zip(labels) {
        out[y].1 += 1;
        if p == y {
            out[y].0 += 1;
        }
    }
    out
}

/// Accuracy against clean labels when the dataset has them, otherwise noisy labels.
pub fn evaluation_accuracy<T: Scalar>(model: &Mlp<T>, d: &Dataset<T>) -> Result<f64> {
    let pred = predict(model, d)?;
    Ok(accuracy(
        &pred,
        d.clean_labels().unwrap_or(d.noisy_labels()),
    ))
}
