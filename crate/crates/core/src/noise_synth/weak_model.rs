use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{require_clean, NoiseProtocol, NoiseSpec};
use crate::classifier::{Activation, Architecture, ForwardCache, Gradient, Mlp, OptimizerConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::noise_model::argmax;
use crate::scalar::Scalar;

/// Capacity and training budget of the relabeling model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakModelParams {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Multiplier on the first-layer init bound. Large values with `sin` units give
    /// high-frequency random features.
    pub init_scale: f64,
    pub epochs: usize,
    /// Stop after this many optimizer steps even if `epochs` is not exhausted.
    #[serde(default)]
    pub max_steps: Option<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for WeakModelParams {
    fn default() -> Self {
        Self {
            hidden: Vec::new(),
            activation: Activation::Identity,
            init_scale: 1.0,
            epochs: 1,
            max_steps: None,
            learning_rate: 0.05,
            momentum: 0.0,
            batch_size: 32,
        }
    }
}

impl WeakModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.learning_rate > 0.0) || !(self.init_scale > 0.0) {
            return Err(Error::InvalidConfig(
                "weak model needs batch_size >= 1, learning_rate > 0, init_scale > 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(
                "weak model momentum must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    fn architecture(&self, input: usize, classes: usize) -> Architecture {
        Architecture::new(input, self.hidden.clone(), classes, self.activation)
    }
}

fn predict_all<T: Scalar>(model: &Mlp<T>, d: &Dataset<T>) -> Result<Vec<usize>> {
    let mut cache = ForwardCache::new(model.architecture());
    (0..d.len())
        .map(|i| {
            model.forward_cached(d.row(i), &mut cache)?;
            Ok(argmax(cache.probs()))
        })
        .collect()
}

fn mismatch_rate(a: &[usize], b: &[usize]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / a.len().max(1) as f64
}

/// Trains on one-hot clean labels, calling `on_step(step, &model)` after each optimizer
/// step (1-based). Stops early when the callback returns `false`.
fn train_weak<T: Scalar>(
    clean: &Dataset<T>,
    truth: &[usize],
    params: &WeakModelParams,
    seed: u64,
    mut on_step: impl FnMut(usize, &Mlp<T>) -> Result<bool>,
) -> Result<Mlp<T>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = params.architecture(clean.dim(), clean.classes());
    let mut model = Mlp::init_scaled(arch, T::lit(params.init_scale), &mut rng)?;
    let opt = OptimizerConfig::new(
        T::lit(params.learning_rate),
        T::lit(params.momentum),
        T::zero(),
    );
    let mut grad = Gradient::zeros_like(model.architecture());
    let mut cache = ForwardCache::new(model.architecture());
    let mut order: Vec<usize> = (0..clean.len()).collect();
    let targets: Vec<Vec<T>> = (0..clean.classes())
        .map(|c| {
            let mut v = vec![T::zero(); clean.classes()];
            v[c] = T::one();
            v
        })
        .collect();
    let limit = params.max_steps.unwrap_or(usize::MAX);
    let mut step = 0;
    for epoch in 1..=params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            if step == limit {
                return Ok(model);
            }
            grad.fill_zero();
            for &i in batch {
                model.forward_cached(clean.row(i), &mut cache)?;
                model.backward(&mut cache, &targets[truth[i]], &mut grad);
            }
            grad.scale(T::one() / T::from_usize(batch.len()).unwrap());
            model.apply_update(&grad, &opt, epoch)?;
            step += 1;
            if !on_step(step, &model)? {
                return Ok(model);
            }
        }
    }
    Ok(model)
}

fn relabeled<T: Scalar>(
    clean: &Dataset<T>,
    noisy: Vec<usize>,
    params: &WeakModelParams,
    seed: u64,
) -> Result<Dataset<T>> {
    let first = noisy.first().copied().unwrap_or(0);
    if noisy.len() > 1 && noisy.iter().all(|&l| l == first) {
        return Err(Error::DegenerateRelabeling(first));
    }
    let mut out = clean.clone().with_noisy_labels(noisy)?;
    out.noise_spec = Some(NoiseSpec {
        protocol: NoiseProtocol::WeakModel(params.clone()),
        seed,
    });
    Ok(out)
}

/// Relabels every instance with the argmax prediction of a weak classifier trained on
/// the clean labels for `params.epochs` epochs (or `params.max_steps` steps).
pub fn corrupt_weak_model<T: Scalar>(
    clean: &Dataset<T>,
    params: &WeakModelParams,
    seed: u64,
) -> Result<Dataset<T>> {
    let truth = require_clean(clean)?;
    let model = train_weak(clean, truth, params, seed, |_, _| Ok(true))?;
    let noisy = predict_all(&model, clean)?;
    relabeled(clean, noisy, params, seed)
}

#[derive(Clone, Debug)]
pub struct WeakModelSearch<T> {
    /// Optimizer steps that produced `dataset`.
    pub steps: usize,
    pub achieved_rate: f64,
    /// Noise rate after each step, `rates[s - 1]` for step `s`.
    pub rates: Vec<f64>,
    /// `params` with `max_steps` set to `steps`; replays to `dataset`.
    pub params: WeakModelParams,
    pub dataset: Dataset<T>,
}

/// Finds the training budget whose relabeling is closest to `target_rate`.
///
/// One run of `params.epochs` epochs is made and the noise rate is measured after
/// every optimizer step. A run truncated at step `s` is bit-identical to that prefix,
/// so this is an exhaustive search over every budget up to `params.epochs` epochs.
/// The closest rate wins (earliest on ties); the scan stops early once a rate lands
/// within `tolerance / 10` of the target. Steps whose relabeling collapses onto a
/// single class are skipped.
pub fn search_weak_model<T: Scalar>(
    clean: &Dataset<T>,
    params: &WeakModelParams,
    target_rate: f64,
    tolerance: f64,
    seed: u64,
) -> Result<WeakModelSearch<T>> {
    let truth = require_clean(clean)?;
    if !(0.0..=1.0).contains(&target_rate) {
        return Err(Error::out_of_range(
            "target noise rate",
            target_rate,
            0.0,
            1.0,
        ));
    }
    let search = WeakModelParams {
        max_steps: None,
        ..params.clone()
    };
    let mut rates = Vec::new();
    let mut best: Option<(usize, f64, Vec<usize>)> = None;
    train_weak(clean, truth, &search, seed, |step, model| {
        let labels = predict_all(model, clean)?;
        let rate = mismatch_rate(&labels, truth);
        rates.push(rate);
        let degenerate = labels.iter().all(|&l| l == labels[0]);
        let gap = (rate - target_rate).abs();
        if degenerate {
            return Ok(true);
        }
        if best
            .as_ref()
            .is_none_or(|b| gap < (b.1 - target_rate).abs())
        {
            best = Some((step, rate, labels));
        }
        Ok(gap > tolerance / 10.0)
    })?;
    let (steps, achieved_rate, labels) = best.ok_or_else(|| {
        Error::InvalidConfig("weak model relabeling was degenerate at every step".into())
    })?;
    if (achieved_rate - target_rate).abs() > tolerance {
        log::warn!(
            "weak model search reached noise rate {achieved_rate:.3}, outside {target_rate} +/- {tolerance}"
        );
    }
    let chosen = WeakModelParams {
        max_steps: Some(steps),
        ..search
    };
    Ok(WeakModelSearch {
        steps,
        achieved_rate,
        rates,
        dataset: relabeled(clean, labels, &chosen, seed)?,
        params: chosen,
    })
}
