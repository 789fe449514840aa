//! Mini-batch alternating optimization.
//!
//! Each iteration draws a mini-batch and, for every instance in it,
//!
//! 1. computes the true-label posterior `q_i` from the current model output, `eta_i`
//!    and `psi_i` (predicting step);
//! 2. on update epochs, takes one projected gradient ascent step on `eta_i`;
//! 3. accumulates the soft-target gradient with target `q_i`.
//!
//! The classifier then takes one momentum step on the batch-averaged gradient.
//! Posteriors are recomputed every iteration and never stored.

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    Activation, Architecture, Checkpoint, ForwardCache, Gradient, LrSchedule, Mlp, OptimizerConfig,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{accuracy, auroc, evaluation_accuracy, predict};
use crate::noise_model::{
    exact_gradient_unchecked, joint_unchecked, lower_bound_clamped, normalize_joint, project_eta,
    smoothed_gradient_unchecked, EtaGradientMode, LabelDistribution, LowerBoundTerm, OneHotLabel,
};
use crate::scalar::Scalar;

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainConfig<T> {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Multiplier on the first-layer init bound.
    pub init_scale: T,
    /// Initial confusing probability of every instance.
    pub eta_init: T,
    /// Learning rate of the confusing probabilities (alpha_1).
    pub alpha1: T,
    /// Divisor guard of the smoothed `eta` update.
    pub epsilon: T,
    pub epochs: usize,
    pub batch_size: usize,
    /// Master switch for `eta` updates; when off, `eta` stays at `eta_init`.
    pub eta_updates: bool,
    /// First (1-based) epoch in which `eta` is updated.
    pub eta_update_start_epoch: usize,
    /// `eta` is updated in every batch of epochs `start, start + every, ...`.
    pub eta_update_every_epochs: usize,
    pub eta_gradient_mode: EtaGradientMode,
    /// Duplicate minority noisy-label classes up to the majority count.
    pub oversample: bool,
    pub seed: u64,
    /// Classifier optimizer; `optimizer.learning_rate` is alpha_2.
    pub optimizer: OptimizerConfig<T>,
    /// Epoch cap for the naive run that estimates `psi`.
    pub psi_epoch_cap: Option<usize>,
}

impl<T: Scalar> Default for TrainConfig<T> {
    /// Desk-scale defaults for small dense tasks.
    fn default() -> Self {
        let epochs = 60;
        Self {
            hidden: vec![64, 64],
            activation: Activation::Softplus,
            init_scale: T::one(),
            eta_init: T::lit(0.01),
            alpha1: T::lit(0.5),
            epsilon: T::lit(1e-4),
            epochs,
            batch_size: 32,
            eta_updates: true,
            eta_update_start_epoch: 10,
            eta_update_every_epochs: 5,
            eta_gradient_mode: EtaGradientMode::Smoothed,
            oversample: false,
            seed: 0,
            optimizer: OptimizerConfig::new(T::lit(0.05), T::lit(0.9), T::lit(1e-4))
                .with_schedule(LrSchedule::every(epochs / 4 * 3, T::lit(10.0), epochs)),
            psi_epoch_cap: None,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    /// Small 2-D tasks in the memorizing regime: a tanh 64-64 net with a wide
    /// first-layer init, trained for 1000 epochs without weight decay so that a naive
    /// run fits nearly every noisy label. `eta` is updated every 20 epochs from epoch 10.
    pub fn desk() -> Self {
        let epochs = 1000;
        Self {
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            init_scale: T::lit(3.0),
            alpha1: T::lit(0.05),
            epochs,
            batch_size: 32,
            eta_update_start_epoch: 10,
            eta_update_every_epochs: 20,
            optimizer: OptimizerConfig::new(T::lit(0.1), T::lit(0.9), T::zero())
                .with_schedule(LrSchedule::every(750, T::lit(10.0), epochs)),
            ..Self::default()
        }
    }

    /// CIFAR-scale schedule: 160 epochs, batch 256, alpha_2 = 0.05 divided by 10 every
    /// 40 epochs, momentum 0.9, weight decay 1e-4, `eta` updated every 5 epochs from
    /// epoch 35 with alpha_1 = 0.7.
    pub fn cifar() -> Self {
        Self {
            alpha1: T::lit(0.7),
            epochs: 160,
            batch_size: 256,
            eta_update_start_epoch: 35,
            eta_update_every_epochs: 5,
            optimizer: OptimizerConfig::new(T::lit(0.05), T::lit(0.9), T::lit(1e-4))
                .with_schedule(LrSchedule::every(40, T::lit(10.0), 160)),
            ..Self::default()
        }
    }

    /// Clothing1M-scale schedule: 15 epochs, batch 32, alpha_2 = 5e-3 divided by 10
    /// every 5 epochs, weight decay 1e-3, `eta` updated every epoch from epoch 2 with
    /// alpha_1 = 0.05, minority oversampling on.
    pub fn clothing1m() -> Self {
        Self {
            alpha1: T::lit(0.05),
            epochs: 15,
            batch_size: 32,
            eta_update_start_epoch: 2,
            eta_update_every_epochs: 1,
            oversample: true,
            optimizer: OptimizerConfig::new(T::lit(5e-3), T::lit(0.9), T::lit(1e-3))
                .with_schedule(LrSchedule::every(5, T::lit(10.0), 15)),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.eta_init >= T::zero() && self.eta_init <= T::one()) {
            return bad("eta_init must be in [0, 1]");
        }
        if !(self.alpha1 > T::zero()) {
            return bad("alpha1 must be > 0");
        }
        if !(self.epsilon > T::zero()) {
            return bad("epsilon must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.eta_update_start_epoch == 0 || self.eta_update_every_epochs == 0 {
            return bad("eta update start epoch and cadence must be >= 1");
        }
        if !(self.init_scale > T::zero()) {
            return bad("init_scale must be > 0");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be >= 1");
        }
        self.optimizer.validate()
    }

    pub fn architecture(&self, input: usize, classes: usize) -> Architecture {
        Architecture::new(input, self.hidden.clone(), classes, self.activation)
    }

    /// Whether `eta` is updated during (1-based) `epoch`.
    pub fn is_eta_update_epoch(&self, epoch: usize) -> bool {
        self.eta_updates
            && epoch >= self.eta_update_start_epoch
            && (epoch - self.eta_update_start_epoch).is_multiple_of(self.eta_update_every_epochs)
    }
}

/// End-of-epoch diagnostics; one line of the metrics stream.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Training accuracy measured against the noisy labels.
    pub train_acc_vs_noisy: f64,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub mean_eta_clean: Option<f64>,
    pub mean_eta_corrupted: Option<f64>,
    pub eta_auroc: Option<f64>,
    /// Largest `eta` over pinned (trusted) instances; always 0 by construction.
    pub max_eta_pinned: Option<f64>,
    /// Surrogate objective over the training set after a fresh predicting step.
    pub lower_bound: Option<f64>,
    /// Marginal log-likelihood of the noisy labels over the training set.
    pub log_likelihood: Option<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub eta_updated: bool,
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct TrainState<T> {
    pub model: Mlp<T>,
    eta: Vec<T>,
    psi: Vec<T>,
    pinned: Vec<bool>,
    pub epoch: usize,
    pub rng: ChaCha8Rng,
    pub history: Vec<EpochMetrics>,
}

impl<T: Scalar> TrainState<T> {
    /// One confusing probability per unique training instance (noisy instances first,
    /// then any trusted clean-pool instances).
    pub fn eta(&self) -> &[T] {
        &self.eta
    }

    pub fn psi(&self) -> &[T] {
        &self.psi
    }

    pub fn pinned(&self) -> &[bool] {
        &self.pinned
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        let mut ck = Checkpoint::new(&self.model, self.epoch, Some(self.rng.clone()));
        ck.eta = Some(self.eta.clone());
        ck.psi = Some(self.psi.clone());
        ck
    }
}

/// A dataset with minority noisy-label classes duplicated.
#[derive(Clone, Debug)]
pub struct Oversampled<T> {
    pub dataset: Dataset<T>,
    /// Original index of every row; duplicates share their original's `eta` slot.
    pub origin: Vec<usize>,
}

/// Appends copies of minority-class instances (by noisy label) until every class has
/// the majority count. Copies are drawn by cycling through a shuffled list of each
/// class's members, so no instance is copied twice before all have been copied once.
pub fn oversample_minority<T: Scalar>(d: &Dataset<T>, seed: u64) -> Oversampled<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = d.noisy_histogram();
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut origin: Vec<usize> = (0..d.len()).collect();
    for (class, &count) in counts.iter().enumerate() {
        if count == 0 || count == max {
            continue;
        }
        let mut members: Vec<usize> = (0..d.len())
            .filter(|&i| d.noisy_labels()[i] == class)
            .collect();
        members.shuffle(&mut rng);
        origin.extend(members.iter().cycle().take(max - count));
    }
    Oversampled {
        dataset: d.subset(&origin),
        origin,
    }
}

/// How training targets are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Targets {
    /// One-hot noisy labels (the naive baseline).
    OneHot,
    /// True-label posteriors.
    Posterior,
}

/// One training row: which pool it comes from, its row there, and its `eta` slot.
#[derive(Clone, Copy, Debug)]
struct Row {
    pool: usize,
    index: usize,
    slot: usize,
}

/// Draws clean-mix batches: `batch_size / 2` noisy rows and as many clean rows.
#[derive(Clone, Debug)]
pub struct MixedBatchSampler {
    noisy: usize,
    clean: usize,
    half: usize,
    clean_order: Vec<usize>,
    clean_cursor: usize,
    with_replacement: bool,
}

impl MixedBatchSampler {
    pub fn new(noisy: usize, clean: usize, batch_size: usize) -> Result<Self> {
        if batch_size < 2 {
            return Err(Error::InvalidConfig(
                "clean-mix batches need batch_size >= 2".into(),
            ));
        }
        if clean == 0 || noisy == 0 {
            return Err(Error::InvalidConfig(
                "clean-mix needs non-empty noisy and clean pools".into(),
            ));
        }
        let half = batch_size / 2;
        let with_replacement = clean < half;
        if with_replacement {
            warn!("clean pool ({clean}) is smaller than half a batch ({half}); sampling it with replacement");
        }
        Ok(Self {
            noisy,
            clean,
            half,
            clean_order: Vec::new(),
            clean_cursor: 0,
            with_replacement,
        })
    }

    pub fn samples_with_replacement(&self) -> bool {
        self.with_replacement
    }

    fn next_clean<R: Rng>(&mut self, rng: &mut R) -> usize {
        if self.with_replacement {
            return rng.random_range(0..self.clean);
        }
        if self.clean_cursor == self.clean_order.len() {
            self.clean_order = (0..self.clean).collect();
            self.clean_order.shuffle(rng);
            self.clean_cursor = 0;
        }
        self.clean_cursor += 1;
        self.clean_order[self.clean_cursor - 1]
    }

    /// One epoch of `(noisy indices, clean indices)` pairs of equal length. Every
    /// noisy instance appears exactly once; the clean pool is cycled.
    pub fn epoch<R: Rng>(&mut self, rng: &mut R) -> Vec<(Vec<usize>, Vec<usize>)> {
        let mut order: Vec<usize> = (0..self.noisy).collect();
        order.shuffle(rng);
        order
            .chunks(self.half)
            .map(|chunk| {
                let clean = (0..chunk.len()).map(|_| self.next_clean(rng)).collect();
                (chunk.to_vec(), clean)
            })
            .collect()
    }
}

type Observer<'a, T> = Box<dyn FnMut(&TrainState<T>) + 'a>;

/// Training driver with optional evaluation sets and a per-epoch observer.
pub struct Trainer<'a, T> {
    config: TrainConfig<T>,
    validation: Option<&'a Dataset<T>>,
    test: Option<&'a Dataset<T>>,
    observer: Option<Observer<'a, T>>,
    diagnostics: bool,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(config: TrainConfig<T>) -> Self {
        Self {
            config,
            validation: None,
            test: None,
            observer: None,
            diagnostics: true,
        }
    }

    pub fn validation(mut self, d: &'a Dataset<T>) -> Self {
        self.validation = Some(d);
        self
    }

    pub fn test(mut self, d: &'a Dataset<T>) -> Self {
        self.test = Some(d);
        self
    }

    /// Called with the state at the end of every epoch.
    pub fn observer(mut self, f: impl FnMut(&TrainState<T>) + 'a) -> Self {
        self.observer = Some(Box::new(f));
        self
    }

    /// Skip the full-pass training diagnostics (train accuracy, lower bound, eta
    /// statistics). Evaluation-set accuracies are still recorded.
    pub fn without_diagnostics(mut self) -> Self {
        self.diagnostics = false;
        self
    }

    pub fn config(&self) -> &TrainConfig<T> {
        &self.config
    }

    /// Alternating optimization on `dataset` with fixed `psi`.
    pub fn run(self, dataset: &Dataset<T>, psi: &[T]) -> Result<TrainState<T>> {
        if psi.len() != dataset.len() {
            return Err(Error::DimensionMismatch {
                expected: dataset.len(),
                found: psi.len(),
            });
        }
        if let Some(p) = psi.iter().find(|p| !(**p >= T::zero() && **p <= T::one())) {
            return Err(Error::out_of_range("psi", p.as_f64(), 0.0, 1.0));
        }
        self.run_single(dataset, psi.to_vec(), Targets::Posterior)
    }

    /// Plain training on one-hot noisy labels.
    pub fn run_naive(self, dataset: &Dataset<T>) -> Result<TrainState<T>> {
        let psi = vec![T::one(); dataset.len()];
        self.run_single(dataset, psi, Targets::OneHot)
    }

    fn run_single(
        self,
        dataset: &Dataset<T>,
        psi: Vec<T>,
        targets: Targets,
    ) -> Result<TrainState<T>> {
        self.config.validate()?;
        if dataset.is_empty() {
            return Err(Error::InvalidDataset("empty training set".into()));
        }
        let (pool, rows) = if self.config.oversample {
            let over = oversample_minority(dataset, self.config.seed);
            let rows = over
                .origin
                .iter()
                .enumerate()
                .map(|(index, &slot)| Row {
                    pool: 0,
                    index,
                    slot,
                })
                .collect::<Vec<_>>();
            (over.dataset, rows)
        } else {
            let rows = (0..dataset.len())
                .map(|i| Row {
                    pool: 0,
                    index: i,
                    slot: i,
                })
                .collect::<Vec<_>>();
            (dataset.clone(), rows)
        };
        let pinned = vec![false; dataset.len()];
        let run = Run::new(self, vec![&pool], dataset, None, psi, pinned, targets)?;
        run.execute(|run, rng| {
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.shuffle(rng);
            let bs = run.trainer.config.batch_size;
            order
                .chunks(bs)
                .map(|c| c.iter().map(|&r| rows[r]).collect())
                .collect()
        })
    }

    /// Alternating optimization where every batch holds equal numbers of noisy and
    /// trusted clean instances. Clean instances have `eta` pinned at 0 and are never
    /// updated, so their posterior is their (trusted) label.
    pub fn run_clean_mix(
        self,
        noisy: &Dataset<T>,
        clean: &Dataset<T>,
        psi: &[T],
    ) -> Result<TrainState<T>> {
        self.config.validate()?;
        if psi.len() != noisy.len() {
            return Err(Error::DimensionMismatch {
                expected: noisy.len(),
                found: psi.len(),
            });
        }
        if clean.classes() != noisy.classes() || clean.dim() != noisy.dim() {
            return Err(Error::InvalidDataset(
                "clean pool differs from the noisy set in classes or dimension".into(),
            ));
        }
        let trusted = match (clean.trusted(), clean.clean_labels()) {
            (Some(t), _) => t.iter().all(|&t| t),
            (None, Some(c)) => c == clean.noisy_labels(),
            (None, None) => false,
        };
        if !trusted {
            return Err(Error::InvalidDataset(
                "clean pool must carry trusted labels (trusted mask or clean == noisy)".into(),
            ));
        }
        let n = noisy.len();
        let mut psi_all = psi.to_vec();
        psi_all.extend(std::iter::repeat_n(T::one(), clean.len()));
        let mut pinned = vec![false; n];
        pinned.extend(std::iter::repeat_n(true, clean.len()));
        let mut sampler = MixedBatchSampler::new(n, clean.len(), self.config.batch_size)?;
        let run = Run::new(
            self,
            vec![noisy, clean],
            noisy,
            Some(clean),
            psi_all,
            pinned,
            Targets::Posterior,
        )?;
        run.execute(move |_, rng| {
            sampler
                .epoch(rng)
                .into_iter()
                .map(|(a, b)| {
                    a.into_iter()
                        .map(|i| Row {
                            pool: 0,
                            index: i,
                            slot: i,
                        })
                        .chain(b.into_iter().map(|i| Row {
                            pool: 1,
                            index: i,
                            slot: n + i,
                        }))
                        .collect()
                })
                .collect()
        })
    }
}

/// State shared by the training loop.
struct Run<'a, 'p, T> {
    trainer: Trainer<'a, T>,
    pools: Vec<&'p Dataset<T>>,
    /// The original noisy training set (for diagnostics).
    noisy: &'p Dataset<T>,
    clean_pool: Option<&'p Dataset<T>>,
    targets: Targets,
    state: TrainState<T>,
}

impl<'a, 'p, T: Scalar> Run<'a, 'p, T> {
    fn new(
        trainer: Trainer<'a, T>,
        pools: Vec<&'p Dataset<T>>,
        noisy: &'p Dataset<T>,
        clean_pool: Option<&'p Dataset<T>>,
        psi: Vec<T>,
        pinned: Vec<bool>,
        targets: Targets,
    ) -> Result<Self> {
        let cfg = &trainer.config;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let arch = cfg.architecture(noisy.dim(), noisy.classes());
        let model = Mlp::init_scaled(arch, cfg.init_scale, &mut rng)?;
        let eta = pinned
            .iter()
            .map(|&p| if p { T::zero() } else { cfg.eta_init })
            .collect();
        Ok(Self {
            state: TrainState {
                model,
                eta,
                psi,
                pinned,
                epoch: 0,
                rng,
                history: Vec::new(),
            },
            trainer,
            pools,
            noisy,
            clean_pool,
            targets,
        })
    }

    fn execute(
        mut self,
        mut batches: impl FnMut(&Self, &mut ChaCha8Rng) -> Vec<Vec<Row>>,
    ) -> Result<TrainState<T>> {
        let arch = self.state.model.architecture().clone();
        let classes = arch.classes;
        let mut cache = ForwardCache::new(&arch);
        let mut grad = Gradient::zeros_like(&arch);
        let mut q = vec![T::zero(); classes];
        let one_hots: Vec<Vec<T>> = (0..classes)
            .map(|c| OneHotLabel::new(c, classes).unwrap().to_vec())
            .collect();

        for epoch in 1..=self.trainer.config.epochs {
            let cfg = &self.trainer.config;
            let update_eta = self.targets == Targets::Posterior && cfg.is_eta_update_epoch(epoch);
            let epoch_start = self.state.model.clone();
            let mut rng = self.state.rng.clone();
            let plan = batches(&self, &mut rng);
            self.state.rng = rng;
            let cfg = &self.trainer.config;

            for (step, batch) in plan.iter().enumerate() {
                grad.fill_zero();
                for row in batch {
                    let data = self.pools[row.pool];
                    let label = data.noisy_labels()[row.index];
                    self.state
                        .model
                        .forward_cached(data.row(row.index), &mut cache)?;
                    let target: &[T] = match self.targets {
                        Targets::OneHot => &one_hots[label],
                        Targets::Posterior => {
                            let noisy = OneHotLabel::new(label, classes)?;
                            let eta = self.state.eta[row.slot];
                            let psi = self.state.psi[row.slot];
                            posterior_into(
                                cache.probs(),
                                noisy,
                                eta,
                                psi,
                                &mut q,
                                &one_hots[label],
                            );
                            if update_eta && !self.state.pinned[row.slot] {
                                let g = match cfg.eta_gradient_mode {
                                    EtaGradientMode::Smoothed => smoothed_gradient_unchecked(
                                        &q,
                                        noisy,
                                        eta,
                                        psi,
                                        cfg.epsilon,
                                    ),
                                    EtaGradientMode::Exact => {
                                        exact_gradient_unchecked(&q, noisy, eta, psi)?
                                    }
                                };
                                self.state.eta[row.slot] = project_eta(eta + cfg.alpha1 * g);
                            }
                            &q
                        }
                    };
                    self.state.model.backward(&mut cache, target, &mut grad);
                }
                grad.scale(T::one() / T::from_usize(batch.len()).unwrap());
                self.state
                    .model
                    .apply_update(&grad, &cfg.optimizer, epoch)?;
                if !self.state.model.is_finite() {
                    let mut snap = Checkpoint::new(&epoch_start, epoch - 1, None);
                    snap.eta = Some(self.state.eta.clone());
                    return Err(Error::NonFinite {
                        epoch,
                        step,
                        snapshot: Box::new(snap.to_json()?),
                    });
                }
            }
            self.state.epoch = epoch;
            let metrics = self.epoch_metrics(epoch, update_eta)?;
            self.state.history.push(metrics);
            if let Some(obs) = self.trainer.observer.as_mut() {
                obs(&self.state);
            }
        }
        Ok(self.state)
    }

    fn epoch_metrics(&self, epoch: usize, eta_updated: bool) -> Result<EpochMetrics> {
        let cfg = &self.trainer.config;
        let model = &self.state.model;
        let mut m = EpochMetrics {
            epoch,
            alpha1: cfg.alpha1.as_f64(),
            alpha2: cfg.optimizer.learning_rate_at(epoch).as_f64(),
            eta_updated,
            ..Default::default()
        };
        if let Some(v) = self.trainer.validation {
            m.val_acc = Some(evaluation_accuracy(model, v)?);
        }
        if let Some(t) = self.trainer.test {
            m.test_acc = Some(evaluation_accuracy(model, t)?);
        }
        if !self.trainer.diagnostics {
            return Ok(m);
        }
        let noisy = self.noisy;
        m.train_acc_vs_noisy = accuracy(&predict(model, noisy)?, noisy.noisy_labels());
        if self.targets == Targets::OneHot {
            return Ok(m);
        }
        let (bound, loglik) = self.objectives()?;
        m.lower_bound = Some(bound.as_f64());
        m.log_likelihood = Some(loglik.as_f64());
        let n = noisy.len();
        let eta = &self.state.eta[..n];
        if let Some(corrupted) = noisy.corrupted_mask() {
            m.mean_eta_clean = mean_where(eta, &corrupted, false);
            m.mean_eta_corrupted = mean_where(eta, &corrupted, true);
            m.eta_auroc = auroc(eta, &corrupted);
        }
        if self.clean_pool.is_some() {
            m.max_eta_pinned = self
                .state
                .eta
                .iter()
                .zip(&self.state.pinned)
                .filter(|(_, &p)| p)
                .map(|(e, _)| e.as_f64())
                .reduce(f64::max);
        }
        Ok(m)
    }

    /// Clamped surrogate objective and marginal log-likelihood over every unique
    /// training instance, with posteriors from the current parameters.
    fn objectives(&self) -> Result<(T, T)> {
        let model = &self.state.model;
        let classes = self.noisy.classes();
        let mut cache = ForwardCache::new(model.architecture());
        let mut q = vec![T::zero(); classes];
        let floor = T::lit(crate::noise_model::LOG_FLOOR);
        let (mut bound, mut loglik) = (T::zero(), T::zero());
        let mut pools = vec![(self.noisy, 0usize)];
        if let Some(c) = self.clean_pool {
            pools.push((c, self.noisy.len()));
        }
        for (data, offset) in pools {
            for i in 0..data.len() {
                model.forward_cached(data.row(i), &mut cache)?;
                let label = data.noisy_labels()[i];
                let noisy = OneHotLabel::new(label, classes)?;
                let (eta, psi) = (self.state.eta[offset + i], self.state.psi[offset + i]);
                let one_hot = noisy.to_vec();
                posterior_into(cache.probs(), noisy, eta, psi, &mut q, &one_hot);
                let h = LabelDistribution::new_unchecked(cache.probs().to_vec());
                let qd = LabelDistribution::new_unchecked(q.clone());
                bound += lower_bound_clamped([LowerBoundTerm {
                    q: &qd,
                    h: &h,
                    noisy,
                    eta,
                    psi,
                }])?;
                let k: T = joint_unchecked(cache.probs(), noisy, eta, psi)
                    .into_iter()
                    .sum();
                loglik += k.max(floor).ln();
            }
        }
        Ok((bound, loglik))
    }
}

/// Writes the posterior into `out`. A degenerate normalizer (the model puts no mass
/// where the noise model allows any) falls back to the noisy label, the `eta -> 0`
/// limit of the posterior.
fn posterior_into<T: Scalar>(
    h: &[T],
    noisy: OneHotLabel,
    eta: T,
    psi: T,
    out: &mut [T],
    one_hot: &[T],
) {
    match normalize_joint(joint_unchecked(h, noisy, eta, psi)) {
        Ok(q) => out.copy_from_slice(q.probs()),
        Err(_) => out.copy_from_slice(one_hot),
    }
}

fn mean_where<T: Scalar>(values: &[T], mask: &[bool], want: bool) -> Option<f64> {
    let picked: Vec<f64> = values
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m == want)
        .map(|(v, _)| v.as_f64())
        .collect();
    (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
}

/// Alternating optimization without evaluation sets.
pub fn train<T: Scalar>(
    dataset: &Dataset<T>,
    psi: &[T],
    config: &TrainConfig<T>,
) -> Result<TrainState<T>> {
    Trainer::new(config.clone()).run(dataset, psi)
}

/// One-hot training on the noisy labels.
pub fn train_naive<T: Scalar>(
    dataset: &Dataset<T>,
    config: &TrainConfig<T>,
) -> Result<TrainState<T>> {
    Trainer::new(config.clone()).run_naive(dataset)
}

/// Alternating optimization with a trusted clean pool mixed into every batch.
pub fn train_clean_mix<T: Scalar>(
    noisy: &Dataset<T>,
    clean: &Dataset<T>,
    psi: &[T],
    config: &TrainConfig<T>,
) -> Result<TrainState<T>> {
    Trainer::new(config.clone()).run_clean_mix(noisy, clean, psi)
}
