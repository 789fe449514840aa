//! Learning from instance-dependent noisy labels with per-instance confusing
//! probabilities.
//!
//! Every training instance carries a confusing probability `eta_i`: with probability
//! `1 - eta_i` its observed label equals the true label, otherwise it is drawn from a
//! noisy-label distribution whose mass on the observed label is `psi_i`. Training
//! alternates between computing the posterior of the true label, updating `eta_i` by
//! projected gradient ascent and fitting the classifier to the posteriors.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the `*64` / `*32`
//! aliases below name the common instantiations.

// `!(x > 0)` style checks are deliberate: they reject NaN along with the range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod data;
pub mod error;
pub mod metrics;
pub mod noise_model;
pub mod noise_synth;
pub mod psi;
pub mod scalar;
pub mod trainer;

pub use classifier::{
    Activation, Architecture, Checkpoint, Gradient, LrSchedule, Mlp, OptimizerConfig,
};
pub use data::{Dataset, Split};
pub use error::{Error, Result};
pub use noise_model::{
    log_likelihood, EtaGradientMode, LabelDistribution, OneHotLabel, PerInstanceNoiseState,
};
pub use noise_synth::{NoiseProtocol, NoiseReport, NoiseSpec};
pub use psi::{estimate_psi, PsiEstimate};
pub use scalar::Scalar;
pub use trainer::{
    train, train_clean_mix, train_naive, EpochMetrics, TrainConfig, TrainState, Trainer,
};

pub type Mlp64 = Mlp<f64>;
pub type Mlp32 = Mlp<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type LabelDistribution64 = LabelDistribution<f64>;
pub type LabelDistribution32 = LabelDistribution<f32>;
pub type TrainConfig64 = TrainConfig<f64>;
pub type TrainConfig32 = TrainConfig<f32>;
pub type TrainState64 = TrainState<f64>;
pub type TrainState32 = TrainState<f32>;
pub type Checkpoint64 = Checkpoint<f64>;
pub type Checkpoint32 = Checkpoint<f32>;
