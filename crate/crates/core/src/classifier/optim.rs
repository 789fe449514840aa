use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Step schedule: once the (1-based) epoch exceeds a milestone, the learning rate is
/// divided by that milestone's divisor. Divisors compound.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LrSchedule<T> {
    pub milestones: Vec<(usize, T)>,
}

impl<T: Scalar> LrSchedule<T> {
    pub fn new(milestones: Vec<(usize, T)>) -> Result<Self> {
        let s = Self { milestones };
        s.validate()?;
        Ok(s)
    }

    /// Divide by `divisor` every `every` epochs up to `epochs`.
    pub fn every(every: usize, divisor: T, epochs: usize) -> Self {
        let milestones = if every == 0 {
            Vec::new()
        } else {
            (1..)
                .map(|k| k * every)
                .take_while(|&m| m < epochs)
                .map(|m| (m, divisor))
                .collect()
        };
        Self { milestones }
    }

    pub fn validate(&self) -> Result<()> {
        if self.milestones.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidConfig(
                "schedule epochs must be strictly increasing".into(),
            ));
        }
        if self.milestones.iter().any(|&(_, d)| !(d > T::zero())) {
            return Err(Error::InvalidConfig(
                "schedule divisors must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn divisor_at(&self, epoch: usize) -> T {
        self.milestones
            .iter()
            .filter(|&&(m, _)| epoch > m)
            .fold(T::one(), |acc, &(_, d)| acc * d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig<T> {
    /// Base classifier learning rate (alpha_2).
    pub learning_rate: T,
    pub momentum: T,
    pub weight_decay: T,
    pub schedule: LrSchedule<T>,
}

impl<T: Scalar> OptimizerConfig<T> {
    pub fn new(learning_rate: T, momentum: T, weight_decay: T) -> Self {
        Self {
            learning_rate,
            momentum,
            weight_decay,
            schedule: LrSchedule::default(),
        }
    }

    pub fn with_schedule(mut self, schedule: LrSchedule<T>) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero()) {
            return Err(Error::InvalidConfig("learning rate must be > 0".into()));
        }
        if !(self.momentum >= T::zero() && self.momentum < T::one()) {
            return Err(Error::InvalidConfig("momentum must be in [0, 1)".into()));
        }
        if !(self.weight_decay >= T::zero()) {
            return Err(Error::InvalidConfig("weight decay must be >= 0".into()));
        }
        self.schedule.validate()
    }

    pub fn learning_rate_at(&self, epoch: usize) -> T {
        self.learning_rate / self.schedule.divisor_at(epoch)
    }
}
