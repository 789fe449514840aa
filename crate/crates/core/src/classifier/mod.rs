//! A small softmax MLP with hand-written backpropagation.
//!
//! Training maximizes the soft-target log-likelihood `sum_i sum_j q_i^j log h^j(x_i)`.
//! Its gradient with respect to the weights is
//! `sum_i sum_j (q_i^j / h^j(x_i)) grad h^j(x_i)`. Since `grad_z h^j = h^j (e_j - h)`
//! for softmax logits `z`, the `1/h^j` factors cancel and the logit-level gradient is
//! `q_i - h(x_i) * sum_j q_i^j`, which is what gets backpropagated. No division by `h`
//! ever happens.

mod checkpoint;
mod optim;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use optim::{LrSchedule, OptimizerConfig};

use crate::error::{Error, Result};
use crate::noise_model::LabelDistribution;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `ln(1 + e^z)`, a rectifier that is smooth at zero.
    #[default]
    Softplus,
    Relu,
    Tanh,
    /// Periodic units; with a large init scale this gives a random-feature model
    /// with jagged decision boundaries.
    Sin,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Softplus => z.max(T::zero()) + (-z.abs()).exp().ln_1p(),
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
            Activation::Sin => z.sin(),
            Activation::Identity => z,
        }
    }

    /// Derivative evaluated at the pre-activation `z`.
    #[inline]
    fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Softplus => T::one() / (T::one() + (-z).exp()),
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                T::one() - t * t
            }
            Activation::Sin => z.cos(),
            Activation::Identity => T::one(),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "softplus" => Self::Softplus,
            "relu" => Self::Relu,
            "tanh" => Self::Tanh,
            "sin" => Self::Sin,
            "identity" | "linear" => Self::Identity,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown activation `{other}`"
                )))
            }
        })
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Softplus => "softplus",
            Self::Relu => "relu",
            Self::Tanh => "tanh",
            Self::Sin => "sin",
            Self::Identity => "identity",
        })
    }
}

/// Layer widths and nonlinearity: `input -> hidden... -> classes`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub activation: Activation,
}

impl Architecture {
    pub fn new(input: usize, hidden: Vec<usize>, classes: usize, activation: Activation) -> Self {
        Self {
            input,
            hidden,
            classes,
            activation,
        }
    }

    /// Softmax regression, no hidden layers.
    pub fn linear(input: usize, classes: usize) -> Self {
        Self::new(input, Vec::new(), classes, Activation::Identity)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.classes < 2 || self.hidden.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "architecture {:?} needs non-zero widths and at least two classes",
                self
            )));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input);
        w.extend_from_slice(&self.hidden);
        w.push(self.classes);
        w
    }

    pub fn parameter_count(&self) -> usize {
        self.widths().windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }
}

/// Affine map `z = W a + b`, `W` stored row-major as `outputs x inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            biases: vec![T::zero(); outputs],
        }
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.inputs == other.inputs
            && self.outputs == other.outputs
            && self.weights.len() == other.weights.len()
            && self.biases.len() == other.biases.len()
    }

    #[inline]
    fn affine(&self, a: &[T], z: &mut [T]) {
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.biases[o];
            for (w, x) in row.iter().zip(a) {
                acc += *w * *x;
            }
            *zo = acc;
        }
    }

    fn values(&self) -> impl Iterator<Item = &T> {
        self.weights.iter().chain(self.biases.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }
}

/// Gradient with the same layout as the parameters it belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Gradient<T> {
    pub fn zeros_like(arch: &Architecture) -> Self {
        Self {
            layers: arch
                .widths()
                .windows(2)
                .map(|w| Layer::zeros(w[0], w[1]))
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: T) {
        for l in &mut self.layers {
            for v in l.values_mut() {
                *v *= factor;
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            for v in l.values_mut() {
                *v = T::zero();
            }
        }
    }

    /// Weights then biases, layer by layer; the same order as [`Mlp::flatten`].
    pub fn flatten(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.values().copied())
            .collect()
    }
}

/// Scratch space for one forward pass, reused across instances.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    /// Input of each layer; `inputs[0]` is the feature vector.
    inputs: Vec<Vec<T>>,
    /// Pre-activations of each layer; the last entry holds the logits.
    pre: Vec<Vec<T>>,
    probs: Vec<T>,
    delta: Vec<T>,
    delta_prev: Vec<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn new(arch: &Architecture) -> Self {
        let widths = arch.widths();
        let max = widths.iter().copied().max().unwrap_or(0);
        Self {
            inputs: widths[..widths.len() - 1]
                .iter()
                .map(|&w| vec![T::zero(); w])
                .collect(),
            pre: widths[1..].iter().map(|&w| vec![T::zero(); w]).collect(),
            probs: vec![T::zero(); arch.classes],
            delta: Vec::with_capacity(max),
            delta_prev: Vec::with_capacity(max),
        }
    }

    /// Softmax output of the last forward pass.
    #[inline]
    pub fn probs(&self) -> &[T] {
        &self.probs
    }
}

/// Numerically stable softmax with the max logit subtracted. Entries are floored at the
/// smallest positive normal so the output is strictly positive.
pub fn softmax_into<T: Scalar>(logits: &[T], out: &mut [T]) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        total += *o;
    }
    let floor = T::min_positive_value();
    for o in out.iter_mut() {
        *o = (*o / total).max(floor);
    }
}

/// Softmax MLP parameters together with their momentum buffers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    architecture: Architecture,
    layers: Vec<Layer<T>>,
    momentum: Vec<Layer<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// Weights drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero biases.
    pub fn init<R: Rng + ?Sized>(architecture: Architecture, rng: &mut R) -> Result<Self> {
        Self::init_scaled(architecture, T::one(), rng)
    }

    /// As [`Mlp::init`] with the first layer's weight bound multiplied by `scale`.
    /// Larger values make hidden units respond to finer input detail.
    pub fn init_scaled<R: Rng + ?Sized>(
        architecture: Architecture,
        scale: T,
        rng: &mut R,
    ) -> Result<Self> {
        architecture.validate()?;
        let mut layers = Vec::new();
        for (l, w) in architecture.widths().windows(2).enumerate() {
            let mut layer = Layer::zeros(w[0], w[1]);
            let gain = if l == 0 { scale } else { T::one() };
            let bound = gain / T::from_usize(w[0]).unwrap().sqrt();
            for v in &mut layer.weights {
                let u = T::lit(rng.random::<f64>());
                *v = (u + u - T::one()) * bound;
            }
            layers.push(layer);
        }
        let momentum = layers
            .iter()
            .map(|l| Layer::zeros(l.inputs, l.outputs))
            .collect();
        Ok(Self {
            architecture,
            layers,
            momentum,
        })
    }

    /// Builds a model from explicit layers with zero momentum.
    pub fn from_layers(architecture: Architecture, layers: Vec<Layer<T>>) -> Result<Self> {
        architecture.validate()?;
        let expected = Gradient::<T>::zeros_like(&architecture).layers;
        if expected.len() != layers.len()
            || expected.iter().zip(&layers).any(|(e, l)| !e.same_shape(l))
        {
            return Err(Error::InvalidConfig(
                "layer shapes do not match the architecture".into(),
            ));
        }
        Ok(Self {
            momentum: expected,
            architecture,
            layers,
        })
    }

    pub(crate) fn from_parts(
        architecture: Architecture,
        layers: Vec<Layer<T>>,
        momentum: Vec<Layer<T>>,
    ) -> Result<Self> {
        let mut m = Self::from_layers(architecture, layers)?;
        if momentum.len() != m.momentum.len()
            || m.momentum
                .iter()
                .zip(&momentum)
                .any(|(e, l)| !e.same_shape(l))
        {
            return Err(Error::InvalidConfig(
                "momentum buffer shapes do not match the parameters".into(),
            ));
        }
        m.momentum = momentum;
        Ok(m)
    }

    #[inline]
    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn momentum(&self) -> &[Layer<T>] {
        &self.momentum
    }

    /// Zeroes the output layer so every input maps to the uniform distribution.
    pub fn zero_output_layer(&mut self) {
        if let Some(last) = self.layers.last_mut() {
            for v in last.values_mut() {
                *v = T::zero();
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.architecture.parameter_count()
    }

    pub fn flatten(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.values().copied())
            .collect()
    }

    /// Overwrites all parameters from a vector laid out as [`Mlp::flatten`].
    pub fn assign_flat(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch {
                expected: self.parameter_count(),
                found: values.len(),
            });
        }
        let mut it = values.iter();
        for l in &mut self.layers {
            for v in l.values_mut() {
                *v = *it.next().unwrap();
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .chain(&self.momentum)
            .all(|l| l.values().all(|v| v.is_finite()))
    }

    fn check_input(&self, features: &[T]) -> Result<()> {
        if features.len() != self.architecture.input {
            return Err(Error::DimensionMismatch {
                expected: self.architecture.input,
                found: features.len(),
            });
        }
        Ok(())
    }

    /// Runs the network, leaving intermediate values in `cache` for [`Mlp::backward`].
    pub fn forward_cached(&self, features: &[T], cache: &mut ForwardCache<T>) -> Result<()> {
        self.check_input(features)?;
        cache.inputs[0].copy_from_slice(features);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.affine(&cache.inputs[l], &mut cache.pre[l]);
            if l < last {
                let act = self.architecture.activation;
                let (pre, inputs) = (&cache.pre[l], &mut cache.inputs[l + 1]);
                for (a, &z) in inputs.iter_mut().zip(pre) {
                    *a = act.apply(z);
                }
            }
        }
        softmax_into(&cache.pre[last], &mut cache.probs);
        Ok(())
    }

    /// Predicted class distribution `h(x)`.
    pub fn forward(&self, features: &[T]) -> Result<LabelDistribution<T>> {
        let mut cache = ForwardCache::new(&self.architecture);
        self.forward_cached(features, &mut cache)?;
        Ok(LabelDistribution::new_unchecked(cache.probs))
    }

    /// Accumulates into `grad` the gradient of `sum_j q^j log h^j(x)` for the instance
    /// last passed through [`Mlp::forward_cached`].
    pub fn backward(&self, cache: &mut ForwardCache<T>, q: &[T], grad: &mut Gradient<T>) {
        let q_total: T = q.iter().copied().sum();
        cache.delta.clear();
        cache.delta.extend(
            q.iter()
                .zip(&cache.probs)
                .map(|(&qj, &hj)| qj - hj * q_total),
        );

        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let g = &mut grad.layers[l];
            let a = &cache.inputs[l];
            for (o, &d) in cache.delta.iter().enumerate() {
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, &x) in row.iter_mut().zip(a) {
                    *gw += d * x;
                }
            }
            if l == 0 {
                break;
            }
            let act = self.architecture.activation;
            cache.delta_prev.clear();
            cache.delta_prev.resize(layer.inputs, T::zero());
            for (o, &d) in cache.delta.iter().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (dp, &w) in cache.delta_prev.iter_mut().zip(row) {
                    *dp += w * d;
                }
            }
            for (dp, &z) in cache.delta_prev.iter_mut().zip(&cache.pre[l - 1]) {
                *dp *= act.derivative(z);
            }
            std::mem::swap(&mut cache.delta, &mut cache.delta_prev);
        }
    }

    /// Gradient of `sum_i sum_j q_i^j log h^j(x_i)` over the batch, summed in batch order.
    pub fn soft_target_gradient(
        &self,
        batch: &[(&[T], &LabelDistribution<T>)],
    ) -> Result<Gradient<T>> {
        let mut grad = Gradient::zeros_like(&self.architecture);
        let mut cache = ForwardCache::new(&self.architecture);
        for (x, q) in batch {
            if q.classes() != self.architecture.classes {
                return Err(Error::ClassCountMismatch {
                    expected: self.architecture.classes,
                    found: q.classes(),
                });
            }
            self.forward_cached(x, &mut cache)?;
            self.backward(&mut cache, q.probs(), &mut grad);
        }
        Ok(grad)
    }

    /// `sum_i sum_j q_i^j log h^j(x_i)`; terms with `q = 0` are skipped.
    pub fn soft_target_objective(&self, batch: &[(&[T], &LabelDistribution<T>)]) -> Result<T> {
        let mut cache = ForwardCache::new(&self.architecture);
        let mut total = T::zero();
        for (x, q) in batch {
            self.forward_cached(x, &mut cache)?;
            for (&qj, &hj) in q.probs().iter().zip(cache.probs()) {
                if qj != T::zero() {
                    total += qj * hj.ln();
                }
            }
        }
        Ok(total)
    }

    /// One momentum step of gradient *ascent*. Weight decay enters as the penalty
    /// `-(lambda/2) |W|^2` on weights (not biases), so the ascent direction for a
    /// weight is `g - lambda * w`:
    ///
    /// ```text
    /// v <- mu * v + (g - lambda * w)
    /// w <- w + lr(epoch) * v
    /// ```
    pub fn apply_update(
        &mut self,
        grad: &Gradient<T>,
        optimizer: &OptimizerConfig<T>,
        epoch: usize,
    ) -> Result<()> {
        if grad.layers.len() != self.layers.len()
            || grad
                .layers
                .iter()
                .zip(&self.layers)
                .any(|(g, l)| !g.same_shape(l))
        {
            return Err(Error::InvalidConfig(
                "gradient shape does not match parameters".into(),
            ));
        }
        let lr = optimizer.learning_rate_at(epoch);
        let mu = optimizer.momentum;
        let decay = optimizer.weight_decay;
        for ((layer, vel), g) in self
            .layers
            .iter_mut()
            .zip(&mut self.momentum)
            .zip(&grad.layers)
        {
            for ((w, v), &gw) in layer
                .weights
                .iter_mut()
                .zip(&mut vel.weights)
                .zip(&g.weights)
            {
                *v = mu * *v + (gw - decay * *w);
                *w += lr * *v;
            }
            for ((b, v), &gb) in layer.biases.iter_mut().zip(&mut vel.biases).zip(&g.biases) {
                *v = mu * *v + gb;
                *b += lr * *v;
            }
        }
        Ok(())
    }
}
