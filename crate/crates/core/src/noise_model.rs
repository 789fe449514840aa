//! Closed-form math of the confusing-instance noise model.
//!
//! An instance is *confusing* with probability `eta`. An unconfusing instance always
//! carries its true label; a confusing one receives the observed noisy label with
//! probability `psi` regardless of its true class. This gives
//!
//! ```text
//! P(noisy | true = j, x) = (1 - eta) * [j == noisy] + eta * psi
//! ```
//!
//! Everything here is a pure function over value types.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A probability vector over `c` classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelDistribution<T> {
    probs: Vec<T>,
}

impl<T: Scalar> LabelDistribution<T> {
    /// Validates that every entry is in `[0, 1]` and the entries sum to one.
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("no classes".into()));
        }
        for (j, &p) in probs.iter().enumerate() {
            if !(p >= T::zero() && p <= T::one()) {
                return Err(Error::InvalidDistribution(format!(
                    "entry {j} = {p} not in [0, 1]"
                )));
            }
        }
        let total: T = probs.iter().copied().sum();
        if (total - T::one()).abs() > T::normalization_tolerance() {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}"
            )));
        }
        Ok(Self { probs })
    }

    pub(crate) fn new_unchecked(probs: Vec<T>) -> Self {
        debug_assert!(!probs.is_empty());
        Self { probs }
    }

    pub fn uniform(classes: usize) -> Self {
        assert!(classes > 0, "uniform distribution over zero classes");
        let p = T::one() / T::from_usize(classes).unwrap();
        Self {
            probs: vec![p; classes],
        }
    }

    pub fn one_hot(label: OneHotLabel) -> Self {
        Self {
            probs: label.to_vec(),
        }
    }

    #[inline]
    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    #[inline]
    pub fn classes(&self) -> usize {
        self.probs.len()
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn into_vec(self) -> Vec<T> {
        self.probs
    }
}

pub(crate) fn argmax<T: PartialOrd + Copy>(xs: &[T]) -> usize {
    let mut best = 0;
    for (j, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = j;
        }
    }
    best
}

/// A hard label: a class index in `[0, classes)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct OneHotLabel {
    index: usize,
    classes: usize,
}

impl OneHotLabel {
    pub fn new(index: usize, classes: usize) -> Result<Self> {
        if index >= classes {
            return Err(Error::ClassOutOfRange { index, classes });
        }
        Ok(Self { index, classes })
    }

    #[inline]
    pub fn index(self) -> usize {
        self.index
    }

    #[inline]
    pub fn classes(self) -> usize {
        self.classes
    }

    /// Materializes the `{0,1}^c` vector.
    pub fn to_vec<T: Scalar>(self) -> Vec<T> {
        let mut v = vec![T::zero(); self.classes];
        v[self.index] = T::one();
        v
    }
}

/// Which ascent direction drives the confusing-probability update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaGradientMode {
    /// The closed-form update rule with the `eta + epsilon` divisor. Also parsed from
    /// `paper`.
    #[default]
    #[serde(alias = "paper")]
    Smoothed,
    /// The analytic derivative of the per-instance objective.
    Exact,
}

impl std::str::FromStr for EtaGradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoothed" | "paper" => Ok(Self::Smoothed),
            "exact" => Ok(Self::Exact),
            other => Err(Error::InvalidConfig(format!(
                "eta gradient mode must be `smoothed` or `exact`, got `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for EtaGradientMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Smoothed => "smoothed",
            Self::Exact => "exact",
        })
    }
}

/// Confusing probability and noisy-label probability of one instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerInstanceNoiseState<T> {
    eta: T,
    psi: T,
}

impl<T: Scalar> PerInstanceNoiseState<T> {
    pub fn new(eta: T, psi: T) -> Result<Self> {
        check_unit("eta", eta)?;
        check_unit("psi", psi)?;
        Ok(Self { eta, psi })
    }

    #[inline]
    pub fn eta(&self) -> T {
        self.eta
    }

    #[inline]
    pub fn psi(&self) -> T {
        self.psi
    }

    /// Stores `eta` after projecting it onto `[0, 1]`.
    pub fn set_eta(&mut self, eta: T) {
        self.eta = project_eta(eta);
    }

    pub fn posterior(
        &self,
        h: &LabelDistribution<T>,
        noisy: OneHotLabel,
    ) -> Result<LabelDistribution<T>> {
        true_label_posterior(h, noisy, self.eta, self.psi)
    }

    /// One projected gradient ascent step on the confusing probability.
    pub fn ascend(
        &mut self,
        mode: EtaGradientMode,
        q: &LabelDistribution<T>,
        noisy: OneHotLabel,
        learning_rate: T,
        epsilon: T,
    ) -> Result<()> {
        self.eta = eta_step(mode, q, noisy, self.eta, self.psi, learning_rate, epsilon)?;
        Ok(())
    }
}

pub(crate) fn check_unit<T: Scalar>(name: &'static str, v: T) -> Result<()> {
    if v >= T::zero() && v <= T::one() {
        Ok(())
    } else {
        Err(Error::out_of_range(name, v.as_f64(), 0.0, 1.0))
    }
}

fn check_classes(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ClassCountMismatch { expected, found })
    }
}

/// `P(noisy | true, x) = (1 - eta) * [match] + eta * psi`.
pub fn noisy_label_conditional<T: Scalar>(eta: T, psi: T, labels_match: bool) -> Result<T> {
    check_unit("eta", eta)?;
    check_unit("psi", psi)?;
    let agree = if labels_match { T::one() } else { T::zero() };
    Ok((T::one() - eta) * agree + eta * psi)
}

/// Smoothed label `(1 - eta) * noisy + eta * psi * 1`, entry `j`.
#[inline]
fn smoothed<T: Scalar>(j: usize, noisy: OneHotLabel, eta: T, psi: T) -> T {
    let agree = if j == noisy.index {
        T::one()
    } else {
        T::zero()
    };
    (T::one() - eta) * agree + eta * psi
}

/// Joint probability of the noisy label and each candidate true class:
/// `[(1 - eta) * noisy^j + eta * psi] * h^j`.
pub fn joint_probability<T: Scalar>(
    h: &LabelDistribution<T>,
    noisy: OneHotLabel,
    eta: T,
    psi: T,
) -> Result<Vec<T>> {
    check_unit("eta", eta)?;
    check_unit("psi", psi)?;
    check_classes(h.classes(), noisy.classes)?;
    Ok(joint_unchecked(h.probs(), noisy, eta, psi))
}

#[inline]
pub(crate) fn joint_unchecked<T: Scalar>(h: &[T], noisy: OneHotLabel, eta: T, psi: T) -> Vec<T> {
    h.iter()
        .enumerate()
        .map(|(j, &hj)| smoothed(j, noisy, eta, psi) * hj)
        .collect()
}

/// Posterior over the true label given the noisy label (the predicting step):
/// `q = h * [(1 - eta) * noisy + eta * psi * 1] / K`.
///
/// Fails with [`Error::DegenerateNormalizer`] when `K` underflows, e.g. `eta = 0` and the
/// model puts no mass on the noisy class.
pub fn true_label_posterior<T: Scalar>(
    h: &LabelDistribution<T>,
    noisy: OneHotLabel,
    eta: T,
    psi: T,
) -> Result<LabelDistribution<T>> {
    let joint = joint_probability(h, noisy, eta, psi)?;
    normalize_joint(joint)
}

pub(crate) fn normalize_joint<T: Scalar>(mut joint: Vec<T>) -> Result<LabelDistribution<T>> {
    let k: T = joint.iter().copied().sum();
    if !(k > T::min_positive_value()) {
        return Err(Error::DegenerateNormalizer {
            normalizer: k.as_f64(),
        });
    }
    for p in joint.iter_mut() {
        *p /= k;
    }
    Ok(LabelDistribution::new_unchecked(joint))
}

fn objective_impl<T: Scalar>(
    q: &LabelDistribution<T>,
    noisy: OneHotLabel,
    eta: T,
    psi: T,
    floor: Option<T>,
) -> Result<T> {
    check_unit("eta", eta)?;
    check_unit("psi", psi)?;
    check_classes(q.classes(), noisy.classes)?;
    let mut total = T::zero();
    for (j, &qj) in q.probs().iter().enumerate() {
        if qj == T::zero() {
            continue;
        }
        let arg = smoothed(j, noisy, eta, psi);
        let arg = match floor {
            Some(f) => arg.max(f),
            None if arg > T::zero() => arg,
            None => {
                return Err(Error::LogDomain {
                    class: j,
                    mass: qj.as_f64(),
                    argument: arg.as_f64(),
                })
            }
        };
        total += qj * arg.ln();
    }
    Ok(total)
}

/// One instance's term of the confusing-probability objective,
/// `sum_j q^j log[(1 - eta) * noisy^j + eta * psi]`.
pub fn eta_objective<T: Scalar>(
    q: &LabelDistribution<T>,
    noisy: OneHotLabel,
    eta: T,
    psi: T,
) -> Result<T> {
    objective_impl(q, noisy, eta, psi, None)
}

/// Diagnostic variant of [`eta_objective`]: log arguments are floored at `1e-12`.
pub fn eta_objective_clamped<T: Scalar>(
    q: &LabelDistribution<T>,
    noisy: OneHotLabel,
    eta: T,
    psi: T,
) -> Result<T> {
    objective_impl(q, noisy, eta, psi, Some(T::lit(LOG_FLOOR)))
}

pub const LOG_FLOOR: f64 = 1e-12;

/// Mass of `q` off the noisy class, summed directly rather than as `1 - q^{j*}`.
#[inline]
fn off_mass<T: Scalar>(q: &[T], noisy: OneHotLabel) -> T {
    q.iter()
        .enumerate()
        .filter(|&(j, _)| j != noisy.index)
        .map(|(_, &p)| p)
        .sum()
}

/// The smoothed ascent direction for `eta`:
/// `[1 + (psi*eta - eta - 1) * noisy]^T q / (eta + epsilon)`.
///
/// This is not the derivative of [`eta_objective`]; it drops the `1 - eta + eta*psi`
/// denominator of the noisy-class term. See [`eta_gradient_exact`].
pub fn eta_gradient_smoothed<T: Scalar>(
    q: &LabelDistribution<T>,
    noisy: OneHotLabel,
    eta: T,
    psi: T,
    epsilon: T,
) -> Result<T> {
    check_unit("eta", eta)?;
    check_unit("psi", psi)?;
    if !(epsilon > T::zero()) {
        return Err(Error::out_of_range(
            "epsilon",
            epsilon.as_f64(),
            0.0,
            f64::INFINITY,
        ));
    }
    check_classes(q.classes(), noisy.classes)?;
    Ok(smoothed_gradient_unchecked(
        q.probs(),
        noisy,
        eta,
        psi,
        epsilon,
    ))
}

#[inline]
pub(crate) fn smoothed_gradient_unchecked<T: Scalar>(
    q: &[T],
    noisy: OneHotLabel,
    eta: T,
    psi: T,
    epsilon: T,
) -> T {
    let on = q[noisy.index];
    let numerator = off_mass(q, noisy) + on * eta * (psi - T::one());
    numerator / (eta + epsilon)
}

/// Analytic `d/d eta` of [`eta_objective`]:
/// `(1 - q^{j*}) / eta + q^{j*} (psi - 1) / (1 - eta + eta*psi)`.
///
/// At `eta = 0` with posterior mass off the noisy class the derivative is `+inf` and a
/// [`Error::LogDomain`] is returned.
pub fn eta_gradient_exact<T: Scalar>(
    q: &LabelDistribution<T>,
    noisy: OneHotLabel,
    eta: T,
    psi: T,
) -> Result<T> {
    check_unit("eta", eta)?;
    check_unit("psi", psi)?;
    check_classes(q.classes(), noisy.classes)?;
    exact_gradient_unchecked(q.probs(), noisy, eta, psi)
}

pub(crate) fn exact_gradient_unchecked<T: Scalar>(
    q: &[T],
    noisy: OneHotLabel,
    eta: T,
    psi: T,
) -> Result<T> {
    let off = off_mass(q, noisy);
    let on = q[noisy.index];
    let off_term = if off == T::zero() {
        T::zero()
    } else if eta > T::zero() {
        off / eta
    } else {
        let class = (0..q.len())
            .find(|&j| j != noisy.index && q[j] > T::zero())
            .unwrap_or(0);
        return Err(Error::LogDomain {
            class,
            mass: q[class].as_f64(),
            argument: 0.0,
        });
    };
    let denom = T::one() - eta + eta * psi;
    let on_term = if on == T::zero() {
        T::zero()
    } else if denom > T::zero() {
        on * (psi - T::one()) / denom
    } else {
        return Err(Error::LogDomain {
            class: noisy.index,
            mass: on.as_f64(),
            argument: denom.as_f64(),
        });
    };
    Ok(off_term + on_term)
}

/// Euclidean projection onto `[0, 1]`.
#[inline]
pub fn project_eta<T: Scalar>(eta: T) -> T {
    eta.max(T::zero()).min(T::one())
}

/// One projected gradient ascent iteration: `project(eta + learning_rate * grad)`.
pub fn eta_step<T: Scalar>(
    mode: EtaGradientMode,
    q: &LabelDistribution<T>,
    noisy: OneHotLabel,
    eta: T,
    psi: T,
    learning_rate: T,
    epsilon: T,
) -> Result<T> {
    let grad = match mode {
        EtaGradientMode::Smoothed => eta_gradient_smoothed(q, noisy, eta, psi, epsilon)?,
        EtaGradientMode::Exact => eta_gradient_exact(q, noisy, eta, psi)?,
    };
    Ok(project_eta(eta + learning_rate * grad))
}

/// One instance's contribution to [`lower_bound`].
#[derive(Clone, Copy, Debug)]
pub struct LowerBoundTerm<'a, T> {
    pub q: &'a LabelDistribution<T>,
    pub h: &'a LabelDistribution<T>,
    pub noisy: OneHotLabel,
    pub eta: T,
    pub psi: T,
}

fn lower_bound_impl<'a, T: Scalar, I>(terms: I, floor: Option<T>) -> Result<T>
where
    I: IntoIterator<Item = LowerBoundTerm<'a, T>>,
{
    let mut total = T::zero();
    for t in terms {
        check_classes(t.q.classes(), t.h.classes())?;
        let joint = joint_probability(t.h, t.noisy, t.eta, t.psi)?;
        for (j, (&qj, &pj)) in t.q.probs().iter().zip(&joint).enumerate() {
            if qj == T::zero() {
                continue;
            }
            let pj = match floor {
                Some(f) => pj.max(f),
                None if pj > T::zero() => pj,
                None => {
                    return Err(Error::LogDomain {
                        class: j,
                        mass: qj.as_f64(),
                        argument: pj.as_f64(),
                    })
                }
            };
            total += qj * pj.ln();
        }
    }
    Ok(total)
}

/// `sum_i sum_j q_i^j log P(noisy_i, true_i = j | x_i)`, the surrogate maximized by the
/// alternating optimization. Zero for an empty batch.
pub fn lower_bound<'a, T: Scalar, I>(terms: I) -> Result<T>
where
    I: IntoIterator<Item = LowerBoundTerm<'a, T>>,
{
    lower_bound_impl(terms, None)
}

/// [`lower_bound`] with joint probabilities floored at `1e-12`; never a domain error.
pub fn lower_bound_clamped<'a, T: Scalar, I>(terms: I) -> Result<T>
where
    I: IntoIterator<Item = LowerBoundTerm<'a, T>>,
{
    lower_bound_impl(terms, Some(T::lit(LOG_FLOOR)))
}

/// Marginal log-likelihood of the noisy label, `log sum_j P(noisy, true = j | x)`
/// `= log[(1 - eta) * h[noisy] + eta * psi]`. Equals the lower bound plus the entropy
/// of the posterior, and is the quantity an exact alternation never decreases for
/// small enough steps.
pub fn log_likelihood<T: Scalar>(
    h: &LabelDistribution<T>,
    noisy: OneHotLabel,
    eta: T,
    psi: T,
) -> Result<T> {
    let k: T = joint_probability(h, noisy, eta, psi)?.into_iter().sum();
    if !(k > T::zero()) {
        return Err(Error::DegenerateNormalizer {
            normalizer: k.as_f64(),
        });
    }
    Ok(k.ln())
}
