//! Analytic gradients of every loss with respect to the policy logits, plus
//! a central-difference oracle.
//!
//! Each pair only touches its own prompt row, and because a pair's margin is
//! a difference of two log-probabilities on the same row, the softmax terms
//! cancel: the contribution is `coef` on the chosen logit and `-coef` on the
//! rejected one. Rows therefore sum to zero for every loss here.
//! Accumulation runs sequentially in dataset order.

use crate::dro::gibbs_weights;
use crate::error::{Error, Result};
use crate::loss::{h_values, margins, sigmoid, LossKind, LossSpec};
use crate::policy::{PreferenceDataset, PromptSpace, TabularPolicy};
use crate::scalar::Real;

/// Gradient matrix with the same layout as the policy logits.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTable<T> {
    space: PromptSpace,
    values: Vec<T>,
}

impl<T: Real> GradientTable<T> {
    pub fn zeros(space: PromptSpace) -> Self {
        Self {
            space,
            values: vec![T::zero(); space.total()],
        }
    }

    pub fn new(space: PromptSpace, values: Vec<T>) -> Result<Self> {
        if values.len() != space.total() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} gradient entries, got {}",
                space.total(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry is {bad}")));
        }
        Ok(Self { space, values })
    }

    pub fn space(&self) -> PromptSpace {
        self.space
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, prompt: usize) -> Result<&[T]> {
        self.space.check_prompt(prompt)?;
        let k = self.space.completions_per_prompt();
        Ok(&self.values[prompt * k..(prompt + 1) * k])
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    /// Sup-norm distance to another gradient of the same shape.
    pub fn max_abs_diff(&self, other: &GradientTable<T>) -> Result<T> {
        self.space.check_matches(&other.space)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs())))
    }

    fn accumulate(&mut self, dataset: &PreferenceDataset, coefs: &[T]) {
        let k = self.space.completions_per_prompt();
        for (pair, &c) in dataset.pairs().iter().zip(coefs) {
            self.values[pair.prompt * k + pair.chosen] += c;
            self.values[pair.prompt * k + pair.rejected] -= c;
        }
    }
}

fn check_inputs<T: Real>(
    policy: &TabularPolicy<T>,
    reference: &TabularPolicy<T>,
    dataset: &PreferenceDataset,
) -> Result<()> {
    policy.space().check_matches(&reference.space())?;
    policy.space().check_matches(&dataset.space())?;
    if dataset.is_empty() {
        return Err(Error::InvalidConfig(
            "gradient evaluation needs a non-empty dataset".into(),
        ));
    }
    Ok(())
}

/// Gradient of the mean negative log-likelihood loss. The per-pair factor
/// `sigmoid(-u)` boosts pairs the current policy ranks against their label.
pub fn grad_dpo<T: Real>(
    policy: &TabularPolicy<T>,
    reference: &TabularPolicy<T>,
    dataset: &PreferenceDataset,
    beta: T,
) -> Result<GradientTable<T>> {
    check_inputs(policy, reference, dataset)?;
    if beta <= T::zero() {
        return Err(Error::InvalidConfig(format!("beta must be > 0, got {beta}")));
    }
    let n = T::of(dataset.len() as f64);
    let coefs: Vec<T> = margins(policy, reference, dataset)?
        .into_iter()
        .map(|m| -beta * sigmoid(-(beta * m)) / n)
        .collect();
    let mut grad = GradientTable::zeros(policy.space());
    grad.accumulate(dataset, &coefs);
    Ok(grad)
}

/// Gradient of the tilted loss: the per-pair contributions of [`grad_dpo`]
/// reweighted by the Gibbs weights of the current `h` values.
pub fn grad_dr_dpo<T: Real>(
    policy: &TabularPolicy<T>,
    reference: &TabularPolicy<T>,
    dataset: &PreferenceDataset,
    beta: T,
    beta_prime: T,
) -> Result<GradientTable<T>> {
    check_inputs(policy, reference, dataset)?;
    let h = h_values(policy, reference, dataset, beta)?;
    let weights = gibbs_weights(&h, beta_prime)?;
    let n = T::of(dataset.len() as f64);
    let coefs: Vec<T> = margins(policy, reference, dataset)?
        .into_iter()
        .zip(weights.weights())
        .map(|(m, &w)| -beta * sigmoid(-(beta * m)) * w / n)
        .collect();
    let mut grad = GradientTable::zeros(policy.space());
    grad.accumulate(dataset, &coefs);
    Ok(grad)
}

/// Analytic gradients for the baseline losses (`cdpo`, `ipo`, `rdpo`).
pub fn grad_baselines<T: Real>(
    policy: &TabularPolicy<T>,
    reference: &TabularPolicy<T>,
    dataset: &PreferenceDataset,
    spec: &LossSpec,
) -> Result<GradientTable<T>> {
    check_inputs(policy, reference, dataset)?;
    spec.validate()?;
    let n = T::of(dataset.len() as f64);
    let beta = T::of(spec.beta);
    let raw = margins(policy, reference, dataset)?;
    let coefs: Vec<T> = match spec.kind {
        LossKind::CDpo => {
            let eps = T::of(spec.epsilon.expect("validated"));
            raw.into_iter()
                .map(|m| {
                    let u = beta * m;
                    beta * (-(T::one() - eps) * sigmoid(-u) + eps * sigmoid(u)) / n
                })
                .collect()
        }
        LossKind::RDpo => {
            let eps = T::of(spec.epsilon.expect("validated"));
            let denom = T::one() - T::of(2.0) * eps;
            raw.into_iter()
                .map(|m| {
                    let u = beta * m;
                    beta * (-(T::one() - eps) * sigmoid(-u) - eps * sigmoid(u)) / (denom * n)
                })
                .collect()
        }
        LossKind::Ipo => {
            let tau = T::of(spec.tau.expect("validated"));
            let target = T::one() / (T::of(2.0) * tau);
            raw.into_iter()
                .map(|m| T::of(2.0) * (m - target) / n)
                .collect()
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "grad_baselines handles cdpo, ipo, rdpo; got {other}"
            )))
        }
    };
    let mut grad = GradientTable::zeros(policy.space());
    grad.accumulate(dataset, &coefs);
    Ok(grad)
}

/// Gradient of whichever loss a [`LossSpec`] names.
pub fn grad_loss<T: Real>(
    policy: &TabularPolicy<T>,
    reference: &TabularPolicy<T>,
    dataset: &PreferenceDataset,
    spec: &LossSpec,
) -> Result<GradientTable<T>> {
    spec.validate()?;
    match spec.kind {
        LossKind::Dpo => grad_dpo(policy, reference, dataset, T::of(spec.beta)),
        LossKind::DrDpo => grad_dr_dpo(
            policy,
            reference,
            dataset,
            T::of(spec.beta),
            T::of(spec.beta_prime.expect("validated")),
        ),
        _ => grad_baselines(policy, reference, dataset, spec),
    }
}

/// Central-difference gradient of an arbitrary scalar loss of the policy.
///
/// The oracle for every analytic gradient above; it never calls them.
pub fn finite_diff<T, F>(
    mut loss: F,
    policy: &TabularPolicy<T>,
    step: T,
) -> Result<GradientTable<T>>
where
    T: Real,
    F: FnMut(&TabularPolicy<T>) -> Result<T>,
{
    if step < T::of(1e-7) || step > T::of(1e-3) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step must lie in [1e-7, 1e-3], got {step}"
        )));
    }
    let space = policy.space();
    let mut probe = policy.clone();
    let mut values = Vec::with_capacity(space.total());
    for idx in 0..space.total() {
        let original = probe.logits()[idx];
        let k = space.completions_per_prompt();
        let coord = (idx / k, idx % k);

        probe.logits_mut()[idx] = original + step;
        let plus = loss(&probe)?;
        probe.logits_mut()[idx] = original - step;
        let minus = loss(&probe)?;
        probe.logits_mut()[idx] = original;

        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss not finite when probing logit ({}, {}): f+ = {plus}, f- = {minus}",
                coord.0, coord.1
            )));
        }
        values.push((plus - minus) / (T::of(2.0) * step));
    }
    Ok(GradientTable { space, values })
}

/// `||a - b||_inf / max(1, ||a||_inf)`: the relative metric used to compare
/// analytic and finite-difference gradients without dividing by zero near
/// stationary points.
pub fn relative_gradient_error<T: Real>(
    analytic: &GradientTable<T>,
    numeric: &GradientTable<T>,
) -> Result<T> {
    let diff = analytic.max_abs_diff(numeric)?;
    Ok(diff / T::one().max(analytic.max_abs()))
}
