//! Preference losses over tabular policies.
//!
//! Every loss acts through per-pair reward margins
//! `u = beta * (log pi/pi_ref (chosen) - log pi/pi_ref (rejected))` and the
//! per-pair log-likelihood `h = log sigmoid(u)`:
//!
//! - `dpo`:   mean of `-h`
//! - `drdpo`: `-beta' * log mean exp(h / beta')`, the tilted (worst-case
//!   reweighted) aggregation of the same terms
//! - `cdpo`:  label-smoothed binary cross entropy with assumed flip rate
//!   `epsilon`
//! - `ipo`:   squared deviation of the raw margin from `1/(2 tau)`
//! - `rdpo`:  unbiased flip-corrected estimator with assumed flip rate
//!   `epsilon`
//!
//! Reductions run sequentially in dataset order, so results are
//! bit-reproducible.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{PreferenceDataset, PreferencePair, TabularPolicy};
use crate::scalar::Real;

/// Which preference loss to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Dpo,
    DrDpo,
    CDpo,
    Ipo,
    RDpo,
}

pub const LOSS_KIND_NAMES: [&str; 5] = ["dpo", "drdpo", "cdpo", "ipo", "rdpo"];

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            LossKind::Dpo => "dpo",
            LossKind::DrDpo => "drdpo",
            LossKind::CDpo => "cdpo",
            LossKind::Ipo => "ipo",
            LossKind::RDpo => "rdpo",
        };
        write!(f, "{name}")
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dpo" => Ok(LossKind::Dpo),
            "drdpo" => Ok(LossKind::DrDpo),
            "cdpo" => Ok(LossKind::CDpo),
            "ipo" => Ok(LossKind::Ipo),
            "rdpo" => Ok(LossKind::RDpo),
            other => Err(Error::InvalidConfig(format!(
                "unknown loss {other:?}; valid kinds: {}",
                LOSS_KIND_NAMES.join(", ")
            ))),
        }
    }
}

/// A loss plus its coefficients. `beta` applies to every kind; the remaining
/// fields only to the kinds that use them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

impl LossSpec {
    pub fn dpo(beta: f64) -> Self {
        Self {
            kind: LossKind::Dpo,
            beta,
            beta_prime: None,
            epsilon: None,
            tau: None,
        }
    }

    pub fn drdpo(beta: f64, beta_prime: f64) -> Self {
        Self {
            kind: LossKind::DrDpo,
            beta,
            beta_prime: Some(beta_prime),
            epsilon: None,
            tau: None,
        }
    }

    pub fn cdpo(beta: f64, epsilon: f64) -> Self {
        Self {
            kind: LossKind::CDpo,
            beta,
            beta_prime: None,
            epsilon: Some(epsilon),
            tau: None,
        }
    }

    pub fn ipo(beta: f64, tau: f64) -> Self {
        Self {
            kind: LossKind::Ipo,
            beta,
            beta_prime: None,
            epsilon: None,
            tau: Some(tau),
        }
    }

    pub fn rdpo(beta: f64, epsilon: f64) -> Self {
        Self {
            kind: LossKind::RDpo,
            beta,
            beta_prime: None,
            epsilon: Some(epsilon),
            tau: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "beta must be > 0, got {}",
                self.beta
            )));
        }
        match self.kind {
            LossKind::DrDpo => {
                let bp = self.beta_prime.ok_or_else(|| {
                    Error::InvalidConfig("drdpo requires beta_prime".into())
                })?;
                if !(bp > 0.0 && bp.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "beta_prime must be > 0, got {bp}"
                    )));
                }
            }
            LossKind::CDpo | LossKind::RDpo => {
                let eps = self.epsilon.ok_or_else(|| {
                    Error::InvalidConfig(format!("{} requires epsilon", self.kind))
                })?;
                if !(0.0..0.5).contains(&eps) {
                    return Err(Error::InvalidConfig(format!(
                        "epsilon must lie in [0, 0.5), got {eps}"
                    )));
                }
            }
            LossKind::Ipo => {
                let tau = self
                    .tau
                    .ok_or_else(|| Error::InvalidConfig("ipo requires tau".into()))?;
                if !(tau > 0.0 && tau.is_finite()) {
                    return Err(Error::InvalidConfig(format!("tau must be > 0, got {tau}")));
                }
            }
            LossKind::Dpo => {}
        }
        Ok(())
    }
}

/// `ln(1 + e^x)`, with the exact branch cut at |x| = 30.
pub(crate) fn softplus<T: Real>(x: T) -> T {
    let cut = T::of(30.0);
    if x > cut {
        x
    } else if x < -cut {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable logistic sigmoid.
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn check_beta<T: Real>(beta: T) -> Result<()> {
    if beta <= T::zero() || !beta.is_finite() {
        return Err(Error::InvalidConfig(format!("beta must be > 0, got {beta}")));
    }
    Ok(())
}

fn check_non_empty(dataset: &PreferenceDataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::InvalidConfig(
            "loss evaluation needs a non-empty dataset".into(),
        ));
    }
    Ok(())
}

/// Raw per-pair margins `log pi/pi_ref (chosen) - log pi/pi_ref (rejected)`,
/// before scaling by beta.
pub(crate) fn margins<T: Real>(
    policy: &TabularPolicy<T>,
    reference: &TabularPolicy<T>,
    dataset: &PreferenceDataset,
) -> Result<Vec<T>> {
    policy.space().check_matches(&reference.space())?;
    policy.space().check_matches(&dataset.space())?;
    let lp = policy.log_prob_table();
    let lr = reference.log_prob_table();
    Ok(dataset
        .pairs()
        .iter()
        .map(|pair| {
            (lp.get(pair.prompt, pair.chosen) - lr.get(pair.prompt, pair.chosen))
                - (lp.get(pair.prompt, pair.rejected) - lr.get(pair.prompt, pair.rejected))
        })
        .collect())
}

/// Per-pair log-likelihood `h = log sigmoid(beta * margin)`, computed stably
/// as `-softplus(-u)`. Always negative.
pub fn h_dpo<T: Real>(
    policy: &TabularPolicy<T>,
    reference: &TabularPolicy<T>,
    pair: &PreferencePair,
    beta: T,
) -> Result<T> {
    check_beta(beta)?;
    let margin = crate::policy::log_ratio(policy, reference, pair.prompt, pair.chosen)?
        - crate::policy::log_ratio(policy, reference, pair.prompt, pair.rejected)?;
    Ok(-softplus(-(beta * margin)))
}

/// All per-pair `h` values in dataset order.
pub fn h_values<T: Real>(
    policy: &TabularPolicy<T>,
    reference: &TabularPolicy<T>,
    dataset: &PreferenceDataset,
    beta: T,
) -> Result<Vec<T>> {
    check_beta(beta)?;
    check_non_empty(dataset)?;
    Ok(margins(policy, reference, dataset)?
        .into_iter()
        .map(|m| -softplus(-(beta * m)))
        .collect())
}

/// Sequential mean in slice order.
pub(crate) fn mean<T: Real>(values: &[T]) -> T {
    let sum = values.iter().fold(T::zero(), |acc, &v| acc + v);
    sum / T::of(values.len() as f64)
}

/// `log((1/N) sum exp(v_i))` with max subtraction.
pub(crate) fn log_mean_exp<T: Real>(values: &[T]) -> T {
    let max = values
        .iter()
        .fold(T::neg_infinity(), |acc, &v| acc.max(v));
    let sum = values
        .iter()
        .fold(T::zero(), |acc, &v| acc + (v - max).exp());
    max + sum.ln() - T::of(values.len() as f64).ln()
}

/// Tilted aggregation of per-pair log-likelihoods:
/// `-beta' * log mean exp(h / beta')`. The worst-case-reweighted analogue of
/// `mean(-h)`; recovers it as `beta' -> inf` and `-max h` as `beta' -> 0`.
pub(crate) fn tilted_loss_from_h<T: Real>(h: &[T], beta_prime: T) -> T {
    let scaled: Vec<T> = h.iter().map(|&v| v / beta_prime).collect();
    -beta_prime * log_mean_exp(&scaled)
}

/// Mean negative log-likelihood of the preferences.
pub fn dpo_loss<T: Real>(
    policy: &TabularPolicy<T>,
    reference: &TabularPolicy<T>,
    dataset: &PreferenceDataset,
    beta: T,
) -> Result<T> {
    check_beta(beta)?;
    check_non_empty(dataset)?;
    let terms: Vec<T> = margins(policy, reference, dataset)?
        .into_iter()
        .map(|m| softplus(-(beta * m)))
        .collect();
    Ok(mean(&terms))
}

/// Distributionally robust tilt of the DPO terms. Never exceeds `dpo_loss`
/// on the same inputs and is non-decreasing in `beta_prime`.
pub fn dr_dpo_loss<T: Real>(
    policy: &TabularPolicy<T>,
    reference: &TabularPolicy<T>,
    dataset: &PreferenceDataset,
    beta: T,
    beta_prime: T,
) -> Result<T> {
    if beta_prime <= T::zero() || !beta_prime.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "beta_prime must be > 0, got {beta_prime}"
        )));
    }
    let h = h_values(policy, reference, dataset, beta)?;
    Ok(tilted_loss_from_h(&h, beta_prime))
}

/// Label-smoothed cross entropy under an assumed flip rate `epsilon`.
pub fn cdpo_loss<T: Real>(
    policy: &TabularPolicy<T>,
    reference: &TabularPolicy<T>,
    dataset: &PreferenceDataset,
    beta: T,
    epsilon: T,
) -> Result<T> {
    check_beta(beta)?;
    check_epsilon(epsilon)?;
    check_non_empty(dataset)?;
    let one = T::one();
    let terms: Vec<T> = margins(policy, reference, dataset)?
        .into_iter()
        .map(|m| {
            let u = beta * m;
            (one - epsilon) * softplus(-u) + epsilon * softplus(u)
        })
        .collect();
    Ok(mean(&terms))
}

/// Squared deviation of the raw margin from the target `1/(2 tau)`.
pub fn ipo_loss<T: Real>(
    policy: &TabularPolicy<T>,
    reference: &TabularPolicy<T>,
    dataset: &PreferenceDataset,
    tau: T,
) -> Result<T> {
    if tau <= T::zero() || !tau.is_finite() {
        return Err(Error::InvalidConfig(format!("tau must be > 0, got {tau}")));
    }
    check_non_empty(dataset)?;
    let target = T::one() / (T::of(2.0) * tau);
    let terms: Vec<T> = margins(policy, reference, dataset)?
        .into_iter()
        .map(|m| {
            let d = m - target;
            d * d
        })
        .collect();
    Ok(mean(&terms))
}

/// Flip-debiased cross entropy: unbiased for the clean loss when labels flip
/// independently with rate `epsilon`.
pub fn rdpo_loss<T: Real>(
    policy: &TabularPolicy<T>,
    reference: &TabularPolicy<T>,
    dataset: &PreferenceDataset,
    beta: T,
    epsilon: T,
) -> Result<T> {
    check_beta(beta)?;
    check_epsilon(epsilon)?;
    check_non_empty(dataset)?;
    let one = T::one();
    let denom = one - T::of(2.0) * epsilon;
    let terms: Vec<T> = margins(policy, reference, dataset)?
        .into_iter()
        .map(|m| {
            let u = beta * m;
            ((one - epsilon) * softplus(-u) - epsilon * softplus(u)) / denom
        })
        .collect();
    Ok(mean(&terms))
}

fn check_epsilon<T: Real>(epsilon: T) -> Result<()> {
    if epsilon < T::zero() || epsilon >= T::of(0.5) {
        return Err(Error::InvalidConfig(format!(
            "epsilon must lie in [0, 0.5), got {epsilon}"
        )));
    }
    Ok(())
}

/// Evaluates whichever loss a [`LossSpec`] names.
pub fn loss_value<T: Real>(
    policy: &TabularPolicy<T>,
    reference: &TabularPolicy<T>,
    dataset: &PreferenceDataset,
    spec: &LossSpec,
) -> Result<T> {
    spec.validate()?;
    let beta = T::of(spec.beta);
    match spec.kind {
        LossKind::Dpo => dpo_loss(policy, reference, dataset, beta),
        LossKind::DrDpo => dr_dpo_loss(
            policy,
            reference,
            dataset,
            beta,
            T::of(spec.beta_prime.expect("validated")),
        ),
        LossKind::CDpo => cdpo_loss(
            policy,
            reference,
            dataset,
            beta,
            T::of(spec.epsilon.expect("validated")),
        ),
        LossKind::Ipo => ipo_loss(policy, reference, dataset, T::of(spec.tau.expect("validated"))),
        LossKind::RDpo => rdpo_loss(
            policy,
            reference,
            dataset,
            beta,
            T::of(spec.epsilon.expect("validated")),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PromptSpace;

    fn pair_dataset(space: PromptSpace, pairs: Vec<(usize, usize, usize)>) -> PreferenceDataset {
        PreferenceDataset::new(
            space,
            pairs
                .into_iter()
                .map(|(x, w, l)| PreferencePair::new(x, w, l))
                .collect(),
        )
        .unwrap()
    }

    /// Single-prompt instance whose margins are exactly the given values
    /// (uniform reference, policy logit gap = margin).
    fn instance_with_margins(margins: &[f64]) -> (TabularPolicy<f64>, TabularPolicy<f64>, PreferenceDataset) {
        let k = 2 * margins.len();
        let space = PromptSpace::new(1, k).unwrap();
        let mut logits = vec![0.0; k];
        let mut pairs = Vec::new();
        for (i, &m) in margins.iter().enumerate() {
            logits[2 * i] = m;
            pairs.push((0, 2 * i, 2 * i + 1));
        }
        let policy = TabularPolicy::from_rows(&[logits]).unwrap();
        let reference = TabularPolicy::uniform(space);
        (policy, reference, pair_dataset(space, pairs))
    }

    /// Margins that produce prescribed h values: h = log sigmoid(u) inverts
    /// to u = -ln(e^{-h} - 1) ... solved via sigma(u) = e^h.
    fn margin_for_h(h: f64, beta: f64) -> f64 {
        let p = h.exp();
        (p / (1.0 - p)).ln() / beta
    }

    #[test]
    fn h_is_log_half_at_initialization() {
        let space = PromptSpace::new(1, 2).unwrap();
        let policy = TabularPolicy::<f64>::uniform(space);
        let pair = PreferencePair::new(0, 0, 1);
        let h = h_dpo(&policy, &policy, &pair, 0.1).unwrap();
        assert!((h + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn h_saturates_to_zero_from_below() {
        let (policy, reference, ds) = instance_with_margins(&[40.0]);
        let h = h_dpo(&policy, &reference, &ds.pairs()[0], 1.0).unwrap();
        assert!(h <= 0.0);
        assert!(h > -1e-12);
    }

    #[test]
    fn h_matches_direct_sigmoid_at_log_three() {
        let (policy, reference, ds) = instance_with_margins(&[3f64.ln()]);
        let h = h_dpo(&policy, &reference, &ds.pairs()[0], 1.0).unwrap();
        let oracle = 0.75f64.ln();
        assert!((h - oracle).abs() < 1e-12);
        assert!((h + 0.2876820724517809).abs() < 1e-12);
    }

    #[test]
    fn dpo_loss_at_initialization_is_log_two() {
        let space = PromptSpace::new(2, 3).unwrap();
        let policy = TabularPolicy::<f64>::uniform(space);
        let ds = pair_dataset(space, vec![(0, 0, 1), (1, 2, 0), (0, 1, 2)]);
        let loss = dpo_loss(&policy, &policy, &ds, 0.1).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn dpo_loss_of_known_h_values_is_mean_negation() {
        let beta = 0.5;
        let (policy, reference, ds) = instance_with_margins(&[
            margin_for_h(-0.1, beta),
            margin_for_h(-1.0, beta),
        ]);
        let loss = dpo_loss(&policy, &reference, &ds, beta).unwrap();
        assert!((loss - 0.55).abs() < 1e-12);
    }

    #[test]
    fn dpo_loss_matches_naive_per_pair_oracle() {
        let (policy, reference, ds) = instance_with_margins(&[0.7, -1.3, 0.05]);
        let beta = 0.3;
        // Oracle: independent loop over pairs with direct formulas.
        let mut acc = 0.0;
        for pair in ds.pairs() {
            let pw = policy.probabilities(pair.prompt).unwrap()[pair.chosen];
            let pl = policy.probabilities(pair.prompt).unwrap()[pair.rejected];
            let rw = reference.probabilities(pair.prompt).unwrap()[pair.chosen];
            let rl = reference.probabilities(pair.prompt).unwrap()[pair.rejected];
            let u = beta * ((pw / rw).ln() - (pl / rl).ln());
            acc += -(1.0 / (1.0 + (-u).exp())).ln();
        }
        let oracle = acc / ds.len() as f64;
        let got = dpo_loss(&policy, &reference, &ds, beta).unwrap();
        assert!((got - oracle).abs() < 1e-12);
    }

    #[test]
    fn tilted_loss_of_constant_h_is_minus_h() {
        let h = vec![-0.37f64; 5];
        for bp in [1e-3, 0.1, 1.0, 100.0] {
            assert!((tilted_loss_from_h(&h, bp) - 0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn tilted_loss_matches_weighted_toy_values() {
        let beta = 0.5;
        let (policy, reference, ds) = instance_with_margins(&[
            margin_for_h(-0.1, beta),
            margin_for_h(-1.0, beta),
        ]);
        let loss = dr_dpo_loss(&policy, &reference, &ds, beta, 0.1).unwrap();
        let oracle = -0.1 * (((-0.1f64 / 0.1).exp() + (-1.0f64 / 0.1).exp()) / 2.0).ln();
        assert!((loss - oracle).abs() < 1e-10);
        assert!((loss - 0.1693023778370222).abs() < 1e-9);
    }

    #[test]
    fn tilted_loss_recovers_mean_at_large_beta_prime() {
        let (policy, reference, ds) = instance_with_margins(&[1.1, -0.4, 0.2, -2.0]);
        let dpo = dpo_loss(&policy, &reference, &ds, 0.7).unwrap();
        let dr = dr_dpo_loss(&policy, &reference, &ds, 0.7, 1e8).unwrap();
        assert!((dr - dpo).abs() < 1e-5);
    }

    #[test]
    fn tilted_loss_shift_property() {
        let h = vec![-0.3, -1.7, -0.05, -0.9];
        let c = 0.4;
        let shifted: Vec<f64> = h.iter().map(|&v| v + c).collect();
        for bp in [0.05, 0.5, 3.0] {
            let base = tilted_loss_from_h(&h, bp);
            let moved = tilted_loss_from_h(&shifted, bp);
            assert!((moved - (base - c)).abs() < 1e-12);
        }
        // Mean aggregation shares the property.
        let mean_base = mean(&h.iter().map(|&v| -v).collect::<Vec<_>>());
        let mean_moved = mean(&shifted.iter().map(|&v| -v).collect::<Vec<_>>());
        assert!((mean_moved - (mean_base - c)).abs() < 1e-12);
    }

    #[test]
    fn cdpo_reduces_to_dpo_bit_for_bit_at_zero_epsilon() {
        let (policy, reference, ds) = instance_with_margins(&[0.9, -0.2, 1.4]);
        let beta = 0.25;
        let dpo = dpo_loss(&policy, &reference, &ds, beta).unwrap();
        let cdpo = cdpo_loss(&policy, &reference, &ds, beta, 0.0).unwrap();
        let rdpo = rdpo_loss(&policy, &reference, &ds, beta, 0.0).unwrap();
        assert_eq!(dpo.to_bits(), cdpo.to_bits());
        assert_eq!(dpo.to_bits(), rdpo.to_bits());
    }

    #[test]
    fn cdpo_at_initialization_is_log_two_for_any_epsilon() {
        let space = PromptSpace::new(1, 2).unwrap();
        let policy = TabularPolicy::<f64>::uniform(space);
        let ds = pair_dataset(space, vec![(0, 0, 1)]);
        for eps in [0.0, 0.1, 0.3, 0.49] {
            let loss = cdpo_loss(&policy, &policy, &ds, 0.1, eps).unwrap();
            assert!((loss - 2f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn cdpo_becomes_flip_symmetric_as_epsilon_approaches_half() {
        let space = PromptSpace::new(1, 2).unwrap();
        let policy = TabularPolicy::from_rows(&[vec![1.2f64, 0.0]]).unwrap();
        let reference = TabularPolicy::uniform(space);
        let forward = pair_dataset(space, vec![(0, 0, 1)]);
        let flipped = pair_dataset(space, vec![(0, 1, 0)]);
        let delta = 1e-6;
        let eps = 0.5 - delta;
        let a = cdpo_loss(&policy, &reference, &forward, 1.0, eps).unwrap();
        let b = cdpo_loss(&policy, &reference, &flipped, 1.0, eps).unwrap();
        // Residual asymmetry is (1 - 2 eps) * u = 2 delta * u.
        assert!((a - b).abs() <= 2.0 * delta * 1.2 + 1e-12);
    }

    #[test]
    fn ipo_loss_vanishes_at_its_target_margin() {
        let tau = 0.4;
        let (policy, reference, ds) = instance_with_margins(&[1.0 / (2.0 * tau); 3]);
        let loss = ipo_loss(&policy, &reference, &ds, tau).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn ipo_loss_at_initialization_with_half_tau_is_one() {
        let space = PromptSpace::new(1, 2).unwrap();
        let policy = TabularPolicy::<f64>::uniform(space);
        let ds = pair_dataset(space, vec![(0, 0, 1)]);
        let loss = ipo_loss(&policy, &policy, &ds, 0.5).unwrap();
        assert!((loss - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ipo_loss_matches_naive_loop_oracle() {
        let (policy, reference, ds) = instance_with_margins(&[0.3, -0.8, 2.1]);
        let tau = 0.7;
        let mut acc = 0.0;
        for pair in ds.pairs() {
            let d = crate::policy::log_ratio(&policy, &reference, pair.prompt, pair.chosen)
                .unwrap()
                - crate::policy::log_ratio(&policy, &reference, pair.prompt, pair.rejected)
                    .unwrap();
            acc += (d - 1.0 / (2.0 * tau)).powi(2);
        }
        let got = ipo_loss(&policy, &reference, &ds, tau).unwrap();
        assert!((got - acc / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rdpo_at_initialization_is_log_two() {
        let space = PromptSpace::new(1, 2).unwrap();
        let policy = TabularPolicy::<f64>::uniform(space);
        let ds = pair_dataset(space, vec![(0, 0, 1)]);
        for eps in [0.1, 0.25, 0.4] {
            let loss = rdpo_loss(&policy, &policy, &ds, 0.1, eps).unwrap();
            assert!((loss - 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn rdpo_matches_naive_loop_oracle() {
        let (policy, reference, ds) = instance_with_margins(&[0.4, -1.1]);
        let (beta, eps) = (0.6, 0.2);
        let mut acc = 0.0;
        for pair in ds.pairs() {
            let u = beta
                * (crate::policy::log_ratio(&policy, &reference, pair.prompt, pair.chosen)
                    .unwrap()
                    - crate::policy::log_ratio(&policy, &reference, pair.prompt, pair.rejected)
                        .unwrap());
            let nll_fwd = -(1.0 / (1.0 + (-u).exp())).ln();
            let nll_rev = -(1.0 / (1.0 + u.exp())).ln();
            acc += ((1.0 - eps) * nll_fwd - eps * nll_rev) / (1.0 - 2.0 * eps);
        }
        let got = rdpo_loss(&policy, &reference, &ds, beta, eps).unwrap();
        assert!((got - acc / 2.0).abs() < 1e-12);
    }

    #[test]
    fn losses_reject_bad_coefficients_and_empty_data() {
        let space = PromptSpace::new(1, 2).unwrap();
        let policy = TabularPolicy::<f64>::uniform(space);
        let empty = PreferenceDataset::new(space, vec![]).unwrap();
        let ds = pair_dataset(space, vec![(0, 0, 1)]);
        assert!(dpo_loss(&policy, &policy, &empty, 0.1).is_err());
        assert!(dpo_loss(&policy, &policy, &ds, -0.1).is_err());
        assert!(dr_dpo_loss(&policy, &policy, &ds, 0.1, 0.0).is_err());
        assert!(cdpo_loss(&policy, &policy, &ds, 0.1, 0.5).is_err());
        assert!(rdpo_loss(&policy, &policy, &ds, 0.1, 0.6).is_err());
        assert!(ipo_loss(&policy, &policy, &ds, 0.0).is_err());
    }

    #[test]
    fn loss_spec_validation_and_parsing() {
        assert!(LossSpec::dpo(0.1).validate().is_ok());
        assert!(LossSpec::dpo(0.0).validate().is_err());
        assert!(LossSpec::drdpo(0.1, 1.0).validate().is_ok());
        assert!(LossSpec::drdpo(0.1, -1.0).validate().is_err());
        assert!(LossSpec::cdpo(0.1, 0.49).validate().is_ok());
        assert!(LossSpec::cdpo(0.1, 0.5).validate().is_err());
        assert!(LossSpec::ipo(0.1, 0.0).validate().is_err());
        assert_eq!("drdpo".parse::<LossKind>().unwrap(), LossKind::DrDpo);
        let err = "dqo".parse::<LossKind>().unwrap_err().to_string();
        assert!(err.contains("dpo") && err.contains("rdpo"), "{err}");
    }

    #[test]
    fn f32_lane_tracks_f64_within_single_precision() {
        let rows64 = vec![vec![0.8f64, -0.3, 1.1, 0.0]];
        let rows32 = vec![vec![0.8f32, -0.3, 1.1, 0.0]];
        let p64 = TabularPolicy::from_rows(&rows64).unwrap();
        let p32 = TabularPolicy::from_rows(&rows32).unwrap();
        let r64 = TabularPolicy::<f64>::uniform(p64.space());
        let r32 = TabularPolicy::<f32>::uniform(p32.space());
        let ds = pair_dataset(p64.space(), vec![(0, 0, 1), (0, 2, 3)]);
        let d64 = dr_dpo_loss(&p64, &r64, &ds, 0.5, 0.3).unwrap();
        let d32 = dr_dpo_loss(&p32, &r32, &ds, 0.5f32, 0.3).unwrap() as f64;
        assert!((d64 - d32).abs() < 1e-6, "{d64} vs {d32}");
    }

    #[test]
    fn loss_value_dispatch_agrees_with_direct_calls() {
        let (policy, reference, ds) = instance_with_margins(&[0.5, -0.7]);
        let spec = LossSpec::drdpo(0.2, 0.5);
        let via_dispatch = loss_value(&policy, &reference, &ds, &spec).unwrap();
        let direct = dr_dpo_loss(&policy, &reference, &ds, 0.2, 0.5).unwrap();
        assert_eq!(via_dispatch.to_bits(), direct.to_bits());
    }
}
