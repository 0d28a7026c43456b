//! Deterministic gradient-descent training of a tabular policy under any
//! loss, with the evaluation metrics reported alongside.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::grad_loss;
use crate::loss::{h_values, loss_value, LossKind, LossSpec};
use crate::policy::{kl_policy, PreferenceDataset, RewardTable, TabularPolicy};
use crate::scalar::Real;
use crate::synth::{stream_rng, RngStream};

/// Optimizer settings. `batch_size = 0` means full batch; in minibatch mode
/// batches are contiguous blocks of a fresh seeded shuffle each epoch, and
/// the tilted loss is applied per batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossSpec,
    /// Step size applied to the batch-summed gradient, i.e. the mean
    /// gradient scaled by the number of pairs in the batch. Keeping the
    /// per-pair step independent of the dataset size makes one `steps`
    /// budget comparable across dataset sizes.
    pub learning_rate: f64,
    pub steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub record_every: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.steps < 1 {
            return Err(Error::InvalidConfig("steps must be >= 1".into()));
        }
        if self.record_every < 1 {
            return Err(Error::InvalidConfig("record_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Ground truth needed to score a trained policy.
pub struct EvalInputs<'a, T> {
    pub reward: &'a RewardTable<T>,
    pub clean_test: &'a PreferenceDataset,
}

/// Gibbs-weight summary at one recorded step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightStats {
    pub step: u64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Everything a single run reports. `weight_stats` is populated for the
/// tilted loss only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_curve: Vec<(u64, f64)>,
    pub final_preference_accuracy: f64,
    pub final_expected_reward: f64,
    pub final_kl: f64,
    pub weight_stats: Vec<WeightStats>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.loss_curve.last().map(|&(_, l)| l).unwrap_or(f64::NAN)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Plain gradient descent from a copy of the reference policy.
///
/// Each step subtracts `learning_rate` times the batch-summed gradient;
/// full-batch by default; deterministic given `(config, inputs)`. The
/// recorded loss is always the full-dataset loss, also in minibatch mode.
/// Aborts if the loss turns non-finite.
pub fn train<T: Real>(
    reference: &TabularPolicy<T>,
    dataset: &PreferenceDataset,
    config: &TrainConfig,
    eval: &EvalInputs<'_, T>,
) -> Result<(TabularPolicy<T>, TrainReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("training dataset is empty".into()));
    }
    reference.space().check_matches(&dataset.space())?;
    reference.space().check_matches(&eval.reward.space())?;
    reference.space().check_matches(&eval.clean_test.space())?;

    let mut policy = reference.clone();
    let lr = T::of(config.learning_rate);
    let spec = &config.loss;

    let mut loss_curve = Vec::new();
    let mut weight_stats = Vec::new();
    let mut record = |step: u64, policy: &TabularPolicy<T>| -> Result<()> {
        let loss = loss_value(policy, reference, dataset, spec)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss became {loss} at step {step}"
            )));
        }
        loss_curve.push((step, loss.as_f64()));
        if spec.kind == LossKind::DrDpo {
            let h = h_values(policy, reference, dataset, T::of(spec.beta))?;
            let w = crate::dro::gibbs_weights(&h, T::of(spec.beta_prime.expect("validated")))?;
            let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
            for &x in w.weights() {
                let x = x.as_f64();
                min = min.min(x);
                max = max.max(x);
                sum += x;
            }
            weight_stats.push(WeightStats {
                step,
                min,
                max,
                mean: sum / w.len() as f64,
            });
        }
        Ok(())
    };

    let mut batcher = if config.batch_size > 0 && config.batch_size < dataset.len() {
        Some(Batcher::new(dataset, config.batch_size, config.seed))
    } else {
        None
    };

    for step in 0..config.steps {
        if step % config.record_every == 0 {
            record(step, &policy)?;
        }
        let (grad, batch_len) = match &mut batcher {
            None => (grad_loss(&policy, reference, dataset, spec)?, dataset.len()),
            Some(b) => {
                let batch = b.next_batch()?;
                let len = batch.len();
                (grad_loss(&policy, reference, &batch, spec)?, len)
            }
        };
        let scale = lr * T::of(batch_len as f64);
        for (z, &g) in policy.logits_mut().iter_mut().zip(grad.values()) {
            *z -= scale * g;
        }
        if let Some(bad) = policy.logits().iter().find(|z| !z.is_finite()) {
            return Err(Error::NonFinite(format!(
                "logit became {bad} after step {step}"
            )));
        }
    }
    record(config.steps, &policy)?;

    let beta = T::of(spec.beta);
    let report = TrainReport {
        loss_curve,
        final_preference_accuracy:
            eval_preference_accuracy(&policy, reference, beta, eval.clean_test)?.as_f64(),
        final_expected_reward: eval_expected_reward(&policy, eval.reward)?.as_f64(),
        final_kl: eval_kl(&policy, reference)?.as_f64(),
        weight_stats,
    };
    Ok((policy, report))
}

/// Contiguous minibatches over a fresh seeded permutation per epoch.
struct Batcher<'a> {
    dataset: &'a PreferenceDataset,
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
    rng: rand_chacha::ChaCha12Rng,
}

impl<'a> Batcher<'a> {
    fn new(dataset: &'a PreferenceDataset, batch_size: usize, seed: u64) -> Self {
        Self {
            dataset,
            batch_size,
            order: (0..dataset.len()).collect(),
            cursor: usize::MAX, // forces a shuffle on first use
            rng: stream_rng(seed, RngStream::Batch),
        }
    }

    fn next_batch(&mut self) -> Result<PreferenceDataset> {
        if self.cursor >= self.dataset.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(self.dataset.len());
        let pairs = self.order[self.cursor..end]
            .iter()
            .map(|&i| self.dataset.pairs()[i])
            .collect();
        self.cursor = end;
        PreferenceDataset::new(self.dataset.space(), pairs)
    }
}

/// Fraction of clean test pairs whose implicit-reward ordering matches the
/// label; exact ties score half. The test set must carry ground-truth
/// orientation (no flipped pairs).
pub fn eval_preference_accuracy<T: Real>(
    policy: &TabularPolicy<T>,
    reference: &TabularPolicy<T>,
    beta: T,
    clean_test: &PreferenceDataset,
) -> Result<T> {
    if beta <= T::zero() {
        return Err(Error::InvalidConfig(format!("beta must be > 0, got {beta}")));
    }
    if clean_test.is_empty() {
        return Err(Error::InvalidConfig("empty test set".into()));
    }
    if clean_test.pairs().iter().any(|p| p.flipped) {
        return Err(Error::InvalidConfig(
            "accuracy is defined against a clean test set; found flipped pairs".into(),
        ));
    }
    policy.space().check_matches(&reference.space())?;
    policy.space().check_matches(&clean_test.space())?;
    let lp = policy.log_prob_table();
    let lr = reference.log_prob_table();
    let mut score = T::zero();
    for pair in clean_test.pairs() {
        let chosen = beta * (lp.get(pair.prompt, pair.chosen) - lr.get(pair.prompt, pair.chosen));
        let rejected =
            beta * (lp.get(pair.prompt, pair.rejected) - lr.get(pair.prompt, pair.rejected));
        if chosen > rejected {
            score += T::one();
        } else if chosen == rejected {
            score += T::of(0.5);
        }
    }
    Ok(score / T::of(clean_test.len() as f64))
}

/// `E_{x uniform, y ~ pi}[r(x, y)]`, exact.
pub fn eval_expected_reward<T: Real>(
    policy: &TabularPolicy<T>,
    reward: &RewardTable<T>,
) -> Result<T> {
    policy.space().check_matches(&reward.space())?;
    let space = policy.space();
    let mut total = T::zero();
    for x in 0..space.num_prompts() {
        let probs = policy.probabilities(x)?;
        let row = reward.row(x)?;
        total += probs
                .iter()
                .zip(row)
                .fold(T::zero(), |acc, (&p, &r)| acc + p * r);
    }
    Ok(total / T::of(space.num_prompts() as f64))
}

/// KL(policy || reference), averaged over prompts.
pub fn eval_kl<T: Real>(policy: &TabularPolicy<T>, reference: &TabularPolicy<T>) -> Result<T> {
    kl_policy(policy, reference)
}
