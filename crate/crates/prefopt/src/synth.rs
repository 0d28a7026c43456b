//! Synthetic pairwise-preference tasks: a latent reward table, a reference
//! policy with controllable corruption, sampled comparisons, and label-flip
//! noise.
//!
//! Randomness comes from a counter-based generator with one named stream per
//! purpose, so drawing more from one stream never perturbs the others.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{
    PreferenceDataset, PreferencePair, PromptSpace, RewardTable, TabularPolicy,
};
use crate::scalar::Real;

/// Parameters of a synthetic task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub space: PromptSpace,
    /// Half-width of the uniform latent-reward distribution.
    pub reward_scale: f64,
    /// Logit temperature used when building the reference from the rewards.
    pub ref_sharpness: f64,
    pub seed: u64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.reward_scale >= 0.0 && self.reward_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "reward_scale must be >= 0, got {}",
                self.reward_scale
            )));
        }
        if !(self.ref_sharpness > 0.0 && self.ref_sharpness.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "ref_sharpness must be > 0, got {}",
                self.ref_sharpness
            )));
        }
        Ok(())
    }
}

/// Noise levels injected into a task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Reference-corruption mix in [0, 1]: 0 reward-aligned, 1 reward-inverted.
    pub pointwise_rho: f64,
    /// Independent label-flip probability in [0, 1].
    pub pairwise_p: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pointwise_rho", self.pointwise_rho),
            ("pairwise_p", self.pairwise_p),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
pub(crate) enum RngStream {
    Reward = 1,
    Preference = 2,
    Flip = 3,
    Batch = 4,
}

pub(crate) fn stream_rng(seed: u64, stream: RngStream) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Derives an independent seed, e.g. for a held-out test split. Splitmix64.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Latent rewards drawn i.i.d. uniform on `[-reward_scale, reward_scale]`.
pub fn gen_reward<T: Real>(spec: &TaskSpec) -> Result<RewardTable<T>> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, RngStream::Reward);
    let values: Vec<T> = (0..spec.space.total())
        .map(|_| {
            let u: f64 = rng.random();
            T::of(spec.reward_scale * (2.0 * u - 1.0))
        })
        .collect();
    RewardTable::new(spec.space, values)
}

/// Reference policy interpolating between reward-aligned (`rho = 0`) and
/// reward-inverted (`rho = 1`): logits `lambda * (1 - 2 rho) * r`.
/// `rho = 0.5` collapses to the uniform policy.
pub fn gen_reference<T: Real>(
    reward: &RewardTable<T>,
    rho: f64,
    lambda: f64,
) -> Result<TabularPolicy<T>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!(
            "rho must lie in [0, 1], got {rho}"
        )));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "lambda must be > 0, got {lambda}"
        )));
    }
    let coef = T::of(lambda * (1.0 - 2.0 * rho));
    let logits: Vec<T> = reward.values().iter().map(|&r| coef * r).collect();
    TabularPolicy::new(reward.space(), logits)
}

/// Samples `n` comparisons: prompt uniform, two distinct completions uniform,
/// winner drawn from the pairwise logistic model
/// `P(y1 beats y2) = sigmoid(r(y1) - r(y2))`.
pub fn sample_preferences<T: Real>(
    reward: &RewardTable<T>,
    n: usize,
    seed: u64,
) -> Result<PreferenceDataset> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be >= 1".into()));
    }
    let space = reward.space();
    let k = space.completions_per_prompt();
    let mut rng = stream_rng(seed, RngStream::Preference);
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let prompt = rng.random_range(0..space.num_prompts());
        let y1 = rng.random_range(0..k);
        let mut y2 = rng.random_range(0..k - 1);
        if y2 >= y1 {
            y2 += 1;
        }
        let gap = reward.value(prompt, y1)?.as_f64() - reward.value(prompt, y2)?.as_f64();
        let p_first = 1.0 / (1.0 + (-gap).exp());
        let u: f64 = rng.random();
        let (chosen, rejected) = if u < p_first { (y1, y2) } else { (y2, y1) };
        pairs.push(PreferencePair::new(prompt, chosen, rejected));
    }
    PreferenceDataset::new(space, pairs)
}

/// Swaps each pair independently with probability `p`, toggling its
/// provenance flag. Order and underlying comparisons are preserved; applying
/// `p = 1` twice restores the original dataset.
pub fn flip_pairs(dataset: &PreferenceDataset, p: f64, seed: u64) -> Result<PreferenceDataset> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!(
            "flip probability must lie in [0, 1], got {p}"
        )));
    }
    let mut rng = stream_rng(seed, RngStream::Flip);
    let pairs: Vec<PreferencePair> = dataset
        .pairs()
        .iter()
        .map(|pair| {
            let u: f64 = rng.random();
            if u < p {
                PreferencePair {
                    prompt: pair.prompt,
                    chosen: pair.rejected,
                    rejected: pair.chosen,
                    flipped: !pair.flipped,
                }
            } else {
                *pair
            }
        })
        .collect();
    PreferenceDataset::new(dataset.space(), pairs)
}
