//! Shared random-instance generation for the oracle test suites.

use prefopt::{PreferenceDataset, PreferencePair, PromptSpace, TabularPolicy};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub struct Instance {
    pub policy: TabularPolicy<f64>,
    pub reference: TabularPolicy<f64>,
    pub dataset: PreferenceDataset,
    pub beta: f64,
}

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Small random instance: up to 4 prompts, 5 completions, 20 pairs.
pub fn random_instance(rng: &mut ChaCha12Rng) -> Instance {
    let prompts = rng.random_range(1..=4);
    let k = rng.random_range(2..=5);
    let space = PromptSpace::new(prompts, k).unwrap();
    let logits = |rng: &mut ChaCha12Rng| -> Vec<f64> {
        (0..space.total()).map(|_| rng.random_range(-2.0..2.0)).collect()
    };
    let policy = TabularPolicy::new(space, logits(rng)).unwrap();
    let reference = TabularPolicy::new(space, logits(rng)).unwrap();
    let n = rng.random_range(1..=20);
    let pairs = (0..n)
        .map(|_| {
            let prompt = rng.random_range(0..prompts);
            let chosen = rng.random_range(0..k);
            let mut rejected = rng.random_range(0..k - 1);
            if rejected >= chosen {
                rejected += 1;
            }
            PreferencePair::new(prompt, chosen, rejected)
        })
        .collect();
    Instance {
        policy,
        reference,
        dataset: PreferenceDataset::new(space, pairs).unwrap(),
        beta: rng.random_range(0.05..1.0),
    }
}

/// Random point on the simplex with entries bounded away from zero.
#[allow(dead_code)] // each test binary compiles its own copy of this module
pub fn random_simplex(rng: &mut ChaCha12Rng, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}
