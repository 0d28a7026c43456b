//! The generate -> train pipeline shared by `train`, `sweep`, and the tests,
//! so one seed always produces one dataset no matter which entry point built
//! it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use prefopt::{
    derive_seed, flip_pairs, gen_reference, gen_reward, sample_preferences, NoiseSpec,
    PreferenceDataset, Reward64, TaskSpec,
};

/// Tag for deriving the held-out test split's seed from the task seed.
pub const TEST_SPLIT_TAG: u64 = 1;

pub const REWARD_FILE: &str = "reward.json";
pub const REFERENCE_FILE: &str = "reference.json";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";

/// One task instance: latent rewards, reference policy, train split (with
/// noise applied) and a clean test split.
pub struct DataBundle {
    pub reward: Reward64,
    pub reference: prefopt::Policy64,
    pub train_set: PreferenceDataset,
    pub test_set: PreferenceDataset,
}

/// Builds the full bundle from seeds alone.
pub fn generate_bundle(
    task: &TaskSpec,
    noise: &NoiseSpec,
    n_train: usize,
    n_test: usize,
) -> Result<DataBundle> {
    task.validate()?;
    noise.validate()?;
    let reward = gen_reward::<f64>(task)?;
    let reference = gen_reference(&reward, noise.pointwise_rho, task.ref_sharpness)?;
    let clean_train = sample_preferences(&reward, n_train, task.seed)?;
    let train_set = flip_pairs(&clean_train, noise.pairwise_p, noise.seed)?;
    let test_set = sample_preferences(&reward, n_test, derive_seed(task.seed, TEST_SPLIT_TAG))?;
    Ok(DataBundle {
        reward,
        reference,
        train_set,
        test_set,
    })
}

pub fn write_bundle(dir: &Path, bundle: &DataBundle) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let entries: [(&str, String); 4] = [
        (REWARD_FILE, bundle.reward.to_json_string()),
        (REFERENCE_FILE, bundle.reference.to_json_string()),
        (TRAIN_FILE, bundle.train_set.to_jsonl_string()),
        (TEST_FILE, bundle.test_set.to_jsonl_string()),
    ];
    let mut written = Vec::new();
    for (name, contents) in entries {
        let path = dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_bundle(dir: &Path) -> Result<DataBundle> {
    let read = |name: &str| -> Result<String> {
        let path = dir.join(name);
        fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))
    };
    let reward = Reward64::from_json_str(&read(REWARD_FILE)?)?;
    let reference = prefopt::Policy64::from_json_str(&read(REFERENCE_FILE)?)?;
    let space = reward.space();
    let train_set = PreferenceDataset::from_jsonl_str(space, &read(TRAIN_FILE)?)?;
    let test_set = PreferenceDataset::from_jsonl_str(space, &read(TEST_FILE)?)?;
    Ok(DataBundle {
        reward,
        reference,
        train_set,
        test_set,
    })
}
