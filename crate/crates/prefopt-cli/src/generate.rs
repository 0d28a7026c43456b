//! `prefopt generate`: write a seeded synthetic task to disk.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use prefopt::{NoiseSpec, PromptSpace, TaskSpec};

use crate::pipeline::{generate_bundle, write_bundle};

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Directory for reward.json, reference.json, train.jsonl, test.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub num_prompts: usize,
    #[arg(long, default_value_t = 8)]
    pub completions_per_prompt: usize,
    /// Half-width of the uniform latent-reward distribution.
    #[arg(long, default_value_t = 9.0)]
    pub reward_scale: f64,
    /// Logit temperature of the generated reference policy.
    #[arg(long, default_value_t = 1.0)]
    pub ref_sharpness: f64,
    /// Reference-corruption mix in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    pub pointwise_rho: f64,
    /// Label-flip probability applied to the train split.
    #[arg(long, default_value_t = 0.0)]
    pub pairwise_p: f64,
    #[arg(long, default_value_t = 2000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed for the flip stream; defaults to --seed.
    #[arg(long)]
    pub noise_seed: Option<u64>,
}

pub fn run(args: &GenerateArgs) -> Result<()> {
    let task = TaskSpec {
        space: PromptSpace::new(args.num_prompts, args.completions_per_prompt)?,
        reward_scale: args.reward_scale,
        ref_sharpness: args.ref_sharpness,
        seed: args.seed,
    };
    let noise = NoiseSpec {
        pointwise_rho: args.pointwise_rho,
        pairwise_p: args.pairwise_p,
        seed: args.noise_seed.unwrap_or(args.seed),
    };
    let bundle = generate_bundle(&task, &noise, args.n_train, args.n_test)?;
    let flipped = bundle.train_set.pairs().iter().filter(|p| p.flipped).count();
    let written = write_bundle(&args.out_dir, &bundle)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    println!(
        "train pairs: {} ({} flipped), test pairs: {}",
        bundle.train_set.len(),
        flipped,
        bundle.test_set.len()
    );
    Ok(())
}
