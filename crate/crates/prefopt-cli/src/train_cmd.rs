//! `prefopt train`: fit a policy on a generated task and write the report.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use prefopt::{train, EvalInputs, LossKind, LossSpec, TrainConfig};

use crate::pipeline::read_bundle;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory produced by `prefopt generate`.
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Where report.json and policy.json go; defaults to --data-dir.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// One of: dpo, drdpo, cdpo, ipo, rdpo.
    #[arg(long, default_value = "dpo")]
    pub loss: String,
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    #[arg(long)]
    pub beta_prime: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 2000)]
    pub steps: u64,
    /// 0 runs full batch.
    #[arg(long, default_value_t = 0)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 100)]
    pub record_every: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Builds a validated [`LossSpec`] from string flags.
pub fn loss_spec_from_flags(
    loss: &str,
    beta: f64,
    beta_prime: Option<f64>,
    epsilon: Option<f64>,
    tau: Option<f64>,
) -> Result<LossSpec> {
    let kind: LossKind = loss.parse()?;
    let spec = LossSpec {
        kind,
        beta,
        beta_prime,
        epsilon,
        tau,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let spec = loss_spec_from_flags(&args.loss, args.beta, args.beta_prime, args.epsilon, args.tau)?;
    let bundle = read_bundle(&args.data_dir)?;
    let config = TrainConfig {
        loss: spec,
        learning_rate: args.learning_rate,
        steps: args.steps,
        batch_size: args.batch_size,
        seed: args.seed,
        record_every: args.record_every,
    };
    let eval = EvalInputs {
        reward: &bundle.reward,
        clean_test: &bundle.test_set,
    };
    let (policy, report) = train(&bundle.reference, &bundle.train_set, &config, &eval)?;

    let out_dir = args.out_dir.clone().unwrap_or_else(|| args.data_dir.clone());
    fs::create_dir_all(&out_dir)?;
    let report_path = out_dir.join("report.json");
    fs::write(&report_path, report.to_json_string())
        .with_context(|| format!("writing {}", report_path.display()))?;
    let policy_path = out_dir.join("policy.json");
    fs::write(&policy_path, policy.to_json_string())
        .with_context(|| format!("writing {}", policy_path.display()))?;

    println!("wrote {}", report_path.display());
    println!("wrote {}", policy_path.display());
    println!(
        "final: loss={:.6} accuracy={:.4} expected_reward={:.4} kl={:.4}",
        report.final_loss(),
        report.final_preference_accuracy,
        report.final_expected_reward,
        report.final_kl
    );
    Ok(())
}
