//! `prefopt report`: aggregate a sweep CSV over seeds and print a summary
//! table.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;

use crate::sweep::{read_csv_records, CSV_HEADER};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A sweep.csv produced by `prefopt sweep`.
    #[arg(long)]
    pub csv: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    /// (loss, beta, beta_prime, epsilon, tau, flip_rate, pointwise_rho)
    pub key: Vec<String>,
    pub seeds: usize,
    pub mean_accuracy: f64,
    pub mean_expected_reward: f64,
    pub mean_kl: f64,
    pub mean_final_loss: f64,
}

/// Groups rows by every column except the seed and averages the metrics.
pub fn summarize(rows: &[Vec<String>]) -> Result<Vec<GroupSummary>> {
    let mut groups: BTreeMap<Vec<String>, Vec<[f64; 4]>> = BTreeMap::new();
    for row in rows {
        if row.len() != CSV_HEADER.len() {
            bail!("row has {} columns, expected {}", row.len(), CSV_HEADER.len());
        }
        let key = row[0..7].to_vec();
        let metrics = [
            row[8].parse::<f64>()?,
            row[9].parse::<f64>()?,
            row[10].parse::<f64>()?,
            row[11].parse::<f64>()?,
        ];
        groups.entry(key).or_default().push(metrics);
    }
    Ok(groups
        .into_iter()
        .map(|(key, metrics)| {
            let n = metrics.len() as f64;
            let mean = |i: usize| metrics.iter().map(|m| m[i]).sum::<f64>() / n;
            GroupSummary {
                key,
                seeds: metrics.len(),
                mean_accuracy: mean(0),
                mean_expected_reward: mean(1),
                mean_kl: mean(2),
                mean_final_loss: mean(3),
            }
        })
        .collect())
}

pub fn run(args: &ReportArgs) -> Result<()> {
    let rows = read_csv_records(&args.csv)?;
    if rows.is_empty() {
        bail!("{} has no data rows", args.csv.display());
    }
    let summaries = summarize(&rows)?;
    println!(
        "{:<7} {:>6} {:>10} {:>8} {:>6} {:>10} {:>14} {:>6} {:>10} {:>10} {:>10} {:>12}",
        "loss",
        "beta",
        "beta_prime",
        "epsilon",
        "tau",
        "flip_rate",
        "pointwise_rho",
        "seeds",
        "accuracy",
        "reward",
        "kl",
        "final_loss"
    );
    for s in &summaries {
        println!(
            "{:<7} {:>6} {:>10} {:>8} {:>6} {:>10} {:>14} {:>6} {:>10.4} {:>10.4} {:>10.4} {:>12.6}",
            s.key[0],
            s.key[1],
            s.key[2],
            s.key[3],
            s.key[4],
            s.key[5],
            s.key[6],
            s.seeds,
            s.mean_accuracy,
            s.mean_expected_reward,
            s.mean_kl,
            s.mean_final_loss
        );
    }
    Ok(())
}
