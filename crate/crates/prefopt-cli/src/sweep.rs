//! `prefopt sweep`: run the cross product of a sweep specification and merge
//! the results into one CSV plus per-run JSON reports.
//!
//! Runs execute on a worker pool but results are keyed by their position in
//! the cross product and merged in that order, so the CSV bytes do not
//! depend on the worker count.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use prefopt::{
    train, EvalInputs, LossKind, LossSpec, NoiseSpec, PromptSpace, TaskSpec, TrainConfig,
    TrainReport,
};
use rayon::prelude::*;
use serde::Deserialize;

use crate::pipeline::generate_bundle;

pub const CSV_SCHEMA: &str = "sweep-v1";
pub const CSV_HEADER: [&str; 12] = [
    "loss",
    "beta",
    "beta_prime",
    "epsilon",
    "tau",
    "flip_rate",
    "pointwise_rho",
    "seed",
    "preference_accuracy",
    "expected_reward",
    "kl",
    "final_loss",
];

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON sweep specification.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

/// Task parameters shared by every run; the per-run seed is swept.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct SweepTask {
    pub space: PromptSpace,
    pub reward_scale: f64,
    pub ref_sharpness: f64,
}

/// Trainer parameters shared by every run; loss and seed are swept.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct SweepTrain {
    pub learning_rate: f64,
    pub steps: u64,
    #[serde(default)]
    pub batch_size: usize,
    pub record_every: u64,
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_tau() -> f64 {
    0.5
}

/// The experiment grid: one run per (loss, beta, beta_prime, flip_rate,
/// pointwise_rho, seed) tuple.
#[derive(Debug, Clone, Deserialize)]
pub struct SweepSpec {
    pub betas: Vec<f64>,
    pub beta_primes: Vec<f64>,
    pub flip_rates: Vec<f64>,
    pub pointwise_rhos: Vec<f64>,
    pub losses: Vec<LossKind>,
    pub seeds: Vec<u64>,
    /// Assumed flip rate handed to cdpo/rdpo runs.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Target coefficient handed to ipo runs.
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub task: SweepTask,
    pub train: SweepTrain,
    pub n_train: usize,
    pub n_test: usize,
}

impl SweepSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: SweepSpec = serde_json::from_str(s).context("parsing sweep spec")?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, empty) in [
            ("betas", self.betas.is_empty()),
            ("beta_primes", self.beta_primes.is_empty()),
            ("flip_rates", self.flip_rates.is_empty()),
            ("pointwise_rhos", self.pointwise_rhos.is_empty()),
            ("losses", self.losses.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                bail!("sweep spec field `{name}` must be non-empty");
            }
        }
        if self.n_train == 0 || self.n_test == 0 {
            bail!("sweep spec fields `n_train` and `n_test` must be >= 1");
        }
        // Surface bad grids before any run starts.
        for run in self.runs() {
            run.loss_spec()?.validate()?;
            run.noise().validate()?;
            run.task(&self.task).validate()?;
        }
        Ok(())
    }

    pub fn run_count(&self) -> usize {
        self.losses.len()
            * self.betas.len()
            * self.beta_primes.len()
            * self.flip_rates.len()
            * self.pointwise_rhos.len()
            * self.seeds.len()
    }

    /// Cross product in row order: loss, beta, beta_prime, flip_rate,
    /// pointwise_rho, seed.
    pub fn runs(&self) -> Vec<RunPoint> {
        let mut runs = Vec::with_capacity(self.run_count());
        let mut index = 0;
        for &loss in &self.losses {
            for &beta in &self.betas {
                for &beta_prime in &self.beta_primes {
                    for &flip_rate in &self.flip_rates {
                        for &pointwise_rho in &self.pointwise_rhos {
                            for &seed in &self.seeds {
                                runs.push(RunPoint {
                                    index,
                                    loss,
                                    beta,
                                    beta_prime,
                                    epsilon: self.epsilon,
                                    tau: self.tau,
                                    flip_rate,
                                    pointwise_rho,
                                    seed,
                                });
                                index += 1;
                            }
                        }
                    }
                }
            }
        }
        runs
    }
}

/// One grid point of the sweep.
#[derive(Debug, Clone, Copy)]
pub struct RunPoint {
    pub index: usize,
    pub loss: LossKind,
    pub beta: f64,
    pub beta_prime: f64,
    pub epsilon: f64,
    pub tau: f64,
    pub flip_rate: f64,
    pub pointwise_rho: f64,
    pub seed: u64,
}

impl RunPoint {
    /// The grid's beta_prime/epsilon/tau only bind on the kinds that use
    /// them; other kinds leave those CSV cells empty.
    pub fn loss_spec(&self) -> Result<LossSpec> {
        let spec = match self.loss {
            LossKind::Dpo => LossSpec::dpo(self.beta),
            LossKind::DrDpo => LossSpec::drdpo(self.beta, self.beta_prime),
            LossKind::CDpo => LossSpec::cdpo(self.beta, self.epsilon),
            LossKind::Ipo => LossSpec::ipo(self.beta, self.tau),
            LossKind::RDpo => LossSpec::rdpo(self.beta, self.epsilon),
        };
        Ok(spec)
    }

    pub fn task(&self, base: &SweepTask) -> TaskSpec {
        TaskSpec {
            space: base.space,
            reward_scale: base.reward_scale,
            ref_sharpness: base.ref_sharpness,
            seed: self.seed,
        }
    }

    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec {
            pointwise_rho: self.pointwise_rho,
            pairwise_p: self.flip_rate,
            seed: self.seed,
        }
    }
}

/// A finished run: the grid point plus its final metrics.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub point: RunPoint,
    pub report: TrainReport,
}

impl RunResult {
    pub fn csv_record(&self) -> Vec<String> {
        let p = &self.point;
        let spec = p.loss_spec().expect("validated");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            p.loss.to_string(),
            p.beta.to_string(),
            opt(spec.beta_prime),
            opt(spec.epsilon),
            opt(spec.tau),
            p.flip_rate.to_string(),
            p.pointwise_rho.to_string(),
            p.seed.to_string(),
            self.report.final_preference_accuracy.to_string(),
            self.report.final_expected_reward.to_string(),
            self.report.final_kl.to_string(),
            self.report.final_loss().to_string(),
        ]
    }
}

/// Executes one grid point end to end (data generation included).
pub fn execute_run(point: &RunPoint, spec: &SweepSpec) -> Result<RunResult> {
    let task = point.task(&spec.task);
    let bundle = generate_bundle(&task, &point.noise(), spec.n_train, spec.n_test)?;
    let config = TrainConfig {
        loss: point.loss_spec()?,
        learning_rate: spec.train.learning_rate,
        steps: spec.train.steps,
        batch_size: spec.train.batch_size,
        seed: point.seed,
        record_every: spec.train.record_every,
    };
    let eval = EvalInputs {
        reward: &bundle.reward,
        clean_test: &bundle.test_set,
    };
    let (_, report) = train(&bundle.reference, &bundle.train_set, &config, &eval)?;
    Ok(RunResult {
        point: *point,
        report,
    })
}

/// Runs the whole grid and writes `sweep.csv` plus `runs/run_NNNNN.json`.
/// Returns the results in grid order.
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path, jobs: usize) -> Result<Vec<RunResult>> {
    spec.validate()?;
    let runs = spec.runs();
    println!("sweep: {} runs", runs.len());

    let execute_all = || -> Result<Vec<RunResult>> {
        runs.par_iter().map(|point| execute_run(point, spec)).collect()
    };
    let results = if jobs == 0 {
        execute_all()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .context("building worker pool")?
            .install(execute_all)?
    };

    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("sweep.csv");
    write_csv(&csv_path, &results)?;
    let runs_dir = out_dir.join("runs");
    fs::create_dir_all(&runs_dir)?;
    for result in &results {
        let path = runs_dir.join(format!("run_{:05}.json", result.point.index));
        fs::write(&path, result.report.to_json_string())?;
    }
    println!("wrote {}", csv_path.display());
    Ok(results)
}

fn write_csv(path: &Path, results: &[RunResult]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "# schema={CSV_SCHEMA}")?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(CSV_HEADER)?;
    for result in results {
        writer.write_record(result.csv_record())?;
    }
    writer.flush()?;
    Ok(())
}

/// Rows of a sweep CSV, comment line skipped, as raw string records.
pub fn read_csv_records(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(record.iter().map(str::to_owned).collect());
    }
    Ok(rows)
}

pub fn run(args: &SweepArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec)
        .with_context(|| format!("reading {}", args.spec.display()))?;
    let spec = SweepSpec::from_json_str(&text)?;
    run_sweep(&spec, &args.out_dir, args.jobs)?;
    Ok(())
}
