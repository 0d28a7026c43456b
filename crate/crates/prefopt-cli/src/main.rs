use clap::{Parser, Subcommand};
use prefopt_cli::{generate, report, sweep, train_cmd, verify};

/// Preference-optimization experiments on exactly computable tabular tasks.
#[derive(Parser)]
#[command(name = "prefopt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic preference task.
    Generate(generate::GenerateArgs),
    /// Train a policy on a generated task and write its report.
    Train(train_cmd::TrainArgs),
    /// Run a grid of training runs and merge the results into a CSV.
    Sweep(sweep::SweepArgs),
    /// Check every closed form against its brute-force oracle.
    Verify(verify::VerifyArgs),
    /// Summarize a sweep CSV over seeds.
    Report(report::ReportArgs),
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(args) => generate::run(&args),
        Command::Train(args) => train_cmd::run(&args),
        Command::Sweep(args) => sweep::run(&args),
        Command::Verify(args) => verify::run(&args),
        Command::Report(args) => report::run(&args),
    }
}
