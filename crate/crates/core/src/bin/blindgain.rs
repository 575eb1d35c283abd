use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use blindgain::analysis::{moments, varrho_closed_form, varrho_monte_carlo};
use blindgain::harness::checks::run_quick_checks;
use blindgain::harness::{
    export_csv, export_json, export_per_user_csv, run_experiment, with_workers, workers_from_env,
    SystemConfig,
};
use blindgain::{ChannelModel, Error, LargeScaleProfile};

/// Blind effective-gain estimation for the massive-MIMO downlink.
#[derive(Debug, Parser)]
#[command(name = "blindgain", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an MSE-vs-SNR sweep described by a JSON config.
    Sweep(SweepArgs),
    /// Compare the closed-form accuracy metric with Monte Carlo.
    Varrho(VarrhoArgs),
    /// Print closed-form moments of the effective gain.
    Moments(MomentsArgs),
    /// Run a quick invariant suite.
    Validate(ValidateArgs),
    /// Print the default sweep configuration as JSON.
    DefaultConfig,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// CSV output; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Per-user CSV (turns on per-user accumulation).
    #[arg(long)]
    per_user: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct Profile {
    #[arg(long = "M")]
    antennas: usize,
    #[arg(long = "K")]
    users: usize,
    /// Common large-scale coefficient.
    #[arg(long, default_value_t = 1.0, conflicts_with = "betas")]
    beta: f64,
    /// Comma-separated coefficients, one per user.
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
}

impl Profile {
    fn build(&self) -> Result<LargeScaleProfile, Error> {
        match &self.betas {
            Some(b) if b.len() != self.users => Err(Error::Config(format!(
                "--betas lists {} users but --K is {}",
                b.len(),
                self.users
            ))),
            Some(b) => LargeScaleProfile::new(b.clone()),
            None => LargeScaleProfile::uniform(self.users, self.beta),
        }
    }
}

#[derive(Debug, Args)]
struct VarrhoArgs {
    #[command(flatten)]
    profile: Profile,
    #[arg(long, default_value_t = 0)]
    user: usize,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct MomentsArgs {
    #[arg(long = "M")]
    antennas: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Restrict to one model.
    #[arg(long)]
    model: Option<ChannelModel>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 20_000)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    let workers = workers_from_env()?;
    match command {
        Command::Sweep(args) => {
            let mut config = SystemConfig::from_json_file(&args.config)?;
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            if args.per_user.is_some() {
                config.per_user = true;
            }
            for w in config.validate()?.warnings {
                eprintln!("warning: {w}");
            }
            let table = with_workers(workers, || run_experiment(&config))??;
            match &args.out {
                Some(path) => export_csv(&table, path)?,
                None => print!("{}", table.to_csv_string()),
            }
            if let Some(path) = &args.json {
                export_json(&table, path)?;
            }
            if let Some(path) = &args.per_user {
                export_per_user_csv(&table, path)?;
            }
        }
        Command::Varrho(args) => {
            let profile = args.profile.build()?;
            let m = args.profile.antennas;
            println!(
                "{:<10} {:>14} {:>14} {:>12} {:>8}",
                "model", "closed_form", "monte_carlo", "stderr", "z"
            );
            for model in ChannelModel::ALL {
                let closed = varrho_closed_form(model, m, &profile, args.user)?;
                let mc = with_workers(workers, || {
                    varrho_monte_carlo(model, m, &profile, args.user, args.trials, args.seed)
                })??;
                println!(
                    "{:<10} {:>14.4e} {:>14.4e} {:>12.2e} {:>8.2}",
                    model.as_str(),
                    closed,
                    mc.mean,
                    mc.stderr,
                    mc.z_score(closed)
                );
            }
        }
        Command::Moments(args) => {
            let models = match args.model {
                Some(m) => vec![m],
                None => ChannelModel::ALL.to_vec(),
            };
            println!("{:<10} {:>16} {:>16} {:>16}", "model", "mean_gain", "fourth", "variance");
            for model in models {
                let mo = moments(model, args.antennas, args.beta)?;
                println!(
                    "{:<10} {:>16} {:>16} {:>16}",
                    model.as_str(),
                    mo.mean_gain,
                    mo.fourth,
                    mo.variance
                );
            }
        }
        Command::Validate(args) => {
            let outcomes = with_workers(workers, || run_quick_checks(args.trials, args.seed))??;
            let mut failed = 0;
            for o in &outcomes {
                println!("[{}] {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
                failed += !o.passed as usize;
            }
            if failed > 0 {
                eprintln!("{failed} of {} checks failed", outcomes.len());
                return Ok(ExitCode::from(1));
            }
        }
        Command::DefaultConfig => {
            let text = serde_json::to_string_pretty(&SystemConfig::default())
                .expect("config serializes");
            println!("{text}");
        }
    }
    Ok(ExitCode::SUCCESS)
}
