use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mvsl::cli::{self, Overrides, ScenarioKind};

#[derive(Parser)]
#[command(
    name = "mvsl",
    version,
    about = "Multiview non-Bayesian social learning"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory; writes a CSV and a `.final.json` summary.
    Run {
        /// Experiment config (JSON).
        config: PathBuf,
        /// Trajectory CSV; the summary goes next to it.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config horizon.
        #[arg(long)]
        horizon: Option<u64>,
    },
    /// Model-only predictions: centrality, condition values, limit state.
    Analyze {
        /// Experiment config (JSON).
        config: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo localisation campaign over random sensor placements.
    Montecarlo {
        /// Campaign config (JSON).
        campaign: PathBuf,
        /// Summary JSON.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the campaign seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the campaign horizon.
        #[arg(long)]
        horizon: Option<u64>,
        /// Worker threads; results do not depend on it.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Generate an experiment config from a scenario builder.
    Scenario {
        #[arg(value_enum)]
        kind: Kind,
        /// Scenario parameters (JSON); required for `localization`.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Where to write the experiment config.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        horizon: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Grid,
    Localization,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match args.command {
        Command::Run {
            config,
            out,
            seed,
            horizon,
        } => cli::cmd_run(&config, &out, &Overrides { seed, horizon }).map(drop),
        Command::Analyze { config, out } => cli::cmd_analyze(&config, out.as_deref()).map(drop),
        Command::Montecarlo {
            campaign,
            out,
            seed,
            horizon,
            jobs,
        } => cli::cmd_montecarlo(&campaign, &out, &Overrides { seed, horizon }, jobs).map(drop),
        Command::Scenario {
            kind,
            params,
            out,
            horizon,
            seed,
        } => {
            let kind = match kind {
                Kind::Grid => ScenarioKind::Grid,
                Kind::Localization => ScenarioKind::Localization,
            };
            cli::cmd_scenario(kind, params.as_deref(), &out, horizon, seed).map(drop)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", cli::error_json(&e));
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
