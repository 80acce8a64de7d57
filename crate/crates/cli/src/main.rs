//! `perfboost`: train, simulate, verify and compare performance-boosting
//! controllers from TOML scenario files.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 verification failure.

mod commands;
mod config;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use perfboost::baselines::PolicyTag;
use perfboost::verify::Suite;

use commands::{CompareArgs, DisturbanceSource, Failure, SimulateArgs, VerifyArgs};
use config::ScenarioFile;

#[derive(Parser)]
#[command(
    name = "perfboost",
    version,
    about = "Performance-boosting controllers for stable nonlinear systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print or write a preset scenario file.
    Init {
        /// mountains, mountains_cbf or waypoint.
        #[arg(long, default_value = "mountains")]
        preset: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the configured policy and write checkpoints plus a JSON-lines log.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the training seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_policy)]
        policy: Option<PolicyTag>,
    },
    /// Roll out one policy and write the trajectory and an SVG plot.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_parser = parse_policy)]
        policy: Option<PolicyTag>,
        /// Mass factor of the true plant, one for all vehicles or one per vehicle.
        #[arg(long, value_delimiter = ',')]
        mass_scale: Vec<f64>,
        #[arg(long, value_enum, default_value = "nominal")]
        disturbance: DisturbanceSource,
        /// Seed of a sampled disturbance; defaults to the test seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property suites and write a JSON report.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Suite to run; repeat for several, all by default.
        #[arg(long, value_parser = parse_suite)]
        suite: Vec<Suite>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Adds an operator without a gain budget to the gain suite.
        #[arg(long, hide = true)]
        unbudgeted_hook: bool,
    },
    /// Mean quadratic state cost of checkpoints and baselines on shared test disturbances.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Trained checkpoint; repeat for several.
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        /// Parameter-free baseline (cbf_online, base_only); repeat for several.
        #[arg(long, value_parser = parse_policy)]
        policy: Vec<PolicyTag>,
        #[arg(long, value_delimiter = ',')]
        mass_scale: Vec<f64>,
        /// Overrides the test seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_policy(s: &str) -> Result<PolicyTag, String> {
    s.parse().map_err(|e: perfboost::Error| e.to_string())
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: perfboost::Error| e.to_string())
}

fn load(path: &Path) -> Result<ScenarioFile, Failure> {
    ScenarioFile::load(path).map_err(|e| Failure::Config(e.to_string()))
}

fn out_dir(flag: Option<PathBuf>, cfg: Option<&ScenarioFile>, sub: &str) -> PathBuf {
    flag.unwrap_or_else(|| match cfg {
        Some(c) => c.out_dir.join(sub),
        None => PathBuf::from("runs").join(sub),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Init { preset, out } => commands::init(&preset, out.as_deref()),
        Command::Train {
            config,
            seed,
            out,
            policy,
        } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.seeds.train = s;
            }
            let out = out_dir(out, Some(&cfg), "train");
            let paths = commands::train_cmd(&cfg, policy.unwrap_or(cfg.policy), &out)?;
            for p in paths {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Simulate {
            config,
            checkpoint,
            policy,
            mass_scale,
            disturbance,
            seed,
            out,
        } => {
            let cfg = load(&config)?;
            let out = out_dir(out, Some(&cfg), "simulate");
            let summary = commands::simulate(
                &cfg,
                &SimulateArgs {
                    policy: policy.unwrap_or(cfg.policy),
                    checkpoint: checkpoint.as_deref(),
                    mass_scale: &mass_scale,
                    disturbance,
                    seed: seed.unwrap_or(cfg.seeds.test),
                    out: &out,
                },
            )?;
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
            Ok(())
        }
        Command::Verify {
            config,
            suite,
            seed,
            out,
            unbudgeted_hook,
        } => {
            let cfg = config.as_deref().map(load).transpose()?;
            let out = out_dir(out, cfg.as_ref(), "verify");
            commands::verify_cmd(
                cfg.as_ref(),
                &VerifyArgs {
                    suites: &suite,
                    seed,
                    unbudgeted_hook,
                    out: &out,
                },
            )
            .map(|_| ())
        }
        Command::Compare {
            config,
            checkpoint,
            policy,
            mass_scale,
            seed,
            out,
        } => {
            let cfg = load(&config)?;
            let out = out_dir(out, Some(&cfg), "compare");
            commands::compare(
                &cfg,
                &CompareArgs {
                    checkpoints: &checkpoint,
                    baselines: &policy,
                    mass_scale: &mass_scale,
                    seed,
                    out: &out,
                },
            )
            .map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("perfboost: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
