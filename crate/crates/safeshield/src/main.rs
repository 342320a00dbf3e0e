use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use safeshield::error::{BenchError, Result};
use safeshield::exec::{threads_from_env, RayonExecutor};
use safeshield::formats::{read_checkpoint, write_trajectory};
use safeshield::rollout::record_rollout;
use safeshield::suite::{
    format_table, load_runs, overhead_report, run_suite, runs_dir, summary_table, train_variant, write_run,
    write_summary_csv,
};
use safeshield::validate::validate_safe_set;
use safeshield::ExperimentConfig;

#[derive(Parser)]
#[command(name = "safeshield", version, about = "Safeguarded first-order policy optimisation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one variant on one seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Variant name; defaults to the first variant.
        #[arg(long)]
        variant: Option<String>,
        /// Seed; defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides the configured one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every variant on every seed and write the summary table.
    Suite {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the configured safe state set by sampling.
    ValidateSafeSet {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print and rewrite the summary of a finished suite.
    Report {
        /// Output directory of a suite (the one holding `runs/`).
        #[arg(long)]
        runs: PathBuf,
    },
    /// Record safeguarded rollouts of a checkpoint as a trajectory file.
    Rollout {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long, default_value_t = 4)]
        lanes: usize,
        /// Steps per lane; defaults to the episode length.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Train {
            config,
            variant,
            seed,
            out,
        } => {
            let mut exp = ExperimentConfig::load(&config)?;
            if let Some(o) = out {
                exp.out_dir = o;
            }
            let v = match &variant {
                Some(name) => exp
                    .variant(name)
                    .ok_or_else(|| BenchError::Config(format!("no variant named {name:?}")))?,
                None => &exp.variants[0],
            };
            let seed = seed.unwrap_or(exp.seeds[0]);
            let exec = RayonExecutor::from_env()?;
            let log = train_variant(&exp, v, seed, &exec)?;
            write_run(&runs_dir(&exp), &v.name, seed, &log)?;
            for e in &log.evals {
                println!(
                    "step {:>8}  reward {:>10.4}  interventions/step {:.4}  violations {}",
                    e.step, e.eval_reward_mean, e.interventions_per_step, e.violations
                );
            }
            println!(
                "final reward {:.4}  env steps {}  violations {}  skipped updates {}",
                log.final_reward(),
                log.env_steps,
                log.violations,
                log.skipped_updates
            );
            Ok(0)
        }
        Command::Suite { config, out } => {
            let mut exp = ExperimentConfig::load(&config)?;
            if let Some(o) = out {
                exp.out_dir = o;
            }
            let suite = run_suite(&exp, threads_from_env()?)?;
            print!("{}", format_table(&suite.rows));
            for o in &suite.overhead {
                match o.ratio {
                    Some(r) => println!("{:<16} wall {:>8.1}s  overhead x{r:.2}", o.variant, o.wall_s),
                    None => println!("{:<16} wall {:>8.1}s", o.variant, o.wall_s),
                }
            }
            for f in suite.faults() {
                eprintln!("fault: {} seed {}: {}", f.variant, f.seed, f.message);
            }
            Ok(suite.faults().first().map_or(0, |f| f.exit_code))
        }
        Command::ValidateSafeSet { config, samples, seed } => {
            let exp = ExperimentConfig::load(&config)?;
            let env = exp.build_env()?;
            let samples = samples.unwrap_or(exp.validation.samples);
            let seed = seed.unwrap_or(exp.validation.seed);
            let report = validate_safe_set(env.as_ref(), &exp.safe_states, samples, seed)?;
            println!(
                "{} states: {} with an empty safe action set, {} escapes",
                report.samples, report.empty_action_sets, report.escapes
            );
            for c in &report.counterexamples {
                let s: Vec<String> = c.state.iter().map(|x| format!("{x:.6}")).collect();
                println!("  {:?} at [{}]", c.failure, s.join(", "));
            }
            if report.passed() {
                println!("safe set passed");
                Ok(0)
            } else {
                println!("safe set failed");
                Ok(3)
            }
        }
        Command::Report { runs } => {
            let (manifest, records) = load_runs(&runs.join("runs"))?;
            let rows = summary_table(&manifest, &records);
            write_summary_csv(&runs.join("summary.csv"), &rows)?;
            print!("{}", format_table(&rows));
            for o in overhead_report(&manifest, &records) {
                if let Some(r) = o.ratio {
                    println!("{:<16} overhead x{r:.2}", o.variant);
                }
            }
            Ok(0)
        }
        Command::Rollout {
            config,
            checkpoint,
            variant,
            lanes,
            steps,
            seed,
            out,
        } => {
            let exp = ExperimentConfig::load(&config)?;
            let v = match &variant {
                Some(name) => exp
                    .variant(name)
                    .ok_or_else(|| BenchError::Config(format!("no variant named {name:?}")))?,
                None => &exp.variants[0],
            };
            let agent = read_checkpoint(&checkpoint)?;
            let horizon = steps.unwrap_or(exp.build_env()?.params().episode_length);
            let buffer = record_rollout(&exp, v, &agent, lanes, horizon, seed)?;
            let meta = write_trajectory(&out, &format!("{:?}", exp.env_id).to_lowercase(), &buffer)?;
            println!("wrote {} rows to {}", meta.rows, out.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
