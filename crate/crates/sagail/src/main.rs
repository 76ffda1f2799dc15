use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sagail::{checkpoint, config, dataset, metrics, run, AppError, AppResult};
use sagail_core::demogen::{analyze_coverage, generate_demos, DemoProfile, COVERAGE_BINS};
use sagail_core::env::{EnvConfig, MultiGoalEnv};
use sagail_core::train::run_eval;

#[derive(Parser)]
#[command(name = "sagail", version, about = "Goal-conditioned RL from suboptimal demonstrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set ddpg.gamma=0.95`. Repeatable.
    #[arg(short = 's', long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a single seed.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory.
        #[arg(short, long)]
        out: PathBuf,
        /// Seed to train; defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from an existing checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint with exploration off.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Environment to evaluate on; must match the checkpoint's.
        #[arg(long)]
        env: Option<String>,
        /// Print per-episode records as JSON lines.
        #[arg(long)]
        episodes_json: bool,
    },
    /// Generate a demonstration dataset with the scripted controller.
    DemoGen {
        /// Environment id, e.g. `planarrotate` or `bitflip8`.
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `suboptimal`, `optimal`, or a TOML file with profile fields.
        #[arg(long, default_value = "suboptimal")]
        profile: String,
        #[arg(long)]
        noise_scale: Option<f64>,
        #[arg(long)]
        skew: Option<f64>,
        #[arg(long)]
        hold: Option<f64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Goal-distance coverage and quality of a demonstration dataset.
    DemoAnalyze {
        dataset: PathBuf,
        /// Also write the histogram bins as CSV.
        #[arg(long)]
        bins_csv: Option<PathBuf>,
    },
    /// Train every configured seed and aggregate the curves.
    Suite {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        resume: bool,
    },
    /// Summarize metrics CSVs (files or suite directories).
    Curves {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Success threshold for the "first sustained" column.
        #[arg(long, default_value_t = 0.6)]
        threshold: f64,
        /// Write the aggregate as CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn load_profile(name: &str) -> AppResult<DemoProfile> {
    match name {
        "suboptimal" => Ok(DemoProfile::suboptimal()),
        "optimal" => Ok(DemoProfile::optimal()),
        path => {
            let p = Path::new(path);
            let text = std::fs::read_to_string(p).map_err(AppError::io(p))?;
            toml::from_str(&text).map_err(|e| AppError::Config(format!("{path}: {}", e.message())))
        }
    }
}

fn stdout_err(e: std::io::Error) -> AppError {
    AppError::Runtime(format!("writing to stdout: {e}"))
}

fn execute(cmd: Command) -> AppResult<()> {
    let mut stdout = std::io::stdout().lock();
    match cmd {
        Command::Train { cfg, out, seed, resume } => {
            let cfg = config::load(cfg.config.as_deref(), &cfg.overrides)?;
            let seed = seed.or(cfg.seeds.first().copied()).unwrap_or(0);
            run::write_config(&cfg, &out)?;
            let demos = run::load_demos_for(&cfg)?;
            let t = run::train_seed(&cfg, seed, demos, &run::seed_dir(&out, seed), resume)?;
            let last = t.metrics.last().expect("at least the initial row");
            writeln!(stdout, "seed {seed}: {} epochs, final success {:.3}", t.epoch, last.success_rate).map_err(stdout_err)?;
        }
        Command::Eval {
            checkpoint: path,
            episodes,
            seed,
            env,
            episodes_json,
        } => {
            let t = checkpoint::load(&path)?;
            let env = match env {
                Some(id) => {
                    let e: EnvConfig = id.parse()?;
                    if e.build()?.spec() != t.spec() {
                        return Err(AppError::Config(format!("{id} does not match the checkpoint's environment {}", t.config.env.id())));
                    }
                    e
                }
                None => t.config.env,
            };
            let report = run_eval(&t.agent, &env, episodes, seed)?;
            if episodes_json {
                for r in &report.episodes {
                    writeln!(stdout, "{}", serde_json::to_string(r).map_err(|e| AppError::Runtime(e.to_string()))?).map_err(stdout_err)?;
                }
            }
            writeln!(stdout, "success_rate {:.4}\nmean_return {:.4}", report.success_rate, report.mean_return).map_err(stdout_err)?;
        }
        Command::DemoGen {
            env,
            count,
            seed,
            profile,
            noise_scale,
            skew,
            hold,
            out,
        } => {
            let env: EnvConfig = env.parse()?;
            let mut p = load_profile(&profile)?;
            if let Some(v) = noise_scale {
                p.noise_scale = v;
            }
            if let Some(v) = skew {
                p.coverage_skew = v;
            }
            if let Some(v) = hold {
                p.hold_fraction_target = v;
            }
            let data = generate_demos(&env, &p, count, seed)?;
            dataset::save(&data, &out)?;
            writeln!(stdout, "wrote {} demonstrations for {} to {}", data.trajectories.len(), env.id(), out.display()).map_err(stdout_err)?;
        }
        Command::DemoAnalyze { dataset: path, bins_csv } => {
            let data = dataset::load(&path)?;
            let r = analyze_coverage(&data)?;
            let third = COVERAGE_BINS / 3;
            writeln!(stdout, "env {}  trajectories {}  max distance {:.4}", r.env_id, r.trajectories, r.max_distance).map_err(stdout_err)?;
            writeln!(
                stdout,
                "mean goal distance {:.4}  mean hold fraction {:.3}  return mean {:.2} [{:.2}, {:.2}]",
                r.mean_goal_distance, r.mean_hold_fraction, r.mean_return, r.min_return, r.max_return
            )
            .map_err(stdout_err)?;
            writeln!(stdout, "mass in lowest {third} of {COVERAGE_BINS} bins: {:.3}", r.mass_in_lowest_bins(third)).map_err(stdout_err)?;
            writeln!(stdout, "{:>9} {:>9} {:>6} {:>7}", "lower", "upper", "count", "density").map_err(stdout_err)?;
            for b in &r.bins {
                writeln!(stdout, "{:>9.4} {:>9.4} {:>6} {:>7.3}  {}", b.lower, b.upper, b.count, b.density, "#".repeat((b.density * 50.0).round() as usize))
                    .map_err(stdout_err)?;
            }
            if let Some(p) = bins_csv {
                metrics::save_with(&p, |b| metrics::write_rows(&r.bins, b))?;
            }
        }
        Command::Suite { cfg, out, resume } => {
            let cfg = config::load(cfg.config.as_deref(), &cfg.overrides)?;
            let outcome = run::run_suite(&cfg, &out, resume)?;
            for (seed, e) in &outcome.failed {
                writeln!(stdout, "seed {seed} FAILED: {e}").map_err(stdout_err)?;
            }
            let runs: Vec<_> = outcome
                .completed
                .iter()
                .map(|(_, rows)| rows.iter().map(metrics::MetricsRow::from).collect())
                .collect();
            run::write_curves_summary(&runs, 0.6, &mut stdout)?;
        }
        Command::Curves { inputs, threshold, csv } => {
            let files = run::collect_metrics_files(&inputs)?;
            let runs = files.iter().map(|f| metrics::load_metrics(f)).collect::<AppResult<Vec<_>>>()?;
            run::write_curves_summary(&runs, threshold, &mut stdout)?;
            if let Some(p) = csv {
                let agg = metrics::aggregate(&runs);
                metrics::save_with(&p, |b| metrics::write_rows(&agg, b))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // Bad arguments are configuration errors (exit 1), not clap's default 2.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
