use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use juice::harness::{self, validate, ExperimentConfig};
use juice::model::ActivityKind;
use juice::rng;

#[derive(Parser)]
#[command(name = "juice", version, about = "Clustered-activity JUICE simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo sweep and write CSV + JSON results.
    Run {
        #[command(flatten)]
        common: Common,
        /// Override the number of trials per sweep point.
        #[arg(long)]
        trials: Option<usize>,
        /// Also write every per-trial result as JSON.
        #[arg(long)]
        dump_trials: Option<PathBuf>,
    },
    /// Run a single seeded trial and dump its scores and solver diagnostics as JSON.
    Trial {
        #[command(flatten)]
        common: Common,
        /// Pilot length (defaults to the first sweep point).
        #[arg(long)]
        tau_p: Option<usize>,
        /// Trial index at that sweep point.
        #[arg(long, default_value_t = 0)]
        index: u64,
        /// Use this trial seed directly instead of deriving it from the index.
        #[arg(long)]
        trial_seed: Option<u64>,
    },
    /// Run the randomized update/surrogate/Lagrangian checks.
    Validate {
        /// Random instances per check.
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in configuration: desk or paper.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path (CSV for `run`, JSON for `trial`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    activity: Option<ActivityKind>,
    #[arg(long, allow_negative_numbers = true)]
    snr_db: Option<f64>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => ExperimentConfig::preset(name)?,
            (None, None) => ExperimentConfig::desk(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(kind) = self.activity {
            cfg.system.activity = kind;
        }
        if let Some(snr) = self.snr_db {
            cfg.snr_db = Some(snr);
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"))
}

fn run(common: &Common, trials: Option<usize>, dump: Option<&PathBuf>) -> Result<()> {
    let mut cfg = common.resolve()?;
    if let Some(t) = trials {
        cfg.trials = t;
        cfg.validate()?;
    }
    let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from("results.csv"));
    let results = harness::run_experiment_with_threads(&cfg, common.threads)?;
    harness::emit_results(&results, &cfg, &out)?;
    if let Some(path) = dump {
        let text = serde_json::to_string(&results.trials)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{:<12} {:>5} {:>6} {:>10} {:>8} {:>7}", "algorithm", "tau_p", "trials", "nmse_db", "srr", "iters");
    for r in &results.rows {
        println!(
            "{:<12} {:>5} {:>6} {:>10} {:>8} {:>7}",
            r.algorithm.name(),
            r.tau_p,
            r.trials,
            fmt_opt(r.nmse_db, 2),
            fmt_opt(r.srr, 4),
            fmt_opt(r.mean_iters, 1)
        );
    }
    for f in &results.failures {
        eprintln!(
            "warning: {} failed {} trial(s) at tau_p={}: {}",
            f.algorithm,
            f.failures,
            f.tau_p,
            f.first_reason.as_deref().unwrap_or("")
        );
    }
    eprintln!("wrote {} and {}", out.display(), harness::sidecar_path(&out).display());
    Ok(())
}

fn trial(common: &Common, tau_p: Option<usize>, index: u64, trial_seed: Option<u64>) -> Result<()> {
    let cfg = common.resolve()?;
    let tau_p = tau_p.unwrap_or(cfg.sweep[0]);
    let point = cfg.sweep.iter().position(|&t| t == tau_p).unwrap_or(0) as u64;
    let seed = trial_seed.unwrap_or_else(|| rng::trial_seed(cfg.seed, point, index));
    let outcome = harness::run_trial_detailed(&cfg, tau_p, seed)?;
    let inst = &outcome.scenario.instance;
    let describe = |sol: &Option<juice::solver::JuiceSolution>| {
        sol.as_ref().map(|s| {
            serde_json::json!({
                "support": s.support,
                "detected_clusters": s.detected_clusters,
                "column_norms": juice::linalg::col_norms(&s.x_hat),
                "diagnostics": s.diagnostics,
            })
        })
    };
    let dump = serde_json::json!({
        "tau_p": tau_p,
        "trial_seed": seed,
        "active_users": inst.activity.active_users(),
        "true_column_norms": juice::linalg::col_norms(&inst.effective_channel),
        "results": outcome.results,
        "proposed": describe(&outcome.proposed),
        "ir_l21": describe(&outcome.ir_l21),
    });
    let text = serde_json::to_string_pretty(&dump)?;
    match &cfg.output {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run_validate(cases: usize, seed: u64) -> Result<bool> {
    if cases == 0 {
        bail!("--cases must be at least 1");
    }
    let reports = validate::run_all(cases, seed);
    for r in &reports {
        println!("{r}");
    }
    Ok(reports.iter().all(|r| r.passed()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run {
            common,
            trials,
            dump_trials,
        } => run(common, *trials, dump_trials.as_ref()).map(|_| true),
        Command::Trial {
            common,
            tau_p,
            index,
            trial_seed,
        } => trial(common, *tau_p, *index, *trial_seed).map(|_| true),
        Command::Validate { cases, seed } => run_validate(*cases, *seed),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
