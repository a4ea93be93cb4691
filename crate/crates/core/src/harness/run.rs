use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, OracleInfo};
use crate::error::{JuiceError, Result};
use crate::linalg::CMatrix;
use crate::metrics::{self, NmseAccumulator};
use crate::model::Scenario;
use crate::rng;
use crate::solver::{self, JuiceSolution};

use super::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Proposed,
    IrL21,
    OracleMmse,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Proposed, Algorithm::IrL21, Algorithm::OracleMmse];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Proposed => "proposed",
            Algorithm::IrL21 => "ir_l21",
            Algorithm::OracleMmse => "oracle_mmse",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Scores of one algorithm on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub algorithm: Algorithm,
    pub tau_p: usize,
    pub trial_seed: u64,
    pub nmse_num: f64,
    pub nmse_den: f64,
    pub srr: f64,
    pub misses: usize,
    pub false_alarms: usize,
    /// Wall-clock seconds, or 0 when timing is not recorded.
    pub seconds: f64,
    pub iterations: usize,
    /// Set when the algorithm faulted; the scores are then meaningless.
    pub failure: Option<String>,
}

impl TrialResult {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// Everything one trial produced, for single-trial inspection.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub scenario: Scenario,
    pub results: Vec<TrialResult>,
    pub proposed: Option<JuiceSolution>,
    pub ir_l21: Option<JuiceSolution>,
}

/// Estimate, detected support and iteration count of one algorithm.
type Estimate = (CMatrix, Vec<usize>, usize);

/// Generates one instance and runs every algorithm on it.
pub fn run_trial(config: &ExperimentConfig, tau_p: usize, trial_seed: u64) -> Result<Vec<TrialResult>> {
    run_trial_detailed(config, tau_p, trial_seed).map(|o| o.results)
}

pub fn run_trial_detailed(config: &ExperimentConfig, tau_p: usize, trial_seed: u64) -> Result<TrialOutcome> {
    let noise_var = config.noise_var();
    let scenario = Scenario::generate(
        &config.system,
        &config.channel,
        config.pilots,
        tau_p,
        noise_var,
        trial_seed,
    )?;
    let inst = &scenario.instance;
    let truth = inst.activity.active_users();
    let timed = config.record_timing;

    let score = |algorithm: Algorithm, outcome: Result<Estimate>, seconds: f64| {
        let base = TrialResult {
            algorithm,
            tau_p,
            trial_seed,
            nmse_num: 0.0,
            nmse_den: 0.0,
            srr: 0.0,
            misses: 0,
            false_alarms: 0,
            seconds: if timed { seconds } else { 0.0 },
            iterations: 0,
            failure: None,
        };
        match outcome {
            Ok((x_hat, support, iterations)) => {
                let misses = truth.iter().filter(|i| !support.contains(i)).count();
                let false_alarms = support.iter().filter(|i| !truth.contains(i)).count();
                let m = metrics::TrialMetrics::evaluate(&inst.effective_channel, &x_hat, truth, support);
                TrialResult {
                    nmse_num: m.nmse_num,
                    nmse_den: m.nmse_den,
                    srr: m.srr,
                    misses,
                    false_alarms,
                    iterations,
                    ..base
                }
            }
            Err(e) => TrialResult {
                failure: Some(e.to_string()),
                ..base
            },
        }
    };
    let unpack = |s: Result<JuiceSolution>| -> (Result<Estimate>, Option<JuiceSolution>) {
        match s {
            Ok(sol) => {
                let est = (sol.x_hat.clone(), sol.support.clone(), sol.diagnostics.outer_iterations);
                (Ok(est), Some(sol))
            }
            Err(e) => (Err(e), None),
        }
    };

    let start = Instant::now();
    let proposed = solver::solve(
        &inst.received,
        &inst.pilots,
        &scenario.layout,
        &scenario.prior_guess,
        &scenario.precision_set.powers,
        &config.proposed.resolve(noise_var),
    );
    let (proposed, proposed_diag) = unpack(proposed);
    let proposed = score(Algorithm::Proposed, proposed, start.elapsed().as_secs_f64());

    let start = Instant::now();
    let ir = baselines::ir_l21_admm(&inst.received, &inst.pilots, &scenario.layout, &config.ir_l21.resolve(noise_var));
    let (ir, ir_diag) = unpack(ir);
    let ir = score(Algorithm::IrL21, ir, start.elapsed().as_secs_f64());

    let start = Instant::now();
    let oracle = OracleInfo::from_scenario(&scenario);
    let oracle_est = baselines::oracle_mmse(&inst.received, &inst.pilots, &oracle).map(|x| (x, truth.to_vec(), 0));
    let oracle = score(Algorithm::OracleMmse, oracle_est, start.elapsed().as_secs_f64());

    Ok(TrialOutcome {
        scenario,
        results: vec![proposed, ir, oracle],
        proposed: proposed_diag,
        ir_l21: ir_diag,
    })
}

/// Aggregated scores of one algorithm at one pilot length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub algorithm: Algorithm,
    pub tau_p: usize,
    /// Successful trials.
    pub trials: usize,
    pub nmse: Option<f64>,
    pub nmse_db: Option<f64>,
    pub srr: Option<f64>,
    pub mean_iters: Option<f64>,
    pub mean_seconds: Option<f64>,
}

/// Failed trials of one algorithm at one pilot length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureCount {
    pub algorithm: Algorithm,
    pub tau_p: usize,
    pub failures: usize,
    pub first_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<FailureCount>,
    /// Every trial result, ordered by sweep point, trial, algorithm.
    pub trials: Vec<TrialResult>,
}

impl ExperimentResults {
    pub fn row(&self, algorithm: Algorithm, tau_p: usize) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.algorithm == algorithm && r.tau_p == tau_p)
    }

    pub fn trials_of(&self, algorithm: Algorithm, tau_p: usize) -> impl Iterator<Item = &TrialResult> {
        self.trials
            .iter()
            .filter(move |t| t.algorithm == algorithm && t.tau_p == tau_p)
    }

    pub fn total_failures(&self) -> usize {
        self.failures.iter().map(|f| f.failures).sum()
    }
}

/// Runs every trial of the sweep on the current rayon pool.
///
/// Trials are collected in sweep order before aggregation, so the sums (and
/// the output) do not depend on the number of threads.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    config.validate()?;
    let work: Vec<(usize, usize, u64)> = config
        .sweep
        .iter()
        .enumerate()
        .flat_map(|(p, &tau_p)| {
            (0..config.trials).map(move |t| (tau_p, t, rng::trial_seed(config.seed, p as u64, t as u64)))
        })
        .collect();
    let per_trial: Vec<Vec<TrialResult>> = work
        .par_iter()
        .map(|&(tau_p, _, seed)| run_trial(config, tau_p, seed))
        .collect::<Result<_>>()?;
    let trials: Vec<TrialResult> = per_trial.into_iter().flatten().collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &tau_p in &config.sweep {
        for alg in Algorithm::ALL {
            let (row, fail) = aggregate(alg, tau_p, trials.iter().filter(|t| t.algorithm == alg && t.tau_p == tau_p), config.record_timing);
            rows.push(row);
            if fail.failures > 0 {
                failures.push(fail);
            }
        }
    }
    Ok(ExperimentResults { rows, failures, trials })
}

/// Runs the experiment on a dedicated pool of `threads` workers (0 lets
/// rayon choose).
pub fn run_experiment_with_threads(config: &ExperimentConfig, threads: usize) -> Result<ExperimentResults> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| JuiceError::Config(format!("cannot build a pool of {threads} threads: {e}")))?;
    pool.install(|| run_experiment(config))
}

fn aggregate<'a>(
    algorithm: Algorithm,
    tau_p: usize,
    results: impl Iterator<Item = &'a TrialResult>,
    timed: bool,
) -> (ResultRow, FailureCount) {
    let mut acc = NmseAccumulator::default();
    let (mut ok, mut srr, mut iters, mut secs) = (0usize, 0.0, 0.0, 0.0);
    let mut fail = FailureCount {
        algorithm,
        tau_p,
        failures: 0,
        first_reason: None,
    };
    for r in results {
        if let Some(reason) = &r.failure {
            fail.failures += 1;
            fail.first_reason.get_or_insert_with(|| reason.clone());
            continue;
        }
        ok += 1;
        // trials without signal energy carry no NMSE information
        if r.nmse_den > 0.0 {
            acc.add(r.nmse_num, r.nmse_den);
        }
        srr += r.srr;
        iters += r.iterations as f64;
        secs += r.seconds;
    }
    let nmse = acc.nmse();
    let mean = |v: f64| (ok > 0).then(|| v / ok as f64);
    let row = ResultRow {
        algorithm,
        tau_p,
        trials: ok,
        nmse,
        nmse_db: nmse.map(metrics::to_db),
        srr: mean(srr),
        mean_iters: mean(iters),
        mean_seconds: if timed { mean(secs) } else { None },
    };
    (row, fail)
}

/// Standard error of the mean of per-trial SRR values.
pub fn srr_standard_error<'a>(results: impl Iterator<Item = &'a TrialResult>) -> f64 {
    let v: Vec<f64> = results.filter(|r| !r.failed()).map(|r| r.srr).collect();
    standard_error(&v)
}

/// Delta-method standard error of a ratio-of-sums NMSE estimate.
pub fn nmse_standard_error<'a>(results: impl Iterator<Item = &'a TrialResult>) -> f64 {
    let pairs: Vec<(f64, f64)> = results
        .filter(|r| !r.failed() && r.nmse_den > 0.0)
        .map(|r| (r.nmse_num, r.nmse_den))
        .collect();
    let n = pairs.len() as f64;
    if pairs.len() < 2 {
        return f64::NAN;
    }
    let mean_den = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let ratio = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.iter().map(|p| p.1).sum::<f64>();
    let resid: Vec<f64> = pairs.iter().map(|&(a, b)| (a - ratio * b) / mean_den).collect();
    standard_error(&resid)
}

pub(crate) fn standard_error(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}
