//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any of them fails.

use std::process::ExitCode;
use std::time::Instant;

use juice::harness::{self, validate, Algorithm, ExperimentConfig, ExperimentResults};
use juice::model::{ActivityKind, PilotKind};

struct Line {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn report(lines: &mut Vec<Line>, id: usize, name: &'static str, passed: bool, detail: String) {
    println!("criterion {id} {name}: {} ({detail})", if passed { "PASS" } else { "FAIL" });
    lines.push(Line {
        id,
        name,
        passed,
        detail,
    });
}

fn run(cfg: &ExperimentConfig, threads: usize) -> (ExperimentResults, f64) {
    let start = Instant::now();
    let res = harness::run_experiment_with_threads(cfg, threads).expect("experiment");
    (res, start.elapsed().as_secs_f64())
}

fn csv_bytes(res: &ExperimentResults) -> Vec<u8> {
    let mut buf = Vec::new();
    harness::write_csv_to(&res.rows, &mut buf).expect("csv");
    buf
}

fn nmse(res: &ExperimentResults, alg: Algorithm, tau_p: usize) -> f64 {
    res.row(alg, tau_p).and_then(|r| r.nmse).unwrap_or(f64::NAN)
}

fn srr(res: &ExperimentResults, alg: Algorithm, tau_p: usize) -> f64 {
    res.row(alg, tau_p).and_then(|r| r.srr).unwrap_or(f64::NAN)
}

fn nmse_se(res: &ExperimentResults, alg: Algorithm, tau_p: usize) -> f64 {
    harness::nmse_standard_error(res.trials_of(alg, tau_p))
}

fn checks_line(lines: &mut Vec<Line>, id: usize, name: &'static str, reports: &[validate::CheckReport], limit: f64) {
    let secs: f64 = reports.iter().map(|r| r.seconds).sum();
    let ok = reports.iter().all(|r| r.passed()) && secs < limit;
    let detail = reports
        .iter()
        .map(|r| format!("{}: {}/{} ok, worst {:.1e}", r.name, r.cases - r.failures, r.cases, r.worst))
        .collect::<Vec<_>>()
        .join("; ");
    report(lines, id, name, ok, format!("{detail}; {secs:.1}s"));
}

fn main() -> ExitCode {
    let mut lines = Vec::new();

    checks_line(&mut lines, 1, "closed-form updates match numeric minimizers", &validate::check_updates(1000, 1), 60.0);
    checks_line(&mut lines, 2, "MM surrogate majorizes the log-sum prior", &[validate::check_mm_surrogate(1000, 2)], 60.0);
    checks_line(
        &mut lines,
        3,
        "Lagrangian non-increasing per primal sweep",
        &[validate::check_lagrangian_monotone(100, 20, 3)],
        60.0,
    );

    // noiseless, orthonormal pilots with tau_p = N
    let mut exact = ExperimentConfig::desk();
    exact.snr_db = None;
    exact.pilots = PilotKind::Orthonormal;
    exact.sweep = vec![exact.system.n_users];
    exact.trials = 10;
    let (res, secs) = run(&exact, 0);
    let tau = exact.sweep[0];
    let mut ok = res.total_failures() == 0 && secs < 60.0;
    let mut detail = Vec::new();
    for alg in [Algorithm::Proposed, Algorithm::IrL21] {
        let (e, s) = (nmse(&res, alg, tau), srr(&res, alg, tau));
        ok &= e < 1e-6 && s == 1.0;
        detail.push(format!("{}: nmse {e:.1e} srr {s}", alg.name()));
    }
    report(&mut lines, 4, "exact recovery when noiseless", ok, format!("{}; {secs:.1}s", detail.join(", ")));

    let mut dominance = ExperimentConfig::desk();
    dominance.sweep = vec![20, 30, 40];
    dominance.trials = 200;
    let (res, secs) = run(&dominance, 0);
    let mut ok = res.total_failures() == 0 && secs < 600.0;
    let mut detail = Vec::new();
    for &tau in &dominance.sweep {
        let (o, p, i) = (
            nmse(&res, Algorithm::OracleMmse, tau),
            nmse(&res, Algorithm::Proposed, tau),
            nmse(&res, Algorithm::IrL21, tau),
        );
        let se_op = nmse_se(&res, Algorithm::OracleMmse, tau).hypot(nmse_se(&res, Algorithm::Proposed, tau));
        let se_pi = nmse_se(&res, Algorithm::Proposed, tau).hypot(nmse_se(&res, Algorithm::IrL21, tau));
        ok &= p - o > -se_op && i - p > -se_pi;
        detail.push(format!("tau {tau}: {o:.4} <= {p:.4} <= {i:.4}"));
    }
    report(&mut lines, 5, "oracle <= proposed <= IR-l21 in NMSE", ok, format!("{}; {secs:.1}s", detail.join(", ")));

    let clustered = ExperimentConfig::desk();
    let (res6, secs) = run(&clustered, 1);
    let mut ok = res6.total_failures() == 0 && secs < 900.0;
    let mut detail = Vec::new();
    let mut margin_checked = false;
    for &tau in &clustered.sweep {
        let (p, i) = (srr(&res6, Algorithm::Proposed, tau), srr(&res6, Algorithm::IrL21, tau));
        ok &= p > i;
        if !margin_checked && p < 0.95 && i < 0.95 {
            ok &= p - i >= 0.05;
            margin_checked = true;
        }
        detail.push(format!("tau {tau}: {p:.3} vs {i:.3}"));
    }
    report(&mut lines, 6, "clustered activity: proposed SRR above IR-l21", ok, format!("{}; {secs:.1}s", detail.join(", ")));

    let mut random = ExperimentConfig::desk();
    random.system.activity = ActivityKind::Random;
    let (res, secs) = run(&random, 0);
    let mut ok = res.total_failures() == 0;
    let mut detail = Vec::new();
    for &tau in &random.sweep {
        let (p, i) = (srr(&res, Algorithm::Proposed, tau), srr(&res, Algorithm::IrL21, tau));
        ok &= p >= i - 0.02;
        detail.push(format!("tau {tau}: {p:.3} vs {i:.3}"));
    }
    let last = *random.sweep.last().expect("sweep");
    let gap_db = 10.0 * (nmse(&res, Algorithm::Proposed, last) / nmse(&res, Algorithm::OracleMmse, last)).log10();
    ok &= gap_db <= 3.0;
    detail.push(format!("nmse gap to oracle at tau {last}: {gap_db:.2} dB"));
    report(&mut lines, 7, "random activity: SRR within 0.02 of IR-l21", ok, format!("{}; {secs:.1}s", detail.join(", ")));

    let (res8, secs) = run(&clustered, 2);
    let (a, b) = (csv_bytes(&res6), csv_bytes(&res8));
    report(
        &mut lines,
        8,
        "CSV identical across thread counts",
        a == b && !a.is_empty(),
        format!("1 vs 2 threads, {} bytes; {secs:.1}s", a.len()),
    );

    let failed: Vec<_> = lines.iter().filter(|l| !l.passed).collect();
    println!("acceptance: {}/{} criteria passed", lines.len() - failed.len(), lines.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        for l in failed {
            eprintln!("failed criterion {} {}: {}", l.id, l.name, l.detail);
        }
        ExitCode::FAILURE
    }
}
