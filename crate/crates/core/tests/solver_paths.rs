use juice::baselines;
use juice::harness::{self, Algorithm, ExperimentConfig};
use juice::metrics::{self, SetDifference};
use juice::model::{ActivityKind, PilotKind, Scenario, SystemParams};
use juice::solver::{self, SolverParams};
use proptest::prelude::*;

fn small_system(activity: ActivityKind) -> SystemParams {
    SystemParams {
        n_antennas: 4,
        n_users: 24,
        n_clusters: 6,
        n_active: 4,
        activity,
        active_clusters: 2,
    }
}

fn tiny_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk();
    cfg.system = small_system(ActivityKind::Clustered);
    cfg.sweep = vec![8, 12];
    cfg.trials = 6;
    cfg
}

fn scenario(activity: ActivityKind, tau_p: usize, seed: u64) -> Scenario {
    Scenario::generate(&small_system(activity), &Default::default(), PilotKind::Bernoulli, tau_p, 0.1, seed).unwrap()
}

#[test]
fn ir_l21_is_the_degenerate_solver() {
    let sc = scenario(ActivityKind::Random, 12, 5);
    let inst = &sc.instance;
    let params = SolverParams::default();
    let base = baselines::ir_l21_admm(&inst.received, &inst.pilots, &sc.layout, &params).unwrap();
    // priors and powers must not matter once the covariance terms are off
    let direct = solver::solve(
        &inst.received,
        &inst.pilots,
        &sc.layout,
        &sc.prior_guess,
        &sc.precision_set.powers,
        &params.ir_l21(),
    )
    .unwrap();
    assert_eq!(base.x_hat, direct.x_hat);
    assert_eq!(base.support, direct.support);
    assert_eq!(base.diagnostics.outer_iterations, direct.diagnostics.outer_iterations);
}

#[test]
fn thread_count_does_not_change_csv() {
    let cfg = tiny_config();
    let csv = |threads| {
        let res = harness::run_experiment_with_threads(&cfg, threads).unwrap();
        let mut buf = Vec::new();
        harness::write_csv_to(&res.rows, &mut buf).unwrap();
        buf
    };
    assert_eq!(csv(1), csv(3));
}

#[test]
fn emitted_results_read_back() {
    let cfg = tiny_config();
    let res = harness::run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    harness::emit_results(&res, &cfg, &path).unwrap();
    assert_eq!(harness::read_csv(&path).unwrap(), res.rows);
    let side = harness::read_sidecar(&harness::sidecar_path(&path)).unwrap();
    assert_eq!(side.seed, cfg.seed);
    assert_eq!(res.rows.len(), cfg.sweep.len() * Algorithm::ALL.len());
}

#[test]
fn oracle_always_finds_the_support() {
    let res = harness::run_experiment(&tiny_config()).unwrap();
    for tau in [8, 12] {
        assert_eq!(res.row(Algorithm::OracleMmse, tau).unwrap().srr, Some(1.0));
    }
}

#[test]
fn config_survives_toml_round_trip() {
    let mut cfg = ExperimentConfig::paper();
    cfg.snr_db = None;
    cfg.proposed.solver.rho = 2.5;
    let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(back, cfg);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solver_output_is_well_formed(seed in any::<u64>(), tau_p in 6usize..14, clustered in any::<bool>()) {
        let activity = if clustered { ActivityKind::Clustered } else { ActivityKind::Random };
        let sc = scenario(activity, tau_p, seed);
        let inst = &sc.instance;
        let sol = solver::solve(
            &inst.received,
            &inst.pilots,
            &sc.layout,
            &sc.prior_guess,
            &sc.precision_set.powers,
            &SolverParams::default(),
        )
        .unwrap();
        prop_assert_eq!(sol.x_hat.shape(), inst.effective_channel.shape());
        prop_assert!(sol.x_hat.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        prop_assert!(sol.support.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(sol.support.iter().all(|&i| i < sc.layout.n_users()));
        let s = metrics::srr(inst.activity.active_users(), &sol.support, SetDifference::Symmetric);
        prop_assert!((0.0..=1.0).contains(&s));
    }
}
