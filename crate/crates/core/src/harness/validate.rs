//! Randomized checks of the solver building blocks against independent
//! numeric references.
//!
//! * Each closed-form ADMM update is compared with a generic minimizer of its
//!   subproblem: conjugate gradients for the quadratic `Z` and `V` steps, an
//!   iteratively reweighted fixed point for the `X` step and damped Newton
//!   for the `Σ` step.
//! * The MM surrogate must upper-bound the log-sum prior and touch it at the
//!   expansion point.
//! * With frozen weights the augmented Lagrangian must not increase across
//!   the phases of a primal sweep.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::linalg::{self, c, CMatrix};
use crate::model::ClusterLayout;
use crate::priors::{self, LoopKind};
use crate::rng;
use crate::solver::{self, AdmmBlock, FrozenWeights, GramCache, Problem, SolverParams, SweepPhase};

/// Outcome of one randomized check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest error seen, in the units of `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub seconds: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }

    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            cases: 0,
            failures: 0,
            worst: 0.0,
            tolerance,
            seconds: 0.0,
        }
    }

    fn observe(&mut self, err: f64) {
        self.cases += 1;
        if !(err <= self.tolerance) {
            self.failures += 1;
        }
        if err.is_nan() || err > self.worst {
            self.worst = err;
        }
    }
}

impl std::fmt::Display for CheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<28} {} cases={} failures={} worst={:.3e} tol={:.0e} ({:.2}s)",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.cases,
            self.failures,
            self.worst,
            self.tolerance,
            self.seconds
        )
    }
}

/// A small random ADMM state with everything the updates need.
#[derive(Debug, Clone)]
pub struct SmallInstance {
    pub layout: ClusterLayout,
    pub y: CMatrix,
    pub phi: CMatrix,
    pub b: Vec<CMatrix>,
    pub b_inv: Vec<CMatrix>,
    pub sigma: Vec<CMatrix>,
    pub powers: Vec<f64>,
    pub block: AdmmBlock,
    pub params: SolverParams,
}

fn random_hpd(r: &mut ChaCha8Rng, m: usize) -> CMatrix {
    let a = rng::complex_normal_matrix(r, m, m, 1.0);
    let shift = r.random_range(0.2..1.0);
    linalg::hermitian_part(&(&a * a.adjoint() / c(m as f64) + linalg::identity(m) * c(shift)))
}

/// Draws `M ≤ 4`, `N ≤ 6`, `τ_p ≤ 4` and random iterates, duals and weights.
pub fn random_small_instance(seed: u64) -> SmallInstance {
    let mut r = rng::rng_for(seed, 0);
    let m = r.random_range(1..=4usize);
    let (n, n_clusters) = [(2, 1), (2, 2), (3, 1), (4, 2), (6, 2), (6, 3)][r.random_range(0..6usize)];
    let tau = r.random_range(1..=4usize);
    let layout = ClusterLayout::new(n, n_clusters).expect("valid small layout");
    let mat = |r: &mut ChaCha8Rng, rows, cols| rng::complex_normal_matrix(r, rows, cols, 1.0);
    let phi = mat(&mut r, tau, n) / c((tau as f64).sqrt());
    let y = mat(&mut r, tau, m);
    let b: Vec<CMatrix> = (0..n_clusters).map(|_| random_hpd(&mut r, m)).collect();
    let b_inv = b.iter().map(|bl| linalg::inverse_hpd(bl, "B").expect("HPD")).collect();
    let sigma = (0..n_clusters).map(|_| random_hpd(&mut r, m)).collect();
    let powers = (0..n).map(|_| r.random_range(0.5..1.5)).collect();
    let mut block = AdmmBlock::zeros(m, (0..n).collect());
    block.x = mat(&mut r, m, n);
    block.z = mat(&mut r, m, n);
    block.v = mat(&mut r, m, n);
    block.lambda_z = mat(&mut r, m, n) * c(0.5);
    block.lambda_v = mat(&mut r, m, n) * c(0.5);
    // a few zero columns exercise the shrinkage edge cases
    if r.random_bool(0.3) {
        let k = r.random_range(0..n);
        block.x.column_mut(k).fill(linalg::ZERO);
    }
    let beta2 = r.random_range(0.01..1.0);
    let params = SolverParams {
        beta1: r.random_range(0.0..2.0),
        beta2,
        beta3: r.random_range(0.01..1.0),
        rho: r.random_range(0.2..5.0),
        eps0: r.random_range(1e-3..0.5),
        dof_d: r.random_range(0.5..3.0),
        ..SolverParams::default()
    };
    SmallInstance {
        layout,
        y,
        phi,
        b,
        b_inv,
        sigma,
        powers,
        block,
        params,
    }
}

fn rel_err(a: &CMatrix, reference: &CMatrix) -> f64 {
    linalg::fro_norm(&(a - reference)) / linalg::fro_norm(reference).max(1.0)
}

fn re_dot(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(p, q)| (p.conj() * q).re).sum()
}

/// Minimizes a convex quadratic given only its (real) gradient, by linear
/// conjugate gradients over the real coordinates of a complex matrix.
pub fn cg_minimize(grad: impl Fn(&CMatrix) -> CMatrix, start: &CMatrix) -> CMatrix {
    let zero = CMatrix::zeros(start.nrows(), start.ncols());
    let g0 = grad(&zero);
    let apply = |p: &CMatrix| grad(p) - &g0;
    let mut x = start.clone();
    let mut res = -grad(&x);
    let mut dir = res.clone();
    let mut rr = re_dot(&res, &res);
    let limit = 4 * start.len() + 50;
    for _ in 0..limit {
        if rr.sqrt() < 1e-15 {
            break;
        }
        let ad = apply(&dir);
        let step = rr / re_dot(&dir, &ad);
        x += &dir * c(step);
        res -= ad * c(step);
        let rr_new = re_dot(&res, &res);
        dir = &res + dir * c(rr_new / rr);
        rr = rr_new;
    }
    x
}

/// Minimizer of `α‖x‖ + ρ‖x − c‖²` by the reweighted fixed point
/// `x ← 2ρ c / (α/‖x‖ + 2ρ)`, started at `c`.
pub fn irls_shrink(center: &linalg::CVector, alpha: f64, rho: f64) -> linalg::CVector {
    let mut x = center.clone();
    for _ in 0..200_000 {
        let norm = x.norm();
        if norm < 1e-300 {
            return x * c(0.0);
        }
        let next = center * c(2.0 * rho / (alpha / norm + 2.0 * rho));
        let done = (&next - &x).norm() <= 1e-16 * center.norm().max(1e-300);
        x = next;
        if done {
            break;
        }
    }
    // values that collapsed below round-off are the zero solution
    if x.norm() <= 1e-12 * center.norm() {
        x *= c(0.0);
    }
    x
}

/// Minimizer of `tr(AΣ) − μ log|Σ|` over Hermitian positive-definite `Σ` by
/// damped Newton steps `Δ = Σ − ΣAΣ/μ` with backtracking.
pub fn newton_sigma(a: &CMatrix, mu: f64) -> CMatrix {
    let m = a.nrows();
    let objective = |s: &CMatrix| -> Option<f64> {
        let ld = linalg::logdet_hpd(s).ok()?;
        Some(linalg::trace(&(a * s)).re - mu * ld)
    };
    let mut s = linalg::identity(m) * c(mu / linalg::fro_norm(a));
    let mut f = objective(&s).expect("initial point is HPD");
    for _ in 0..200 {
        let dir = linalg::hermitian_part(&(&s - &s * a * &s / c(mu)));
        if linalg::fro_norm(&dir) <= 1e-15 * linalg::fro_norm(&s) {
            break;
        }
        let mut t = 1.0;
        loop {
            let trial = linalg::hermitian_part(&(&s + &dir * c(t)));
            match objective(&trial) {
                Some(ft) if ft <= f + 1e-14 * f.abs().max(1.0) => {
                    s = trial;
                    f = ft;
                    break;
                }
                _ if t < 1e-12 => return s,
                _ => t *= 0.5,
            }
        }
    }
    s
}

/// The four closed-form updates against their numeric references, plus the
/// stationarity of the `Σ` update. Returns reports for Z, V, X, Σ and
/// the Σ gradient.
pub fn check_updates(cases: usize, seed: u64) -> Vec<CheckReport> {
    let start = Instant::now();
    let mut rz = CheckReport::new("Z-update vs CG", 1e-6);
    let mut rv = CheckReport::new("V-update vs CG", 1e-6);
    let mut rx = CheckReport::new("X-update vs IRLS", 1e-6);
    let mut rs = CheckReport::new("Σ-update vs Newton", 1e-6);
    let mut rg = CheckReport::new("Σ-update gradient norm", 1e-8);
    for case in 0..cases {
        let inst = random_small_instance(rng::sub_seed(seed, case as u64));
        let p = &inst.params;
        let blk = &inst.block;
        let rho = p.rho;
        let users = &blk.users;
        let layout = &inst.layout;

        // Z: ½‖Y − ΦZᵀ‖² + ρ/2‖X − Z + Λ_z/ρ‖²
        let cache = GramCache::new(&inst.y, &inst.phi, users, rho).expect("Gram");
        let z_cf = solver::update_z(&blk.x, &blk.lambda_z, &cache);
        let target_z = &blk.x + &blk.lambda_z / c(rho);
        let phi_conj = linalg::conj(&inst.phi);
        let z_ref = cg_minimize(
            |z| -(&inst.y - &inst.phi * z.transpose()).transpose() * &phi_conj + (z - &target_z) * c(rho),
            &blk.z,
        );
        rz.observe(rel_err(&z_cf, &z_ref));

        // V: β₂ Σ vᴴΣ_l v + ρ/2‖X − V + Λ_v/ρ‖²
        let v_cf = solver::update_v(&blk.x, &blk.lambda_v, &inst.sigma, rho, p.beta2, layout, users).expect("V");
        let target_v = &blk.x + &blk.lambda_v / c(rho);
        let v_ref = cg_minimize(
            |v| {
                let mut g = (v - &target_v) * c(rho);
                for (k, &i) in users.iter().enumerate() {
                    let sv = &inst.sigma[layout.cluster_of(i)] * v.column(k) * c(2.0 * p.beta2);
                    let mut col = g.column_mut(k);
                    col += sv;
                }
                g
            },
            &blk.v,
        );
        rv.observe(rel_err(&v_cf, &v_ref));

        // X: Σ α_i‖x_i‖ + ρ/2‖X − Z + Λ_z/ρ‖² + ρ/2‖X − V + Λ_v/ρ‖²
        let mut r = rng::rng_for(seed, 1_000 + case as u64);
        let alpha: Vec<f64> = users.iter().map(|_| r.random_range(0.0..4.0)).collect();
        let x_cf = solver::update_x(&blk.z, &blk.v, &blk.lambda_z, &blk.lambda_v, &alpha, rho);
        let center = (&blk.z + &blk.lambda_z * c(-1.0 / rho) + &blk.v - &blk.lambda_v / c(rho)) * c(0.5);
        let mut x_ref = CMatrix::zeros(center.nrows(), center.ncols());
        for k in 0..users.len() {
            x_ref.set_column(k, &irls_shrink(&center.column(k).into_owned(), alpha[k], rho));
        }
        rx.observe(linalg::fro_norm(&(&x_cf - &x_ref)) / linalg::fro_norm(&center).max(1.0));

        // Σ: β₂ Σ v_iᴴΣ_l v_i − μ_l log|Σ_l| + β₃L tr(B_l⁻¹Σ_l)
        let mu: Vec<f64> = (0..layout.n_clusters()).map(|_| r.random_range(0.1..3.0)).collect();
        let mut sigma = inst.sigma.clone();
        let clusters: Vec<usize> = (0..layout.n_clusters()).collect();
        solver::update_sigma(&mut sigma, &v_cf, users, &inst.b_inv, &mu, p.beta2, p.beta3, layout, &clusters)
            .expect("Σ");
        let l = layout.users_per_cluster() as f64;
        for cl in clusters {
            let mut a = &inst.b_inv[cl] * c(p.beta3 * l);
            for i in layout.members(cl) {
                let col = v_cf.column(i);
                a += col * col.adjoint() * c(p.beta2);
            }
            let a = linalg::hermitian_part(&a);
            let s_ref = newton_sigma(&a, mu[cl]);
            rs.observe(rel_err(&sigma[cl], &s_ref));
            let inv = linalg::inverse_hpd(&sigma[cl], "Σ").expect("HPD Σ");
            rg.observe(linalg::fro_norm(&(&a - inv * c(mu[cl]))));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let mut out = vec![rz, rv, rx, rs, rg];
    for r in &mut out {
        r.seconds = secs;
    }
    out
}

/// Surrogate `≥` exact prior at random probes, equality at the expansion
/// point, for both the cluster and the separable prior.
pub fn check_mm_surrogate(pairs: usize, seed: u64) -> CheckReport {
    let start = Instant::now();
    let mut rep = CheckReport::new("MM surrogate majorizes", 1e-10);
    for case in 0..pairs {
        let inst = random_small_instance(rng::sub_seed(seed ^ 0xA5A5, case as u64));
        let mut r = rng::rng_for(seed, 50_000 + case as u64);
        let layout = &inst.layout;
        let (m, n) = (inst.block.x.nrows(), layout.n_users());
        let scale = r.random_range(0.01..10.0);
        let expansion = inst.block.x.clone() * c(scale);
        let mut probe = rng::complex_normal_matrix(&mut r, m, n, scale * scale);
        if r.random_bool(0.2) {
            probe.column_mut(0).fill(linalg::ZERO);
        }
        let eps0 = inst.params.eps0;
        let users: Vec<usize> = (0..n).filter(|_| r.random_bool(0.7)).collect();
        for kind in [LoopKind::Outer, LoopKind::Inner] {
            let w = priors::mm_weights(&expansion, layout, &users, eps0, kind);
            let exact_probe = priors::exact_prior(&w, &probe, layout);
            let sur_probe = priors::surrogate_value(&w, &probe, &expansion, layout);
            let tol_scale = exact_probe.abs().max(1.0);
            // positive values mean the bound is violated
            rep.observe(((exact_probe - sur_probe) / tol_scale).max(0.0));
            let exact_at = priors::exact_prior(&w, &expansion, layout);
            let sur_at = priors::surrogate_value(&w, &expansion, &expansion, layout);
            rep.observe((exact_at - sur_at).abs() / exact_at.abs().max(1.0));
        }
    }
    rep.seconds = start.elapsed().as_secs_f64();
    rep
}

/// Runs `iters` ADMM iterations per random instance and checks that the
/// augmented Lagrangian with frozen weights never increases within a sweep.
pub fn check_lagrangian_monotone(runs: usize, iters: usize, seed: u64) -> CheckReport {
    let start = Instant::now();
    let mut rep = CheckReport::new("Lagrangian non-increasing", 1e-8);
    for case in 0..runs {
        let inst = random_small_instance(rng::sub_seed(seed ^ 0x5A5A, case as u64));
        let p = inst.params.clone();
        let problem = Problem::new(&inst.y, &inst.phi, &inst.layout, &inst.b, &inst.powers).expect("problem");
        let cache = GramCache::new(&inst.y, &inst.phi, &inst.block.users, p.rho).expect("Gram");
        let mut block = inst.block.clone();
        let mut sigma = inst.sigma.clone();
        let prior = if case % 2 == 0 {
            solver::OuterPrior::Cluster
        } else {
            solver::OuterPrior::Separable
        };
        for _ in 0..iters {
            let mm = solver::block_mm_weights(&block, prior, &inst.layout, p.eps0);
            let frozen: FrozenWeights =
                solver::freeze_weights(&block, &mm.weights, &sigma, &problem, &p, true).expect("weights");
            let lag = |b: &AdmmBlock, s: &[CMatrix]| {
                solver::augmented_lagrangian(
                    b,
                    s,
                    &problem.b_inv,
                    &inst.y,
                    &inst.phi,
                    &frozen,
                    p.beta2,
                    p.beta3,
                    p.rho,
                    &inst.layout,
                )
                .expect("Lagrangian")
            };
            let mut prev = lag(&block, &sigma);
            let mut worst = 0.0f64;
            solver::primal_sweep(&mut block, &mut sigma, &frozen, &cache, &problem, &p, |_: SweepPhase, b, s| {
                let now = lag(b, s);
                worst = worst.max((now - prev) / prev.abs().max(1.0));
                prev = now;
            })
            .expect("sweep");
            rep.observe(worst.max(0.0));
            let (x, z, v) = (&block.x, &block.z, &block.v);
            solver::update_duals(x, z, v, &mut block.lambda_z, &mut block.lambda_v, p.rho);
        }
    }
    rep.seconds = start.elapsed().as_secs_f64();
    rep
}

/// Every check at the given scale (`cases` random instances each).
pub fn run_all(cases: usize, seed: u64) -> Vec<CheckReport> {
    let mut out = check_updates(cases, seed);
    out.push(check_mm_surrogate(cases, seed));
    out.push(check_lagrangian_monotone(cases.div_ceil(10).max(1), 20, seed));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn references_on_known_problems() {
        let center = linalg::CVector::from_vec(vec![c(3.0), c(4.0)]);
        let x = irls_shrink(&center, 4.0, 1.0);
        assert!((x[0].re - 1.8).abs() < 1e-9 && (x[1].re - 2.4).abs() < 1e-9);
        assert_eq!(irls_shrink(&center, 20.0, 1.0).norm(), 0.0);

        let a = linalg::identity(2) * c(4.0);
        let s = newton_sigma(&a, 2.0);
        assert!(linalg::fro_norm(&(s - linalg::identity(2) * c(0.5))) < 1e-12);

        // ½‖z − 1‖² → z = 1
        let z = cg_minimize(|z| z - CMatrix::from_element(2, 1, c(1.0)), &CMatrix::zeros(2, 1));
        assert!(linalg::fro_norm(&(z - CMatrix::from_element(2, 1, c(1.0)))) < 1e-14);
    }

    #[test]
    fn quick_suite_passes() {
        for r in run_all(20, 1) {
            assert!(r.passed(), "{r}");
        }
    }
}
