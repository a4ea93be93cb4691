//! Two-level MAP-ADMM solver.
//!
//! The outer loop runs ADMM on the MM-linearized problem with the
//! cluster-sparsity prior (weights `q`). Every `inner_period` outer
//! iterations the active clusters `Ŝ` are detected and an inner ADMM loop
//! with the separable prior (weights `g`) runs on the columns of `Ŝ` only;
//! its iterates are copied back into the outer state.
//!
//! MM weights are re-evaluated at the current iterate on every ADMM
//! iteration, so one ADMM iteration is also one MM step.

mod lagrangian;
mod updates;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use lagrangian::{augmented_lagrangian, FrozenWeights};
pub use updates::{
    compute_alpha, compute_mu, detect_active_clusters, group_shrink, update_duals, update_sigma, update_v,
    update_x, update_z, GramCache,
};

use crate::error::{JuiceError, Result};
use crate::linalg::{self, CMatrix};
use crate::model::ClusterLayout;
use crate::priors::{self, MmWeights, PriorWeights};

/// Sparsity prior driving the outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OuterPrior {
    /// Cluster log-sum prior (weights `q`).
    Cluster,
    /// Separable log-sum prior on every user (weights `g`).
    Separable,
}

/// Column-norm threshold used for cluster detection and the final support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum DetectThreshold {
    Absolute(f64),
    /// Fraction of the largest column norm of the current iterate.
    RelativeToMax(f64),
}

impl DetectThreshold {
    pub fn resolve(&self, x: &CMatrix) -> f64 {
        match *self {
            DetectThreshold::Absolute(eps) => eps,
            DetectThreshold::RelativeToMax(frac) => {
                let max = linalg::col_norms(x).into_iter().fold(0.0, f64::max);
                // an all-zero iterate must detect nothing
                if max == 0.0 {
                    f64::INFINITY
                } else {
                    frac * max
                }
            }
        }
    }
}

/// Starting point of the iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Initialization {
    /// `X⁰ = Z⁰ = V⁰ = 0`; the first MM step uses unit weights because the
    /// expansion point `0` would give every user the weight `1/ε₀`.
    Zero,
    /// `X⁰ = Z⁰ = V⁰ = Yᵀ Φ* (Φᵀ Φ* + ρI)⁻¹` (ridge estimate).
    Ridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub rho: f64,
    pub eps0: f64,
    /// Wishart shape `d = v − M + 1`.
    pub dof_d: f64,
    /// Threshold for the active-cluster set `Ŝ`.
    pub eps_detect: DetectThreshold,
    /// Threshold for the reported user support.
    pub eps_support: DetectThreshold,
    pub eps_conv: f64,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    /// Outer iterations between inner-loop invocations (`K_c`).
    pub inner_period: usize,
    pub outer_prior: OuterPrior,
    pub inner_loop: bool,
    /// Keep the `p_iᴹ` factor in the inner-loop `α` and `μ`.
    pub inner_power_factor: bool,
    /// Zero the columns outside `Ŝ` after each inner stage.
    pub prune_undetected: bool,
    pub init: Initialization,
    /// Evaluate the MM-linearized objective on every iteration.
    pub track_objective: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            beta1: 12.0,
            beta2: 0.1,
            beta3: 0.1,
            rho: 3.0,
            eps0: 1.0,
            dof_d: 1.0,
            eps_detect: DetectThreshold::RelativeToMax(0.1),
            eps_support: DetectThreshold::RelativeToMax(0.1),
            eps_conv: 1e-3,
            max_outer_iters: 200,
            max_inner_iters: 50,
            inner_period: 10,
            outer_prior: OuterPrior::Cluster,
            inner_loop: true,
            inner_power_factor: true,
            prune_undetected: true,
            init: Initialization::Ridge,
            track_objective: false,
        }
    }
}

impl SolverParams {
    /// Reweighted group-lasso configuration: separable weights on all users,
    /// no cluster stage and no covariance estimation.
    pub fn ir_l21(mut self) -> Self {
        self.beta2 = 0.0;
        self.beta3 = 0.0;
        self.outer_prior = OuterPrior::Separable;
        self.inner_loop = false;
        self
    }

    pub fn estimates_covariance(&self) -> bool {
        self.beta2 != 0.0 || self.beta3 != 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(JuiceError::Config(msg));
        if !(self.rho > 0.0) {
            return bad(format!("ρ must be positive, got {}", self.rho));
        }
        if !(self.eps0 > 0.0) {
            return bad(format!("ε₀ must be positive, got {}", self.eps0));
        }
        if !(self.dof_d > 0.0) {
            return bad(format!("Wishart shape d must be positive, got {}", self.dof_d));
        }
        if self.beta1 < 0.0 || self.beta2 < 0.0 || self.beta3 < 0.0 {
            return bad("prior weights β must be nonnegative".into());
        }
        if self.estimates_covariance() && self.beta3 == 0.0 {
            return bad("covariance estimation (β₂ > 0) needs β₃ > 0 to keep Σ updates well-posed".into());
        }
        if self.inner_period == 0 || self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return bad("iteration caps and the inner period must be at least 1".into());
        }
        for t in [self.eps_detect, self.eps_support] {
            match t {
                DetectThreshold::Absolute(e) | DetectThreshold::RelativeToMax(e) if e > 0.0 => {}
                _ => return bad("detection thresholds must be positive".into()),
            }
        }
        Ok(())
    }
}

/// ADMM iterates restricted to a working set of users.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmBlock {
    pub users: Vec<usize>,
    pub x: CMatrix,
    pub z: CMatrix,
    pub v: CMatrix,
    pub lambda_z: CMatrix,
    pub lambda_v: CMatrix,
}

impl AdmmBlock {
    pub fn zeros(m: usize, users: Vec<usize>) -> Self {
        let n = users.len();
        Self {
            users,
            x: CMatrix::zeros(m, n),
            z: CMatrix::zeros(m, n),
            v: CMatrix::zeros(m, n),
            lambda_z: CMatrix::zeros(m, n),
            lambda_v: CMatrix::zeros(m, n),
        }
    }

    /// Restriction of a full-width block to `users` (given as global indices).
    pub fn restrict(&self, users: &[usize]) -> Self {
        Self {
            users: users.to_vec(),
            x: linalg::select_columns(&self.x, users),
            z: linalg::select_columns(&self.z, users),
            v: linalg::select_columns(&self.v, users),
            lambda_z: linalg::select_columns(&self.lambda_z, users),
            lambda_v: linalg::select_columns(&self.lambda_v, users),
        }
    }

    /// Copies a restricted block back into this full-width block.
    pub fn absorb(&mut self, sub: &AdmmBlock) {
        linalg::scatter_columns(&mut self.x, &sub.x, &sub.users);
        linalg::scatter_columns(&mut self.z, &sub.z, &sub.users);
        linalg::scatter_columns(&mut self.v, &sub.v, &sub.users);
        linalg::scatter_columns(&mut self.lambda_z, &sub.lambda_z, &sub.users);
        linalg::scatter_columns(&mut self.lambda_v, &sub.lambda_v, &sub.users);
    }

    /// Clusters touched by the block's users, ascending.
    pub fn clusters(&self, layout: &ClusterLayout) -> Vec<usize> {
        let mut out: Vec<usize> = self.users.iter().map(|&i| layout.cluster_of(i)).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn is_finite(&self) -> bool {
        [&self.x, &self.z, &self.v, &self.lambda_z, &self.lambda_v]
            .into_iter()
            .all(linalg::all_finite)
    }
}

/// Read-only problem data shared by every iteration.
#[derive(Debug)]
pub struct Problem<'a> {
    pub y: &'a CMatrix,
    pub phi: &'a CMatrix,
    pub layout: &'a ClusterLayout,
    pub b_inv: Vec<CMatrix>,
    pub b: &'a [CMatrix],
    pub powers: &'a [f64],
}

impl<'a> Problem<'a> {
    pub fn new(
        y: &'a CMatrix,
        phi: &'a CMatrix,
        layout: &'a ClusterLayout,
        b: &'a [CMatrix],
        powers: &'a [f64],
    ) -> Result<Self> {
        let n = layout.n_users();
        if phi.ncols() != n || powers.len() != n {
            return Err(JuiceError::Dimension(format!(
                "pilot book has {} columns and {} powers were given for N={n} users",
                phi.ncols(),
                powers.len()
            )));
        }
        if y.nrows() != phi.nrows() {
            return Err(JuiceError::Dimension(format!(
                "received signal has {} rows but pilots have length {}",
                y.nrows(),
                phi.nrows()
            )));
        }
        if b.len() != layout.n_clusters() {
            return Err(JuiceError::Dimension(format!(
                "{} prior guesses for {} clusters",
                b.len(),
                layout.n_clusters()
            )));
        }
        let m = y.ncols();
        if b.iter().any(|bl| bl.nrows() != m || bl.ncols() != m) {
            return Err(JuiceError::Dimension(format!("prior guesses must be {m}x{m}")));
        }
        let b_inv = b
            .iter()
            .map(|bl| linalg::inverse_hpd(bl, "prior guess B"))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            y,
            phi,
            layout,
            b_inv,
            b,
            powers,
        })
    }

    pub fn n_antennas(&self) -> usize {
        self.y.ncols()
    }
}

/// MM weights of a block at its current `X`.
pub fn block_mm_weights(block: &AdmmBlock, prior: OuterPrior, layout: &ClusterLayout, eps0: f64) -> MmWeights {
    let local: Vec<usize> = (0..block.users.len()).collect();
    let mut w = match prior {
        OuterPrior::Separable => priors::mm_weights_inner(&block.x, &local, eps0),
        OuterPrior::Cluster => {
            let mut mass = vec![0.0; layout.n_clusters()];
            for (k, &i) in block.users.iter().enumerate() {
                mass[layout.cluster_of(i)] += linalg::col_norm(&block.x, k);
            }
            MmWeights {
                users: local,
                weights: block.users.iter().map(|&i| 1.0 / (mass[layout.cluster_of(i)] + eps0)).collect(),
                epsilon0: eps0,
                kind: priors::LoopKind::Outer,
            }
        }
    };
    w.users = block.users.clone();
    w
}

/// Freezes `α` and `μ` at the block's current iterate.
pub fn freeze_weights(
    block: &AdmmBlock,
    mm: &[f64],
    sigma: &[CMatrix],
    problem: &Problem,
    params: &SolverParams,
    power_factor: bool,
) -> Result<FrozenWeights> {
    let layout = problem.layout;
    let m = problem.n_antennas();
    let logdets = if params.beta2 != 0.0 {
        let mut ld = vec![0.0; layout.n_clusters()];
        for cl in block.clusters(layout) {
            ld[cl] = linalg::logdet_hpd(&sigma[cl])?;
        }
        ld
    } else {
        vec![0.0; layout.n_clusters()]
    };
    let alpha = compute_alpha(
        mm,
        &block.users,
        &logdets,
        params.beta1,
        params.beta2,
        problem.powers,
        m,
        power_factor,
        layout,
    );
    let mu = compute_mu(
        mm,
        &block.x,
        &block.users,
        problem.powers,
        params.beta2,
        params.beta3,
        params.dof_d,
        power_factor,
        layout,
    );
    Ok(FrozenWeights { alpha, mu })
}

/// Phases of one primal sweep, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepPhase {
    Z,
    V,
    X,
    Sigma,
}

/// One primal sweep `Z → V → X → Σ` with frozen weights. `observe` is called
/// after each phase.
pub fn primal_sweep(
    block: &mut AdmmBlock,
    sigma: &mut [CMatrix],
    frozen: &FrozenWeights,
    cache: &GramCache,
    problem: &Problem,
    params: &SolverParams,
    mut observe: impl FnMut(SweepPhase, &AdmmBlock, &[CMatrix]),
) -> Result<()> {
    let layout = problem.layout;
    let rho = params.rho;
    block.z = update_z(&block.x, &block.lambda_z, cache);
    observe(SweepPhase::Z, block, sigma);
    block.v = update_v(&block.x, &block.lambda_v, sigma, rho, params.beta2, layout, &block.users)?;
    observe(SweepPhase::V, block, sigma);
    block.x = update_x(&block.z, &block.v, &block.lambda_z, &block.lambda_v, &frozen.alpha, rho);
    observe(SweepPhase::X, block, sigma);
    if params.estimates_covariance() {
        let clusters = block.clusters(layout);
        update_sigma(
            sigma,
            &block.v,
            &block.users,
            &problem.b_inv,
            &frozen.mu,
            params.beta2,
            params.beta3,
            layout,
            &clusters,
        )?;
    }
    observe(SweepPhase::Sigma, block, sigma);
    Ok(())
}

/// Which loop produced a diagnostics row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Outer,
    Inner,
}

/// One row of the per-iteration diagnostics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub stage: Stage,
    pub outer_iter: usize,
    pub inner_iter: usize,
    /// MM-linearized objective at the new iterate (when tracking is enabled).
    pub objective: Option<f64>,
    pub residual_z: f64,
    pub residual_v: f64,
    /// `‖X_new − X_old‖_F` over the block.
    pub change: f64,
    /// Users with `‖x_i‖ > 0` in the block.
    pub support_size: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub records: Vec<IterationRecord>,
    pub outer_iterations: usize,
    pub inner_invocations: usize,
    pub converged: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct JuiceSolution {
    pub x_hat: CMatrix,
    pub sigma_hat: Vec<CMatrix>,
    /// Users whose estimated column norm exceeds the detection threshold.
    pub support: Vec<usize>,
    /// Clusters of the last detected set `Ŝ`.
    pub detected_clusters: Vec<usize>,
    pub diagnostics: Diagnostics,
}

struct Run<'p, 'a> {
    problem: &'p Problem<'a>,
    params: &'p SolverParams,
    state: AdmmBlock,
    sigma: Vec<CMatrix>,
    outer_cache: GramCache,
    inner_cache: Option<GramCache>,
    detected: Vec<usize>,
    diagnostics: Diagnostics,
}

impl Run<'_, '_> {
    fn fault(&self, iteration: usize, reason: impl Into<String>) -> JuiceError {
        JuiceError::SolverFault {
            iteration,
            reason: reason.into(),
        }
    }

    fn tag(&self, iteration: usize, err: JuiceError) -> JuiceError {
        match err {
            JuiceError::SolverFault { reason, .. } => JuiceError::SolverFault { iteration, reason },
            other => other,
        }
    }

    /// One ADMM iteration on `block`: freeze weights, primal sweep, dual step.
    #[allow(clippy::too_many_arguments)]
    fn iterate(
        problem: &Problem,
        params: &SolverParams,
        block: &mut AdmmBlock,
        sigma: &mut [CMatrix],
        cache: &GramCache,
        prior: OuterPrior,
        unit_weights: bool,
        power_factor: bool,
    ) -> Result<(MmWeights, FrozenWeights)> {
        let mut mm = block_mm_weights(block, prior, problem.layout, params.eps0);
        if unit_weights {
            mm.weights.iter_mut().for_each(|w| *w = 1.0);
        }
        let frozen = freeze_weights(block, &mm.weights, sigma, problem, params, power_factor)?;
        primal_sweep(block, sigma, &frozen, cache, problem, params, |_, _, _| {})?;
        let (x, z, v) = (&block.x, &block.z, &block.v);
        update_duals(x, z, v, &mut block.lambda_z, &mut block.lambda_v, params.rho);
        Ok((mm, frozen))
    }

    fn record(
        &mut self,
        stage: Stage,
        outer_iter: usize,
        inner_iter: usize,
        block: &AdmmBlock,
        prev_x: &CMatrix,
        mm: &MmWeights,
        frozen: &FrozenWeights,
    ) -> Result<()> {
        let objective = if self.params.track_objective {
            let mut full = CMatrix::zeros(block.x.nrows(), self.problem.layout.n_users());
            linalg::scatter_columns(&mut full, &block.x, &block.users);
            let weights = MmWeights {
                users: block.users.clone(),
                ..mm.clone()
            };
            let betas = PriorWeights {
                beta1: self.params.beta1,
                beta2: self.params.beta2,
                beta3: self.params.beta3,
                dof_d: self.params.dof_d,
            };
            let mu = if self.params.estimates_covariance() {
                frozen.mu.clone()
            } else {
                vec![0.0; frozen.mu.len()]
            };
            Some(priors::eval_map_objective(
                &full,
                &self.sigma,
                self.problem.y,
                self.problem.phi,
                self.problem.b,
                &weights,
                &mu,
                &betas,
                self.problem.layout,
            )?)
        } else {
            None
        };
        self.diagnostics.records.push(IterationRecord {
            stage,
            outer_iter,
            inner_iter,
            objective,
            residual_z: linalg::fro_norm(&(&block.x - &block.z)),
            residual_v: linalg::fro_norm(&(&block.x - &block.v)),
            change: linalg::fro_norm(&(&block.x - prev_x)),
            support_size: linalg::col_norms(&block.x).iter().filter(|&&n| n > 0.0).count(),
        });
        Ok(())
    }

    fn outer_iteration(&mut self, k: usize) -> Result<()> {
        let prev = self.state.x.clone();
        let unit = k == 1 && self.params.init == Initialization::Zero;
        let mut block = std::mem::replace(&mut self.state, AdmmBlock::zeros(0, Vec::new()));
        let result = Self::iterate(
            self.problem,
            self.params,
            &mut block,
            &mut self.sigma,
            &self.outer_cache,
            self.params.outer_prior,
            unit,
            true,
        );
        self.state = block;
        let (mm, frozen) = result.map_err(|e| self.tag(k, e))?;
        if !self.state.is_finite() {
            return Err(self.fault(k, "non-finite outer iterate"));
        }
        let state = self.state.clone();
        self.record(Stage::Outer, k, 0, &state, &prev, &mm, &frozen)
    }

    /// Detects `Ŝ`, runs the inner loop on it and copies the iterates back.
    fn inner_stage(&mut self, k: usize) -> Result<()> {
        let layout = self.problem.layout;
        let eps = self.params.eps_detect.resolve(&self.state.x);
        let clusters = detect_active_clusters(&self.state.x, layout, eps);
        let users = layout.expand(&clusters);
        self.detected = clusters;
        self.diagnostics.inner_invocations += 1;

        if !users.is_empty() {
            let cache_ok = self.inner_cache.as_ref().is_some_and(|c| c.matches(&users, self.params.rho));
            if !cache_ok {
                self.inner_cache = Some(GramCache::new(self.problem.y, self.problem.phi, &users, self.params.rho)?);
            }
            let cache = self.inner_cache.take().expect("inner cache");
            let mut block = self.state.restrict(&users);
            for ku in 1..=self.params.max_inner_iters {
                let prev = block.x.clone();
                let (mm, frozen) = Self::iterate(
                    self.problem,
                    self.params,
                    &mut block,
                    &mut self.sigma,
                    &cache,
                    OuterPrior::Separable,
                    false,
                    self.params.inner_power_factor,
                )
                .map_err(|e| self.tag(k, e))?;
                if !block.is_finite() {
                    return Err(self.fault(k, format!("non-finite inner iterate at inner step {ku}")));
                }
                self.record(Stage::Inner, k, ku, &block, &prev, &mm, &frozen)?;
            }
            self.inner_cache = Some(cache);
            self.state.absorb(&block);
        }
        if !self.params.prune_undetected {
            return Ok(());
        }
        let mut keep = vec![false; layout.n_users()];
        for &i in &users {
            keep[i] = true;
        }
        for (i, kept) in keep.into_iter().enumerate() {
            if !kept {
                self.state.x.column_mut(i).fill(linalg::ZERO);
            }
        }
        Ok(())
    }
}

fn initial_block(problem: &Problem, params: &SolverParams, cache: &GramCache) -> AdmmBlock {
    let m = problem.n_antennas();
    let users: Vec<usize> = (0..problem.layout.n_users()).collect();
    let mut block = AdmmBlock::zeros(m, users);
    if params.init == Initialization::Ridge {
        let ridge = &cache.yt_phi_conj * &cache.gram_inv;
        block.x = ridge.clone();
        block.z = ridge.clone();
        block.v = ridge;
    }
    block
}

/// Runs the two-level algorithm on `Y = Φ Xᵀ + W`.
///
/// `b` holds the per-cluster prior guesses `B_l` (also the initial `Σ_l`),
/// `powers` the per-user transmit powers.
pub fn solve(
    y: &CMatrix,
    phi: &CMatrix,
    layout: &ClusterLayout,
    b: &[CMatrix],
    powers: &[f64],
    params: &SolverParams,
) -> Result<JuiceSolution> {
    params.validate()?;
    let start = Instant::now();
    let problem = Problem::new(y, phi, layout, b, powers)?;
    let all: Vec<usize> = (0..layout.n_users()).collect();
    let outer_cache = GramCache::new(y, phi, &all, params.rho)?;
    let state = initial_block(&problem, params, &outer_cache);
    let mut run = Run {
        problem: &problem,
        params,
        state,
        sigma: b.to_vec(),
        outer_cache,
        inner_cache: None,
        detected: Vec::new(),
        diagnostics: Diagnostics::default(),
    };

    // With the inner loop on, the outer iterates cycle between the cluster
    // and separable stages, so convergence is judged on consecutive inner
    // stage outputs instead of consecutive outer iterates.
    let mut last_inner = None;
    let mut prev_stage_x: Option<CMatrix> = None;
    let mut k = 1;
    loop {
        let prev = run.state.x.clone();
        run.outer_iteration(k)?;
        let mut change = if params.inner_loop {
            f64::INFINITY
        } else {
            linalg::fro_norm(&(&run.state.x - &prev))
        };
        if params.inner_loop && k % params.inner_period == 0 {
            run.inner_stage(k)?;
            last_inner = Some(k);
            if let Some(before) = &prev_stage_x {
                change = linalg::fro_norm(&(&run.state.x - before));
            }
            prev_stage_x = Some(run.state.x.clone());
        }
        run.diagnostics.outer_iterations = k;
        if change < params.eps_conv {
            run.diagnostics.converged = true;
            break;
        }
        if k >= params.max_outer_iters {
            break;
        }
        k += 1;
    }
    if params.inner_loop && last_inner != Some(k) {
        run.inner_stage(k)?;
    }

    let x_hat = run.state.x;
    let threshold = params.eps_support.resolve(&x_hat);
    let support = (0..layout.n_users())
        .filter(|&i| linalg::col_norm(&x_hat, i) > threshold)
        .collect();
    let mut diagnostics = run.diagnostics;
    diagnostics.seconds = start.elapsed().as_secs_f64();
    Ok(JuiceSolution {
        x_hat,
        sigma_hat: run.sigma,
        support,
        detected_clusters: run.detected,
        diagnostics,
    })
}
