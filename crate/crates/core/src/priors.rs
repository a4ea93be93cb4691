//! Sparsity and Wishart prior terms, and the majorization-minimization
//! weights that linearize the concave log-sum priors.

use crate::error::{JuiceError, Result};
use crate::linalg::{self, CMatrix};
use crate::model::ClusterLayout;

/// Which log-sum prior a set of MM weights linearizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopKind {
    /// Cluster prior `Σ_l log(Σ_{i∈C_l} ‖x_i‖ + ε₀)` over all users (weights `q`).
    Outer,
    /// Separable prior `Σ_i log(‖x_i‖ + ε₀)` over a user subset (weights `g`).
    Inner,
}

/// Weights of the MM surrogate `Σ_i w_i ‖x_i‖`, aligned with `users`.
#[derive(Debug, Clone, PartialEq)]
pub struct MmWeights {
    pub users: Vec<usize>,
    pub weights: Vec<f64>,
    pub epsilon0: f64,
    pub kind: LoopKind,
}

impl MmWeights {
    /// `Σ_i w_i ‖x_i‖` over the weighted users.
    pub fn linearized(&self, x: &CMatrix) -> f64 {
        self.users
            .iter()
            .zip(&self.weights)
            .map(|(&i, &w)| w * linalg::col_norm(x, i))
            .sum()
    }

    /// Weight of user `i`, if it is part of this weight set.
    pub fn get(&self, user: usize) -> Option<f64> {
        self.users.iter().position(|&u| u == user).map(|k| self.weights[k])
    }
}

pub fn eval_separable_prior(x: &CMatrix, eps0: f64) -> f64 {
    linalg::col_norms(x).into_iter().map(|n| (n + eps0).ln()).sum()
}

/// Separable log-sum prior restricted to `users`.
pub fn eval_separable_prior_on(x: &CMatrix, users: &[usize], eps0: f64) -> f64 {
    users.iter().map(|&i| (linalg::col_norm(x, i) + eps0).ln()).sum()
}

fn cluster_masses(x: &CMatrix, layout: &ClusterLayout) -> Vec<f64> {
    (0..layout.n_clusters())
        .map(|l| layout.members(l).map(|i| linalg::col_norm(x, i)).sum())
        .collect()
}

pub fn eval_cluster_prior(x: &CMatrix, layout: &ClusterLayout, eps0: f64) -> f64 {
    cluster_masses(x, layout).into_iter().map(|m| (m + eps0).ln()).sum()
}

/// Outer-loop weights `q_i = (Σ_{j∈C_l} ‖x_j‖ + ε₀)⁻¹`, constant within each cluster.
pub fn mm_weights_outer(x: &CMatrix, layout: &ClusterLayout, eps0: f64) -> MmWeights {
    let masses = cluster_masses(x, layout);
    let weights = (0..layout.n_users())
        .map(|i| 1.0 / (masses[layout.cluster_of(i)] + eps0))
        .collect();
    MmWeights {
        users: (0..layout.n_users()).collect(),
        weights,
        epsilon0: eps0,
        kind: LoopKind::Outer,
    }
}

/// Inner-loop weights `g_i = (‖x_i‖ + ε₀)⁻¹` on `users`.
pub fn mm_weights_inner(x: &CMatrix, users: &[usize], eps0: f64) -> MmWeights {
    MmWeights {
        users: users.to_vec(),
        weights: users.iter().map(|&i| 1.0 / (linalg::col_norm(x, i) + eps0)).collect(),
        epsilon0: eps0,
        kind: LoopKind::Inner,
    }
}

/// Dispatches to the outer (cluster) or inner (separable) weights.
pub fn mm_weights(x: &CMatrix, layout: &ClusterLayout, users: &[usize], eps0: f64, kind: LoopKind) -> MmWeights {
    match kind {
        LoopKind::Outer => mm_weights_outer(x, layout, eps0),
        LoopKind::Inner => mm_weights_inner(x, users, eps0),
    }
}

/// Exact log-sum prior that `weights` linearizes, evaluated at `x`.
pub fn exact_prior(weights: &MmWeights, x: &CMatrix, layout: &ClusterLayout) -> f64 {
    match weights.kind {
        LoopKind::Outer => eval_cluster_prior(x, layout, weights.epsilon0),
        LoopKind::Inner => eval_separable_prior_on(x, &weights.users, weights.epsilon0),
    }
}

/// MM surrogate expanded at `expansion`: `J(X⁰) + Σ w_i (‖x_i‖ − ‖x⁰_i‖)`.
///
/// The constant is only materialized here; the solver works with weights alone.
pub fn surrogate_value(weights: &MmWeights, x: &CMatrix, expansion: &CMatrix, layout: &ClusterLayout) -> f64 {
    exact_prior(weights, expansion, layout) + weights.linearized(x) - weights.linearized(expansion)
}

/// `−d log|Σ| + tr(B⁻¹ Σ)`.
pub fn eval_wishart_neglog(sigma: &CMatrix, b: &CMatrix, d: f64) -> Result<f64> {
    if d <= 0.0 {
        return Err(JuiceError::Config(format!("Wishart shape d={d} must be positive")));
    }
    let logdet = linalg::logdet_hpd(sigma)?;
    let b_chol = linalg::cholesky(b, "Wishart scale B")?;
    let trace = linalg::trace(&b_chol.solve(sigma)).re;
    Ok(-d * logdet + trace)
}

/// Prior weights of the relaxed MAP problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorWeights {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    /// Wishart shape `d = v − M + 1`.
    pub dof_d: f64,
}

/// MM-linearized MAP objective at `(X, Σ)` with weights frozen at the
/// expansion point:
///
/// `½‖Y − Φ_S X_Sᵀ‖² + β₁ Σ_{i∈S} w_i‖x_i‖ + β₂ Σ_{i∈S} x_iᴴ Σ_l x_i
///  − Σ_{l∈J} μ_l log|Σ_l| + β₃ L Σ_{l∈J} tr(B_l⁻¹ Σ_l)`
///
/// where `S` is the weighted user set (all users for the outer loop) and `J`
/// the clusters it touches. `mu` holds one coefficient per cluster.
#[allow(clippy::too_many_arguments)]
pub fn eval_map_objective(
    x: &CMatrix,
    sigma: &[CMatrix],
    y: &CMatrix,
    phi: &CMatrix,
    b: &[CMatrix],
    weights: &MmWeights,
    mu: &[f64],
    betas: &PriorWeights,
    layout: &ClusterLayout,
) -> Result<f64> {
    let users = &weights.users;
    let x_s = linalg::select_columns(x, users);
    let phi_s = linalg::select_columns(phi, users);
    let residual = y - phi_s * x_s.transpose();
    let mut value = 0.5 * linalg::fro_norm_sq(&residual) + betas.beta1 * weights.linearized(x);

    let mut clusters: Vec<usize> = users.iter().map(|&i| layout.cluster_of(i)).collect();
    clusters.dedup();
    if betas.beta2 != 0.0 {
        for &i in users {
            let xi = x.column(i);
            value += betas.beta2 * (xi.adjoint() * &sigma[layout.cluster_of(i)] * xi)[(0, 0)].re;
        }
    }
    let l = layout.users_per_cluster() as f64;
    for &cl in &clusters {
        if mu[cl] == 0.0 && betas.beta3 == 0.0 {
            continue;
        }
        let logdet = linalg::logdet_hpd(&sigma[cl])?;
        let b_chol = linalg::cholesky(&b[cl], "prior guess B")?;
        value += -mu[cl] * logdet + betas.beta3 * l * linalg::trace(&b_chol.solve(&sigma[cl])).re;
    }
    Ok(value)
}
