//! Closed-form ADMM block updates.
//!
//! All matrices are restricted to a working set of users (all `N` users in
//! the outer loop, the detected set `Ŝ` in the inner loop). Column `k` of a
//! restricted matrix belongs to user `users[k]`.

use crate::error::{JuiceError, Result};
use crate::linalg::{self, c, CMatrix};
use crate::model::ClusterLayout;

/// Cached `(Φ_Sᵀ Φ_S* + ρ I)⁻¹` together with `Yᵀ Φ_S*`.
#[derive(Debug, Clone)]
pub struct GramCache {
    pub users: Vec<usize>,
    pub rho: f64,
    pub gram_inv: CMatrix,
    pub yt_phi_conj: CMatrix,
}

impl GramCache {
    pub fn new(y: &CMatrix, phi: &CMatrix, users: &[usize], rho: f64) -> Result<Self> {
        if y.nrows() != phi.nrows() {
            return Err(JuiceError::Dimension(format!(
                "received signal has {} rows but the pilot book has {}",
                y.nrows(),
                phi.nrows()
            )));
        }
        let phi_s = linalg::select_columns(phi, users);
        let phi_conj = linalg::conj(&phi_s);
        let gram = phi_s.transpose() * &phi_conj + linalg::identity(users.len()) * c(rho);
        Ok(Self {
            users: users.to_vec(),
            rho,
            gram_inv: linalg::inverse_hpd(&gram, "pilot Gram matrix")?,
            yt_phi_conj: y.transpose() * phi_conj,
        })
    }

    pub fn matches(&self, users: &[usize], rho: f64) -> bool {
        self.rho == rho && self.users == users
    }
}

/// `Z = (ρX + Λ_z + YᵀΦ*)(ΦᵀΦ* + ρI)⁻¹`.
pub fn update_z(x: &CMatrix, lambda_z: &CMatrix, cache: &GramCache) -> CMatrix {
    (x * c(cache.rho) + lambda_z + &cache.yt_phi_conj) * &cache.gram_inv
}

/// `v_i = (2β₂Σ_l + ρI)⁻¹(ρx_i + λ_{v,i})`, one Hermitian solve per cluster.
///
/// This is the exact minimizer of `β₂ vᴴΣ_l v + (ρ/2)‖x − v + λ/ρ‖²`.
pub fn update_v(
    x: &CMatrix,
    lambda_v: &CMatrix,
    sigma: &[CMatrix],
    rho: f64,
    beta2: f64,
    layout: &ClusterLayout,
    users: &[usize],
) -> Result<CMatrix> {
    let mut rhs = x * c(rho) + lambda_v;
    if beta2 == 0.0 {
        rhs /= c(rho);
        return Ok(rhs);
    }
    let m = x.nrows();
    let mut k = 0;
    while k < users.len() {
        let cl = layout.cluster_of(users[k]);
        let end = k + users[k..].iter().take_while(|&&u| layout.cluster_of(u) == cl).count();
        let system = &sigma[cl] * c(2.0 * beta2) + linalg::identity(m) * c(rho);
        let chol = linalg::cholesky(&system, "V-update system")?;
        let mut block = rhs.columns_mut(k, end - k);
        chol.solve_mut(&mut block);
        k = end;
    }
    Ok(rhs)
}

/// Shrinkage weights `α_i = max{0, w_i(β₁ − β₂ p_iᴹ log|Σ_l|)}`.
///
/// `p_iᴹ` is evaluated as `exp(M ln p_i)`; with `power_factor = false` it is
/// replaced by 1.
#[allow(clippy::too_many_arguments)]
pub fn compute_alpha(
    weights: &[f64],
    users: &[usize],
    sigma_logdet: &[f64],
    beta1: f64,
    beta2: f64,
    powers: &[f64],
    n_antennas: usize,
    power_factor: bool,
    layout: &ClusterLayout,
) -> Vec<f64> {
    users
        .iter()
        .zip(weights)
        .map(|(&i, &w)| {
            let coupling = if beta2 == 0.0 {
                0.0
            } else {
                beta2 * power_term(powers[i], n_antennas, power_factor) * sigma_logdet[layout.cluster_of(i)]
            };
            (w * (beta1 - coupling)).max(0.0)
        })
        .collect()
}

pub(crate) fn power_term(p: f64, n_antennas: usize, enabled: bool) -> f64 {
    if enabled {
        (n_antennas as f64 * p.ln()).exp()
    } else {
        1.0
    }
}

/// Group shrinkage at `C = ½(Z + V − (Λ_z + Λ_v)/ρ)`:
/// `x_i = max{0, 1 − α_i/(2ρ‖c_i‖)} c_i`.
pub fn update_x(
    z: &CMatrix,
    v: &CMatrix,
    lambda_z: &CMatrix,
    lambda_v: &CMatrix,
    alpha: &[f64],
    rho: f64,
) -> CMatrix {
    let mut center = (z + v - (lambda_z + lambda_v) / c(rho)) * c(0.5);
    for (k, &a) in alpha.iter().enumerate() {
        let norm = linalg::col_norm(&center, k);
        let scale = if norm > 0.0 { (1.0 - a / (2.0 * rho * norm)).max(0.0) } else { 0.0 };
        center.column_mut(k).scale_mut(scale);
    }
    center
}

/// Minimizer of `α‖x‖ + ρ‖x − c‖²` for a single vector.
pub fn group_shrink(center: &linalg::CVector, alpha: f64, rho: f64) -> linalg::CVector {
    let norm = center.norm();
    if norm == 0.0 {
        return center.clone();
    }
    center * c((1.0 - alpha / (2.0 * rho * norm)).max(0.0))
}

/// `μ_l = β₂ Σ_{i∈C_l∩S} p_iᴹ w_i ‖x_i‖ + β₃ L d` for every cluster.
///
/// `x` is restricted to `users`; clusters that no user of `users` touches get
/// `β₃ L d`.
#[allow(clippy::too_many_arguments)]
pub fn compute_mu(
    weights: &[f64],
    x: &CMatrix,
    users: &[usize],
    powers: &[f64],
    beta2: f64,
    beta3: f64,
    dof_d: f64,
    power_factor: bool,
    layout: &ClusterLayout,
) -> Vec<f64> {
    let l = layout.users_per_cluster() as f64;
    let m = x.nrows();
    let mut mu = vec![beta3 * l * dof_d; layout.n_clusters()];
    if beta2 != 0.0 {
        for (k, (&i, &w)) in users.iter().zip(weights).enumerate() {
            mu[layout.cluster_of(i)] += beta2 * power_term(powers[i], m, power_factor) * w * linalg::col_norm(x, k);
        }
    }
    mu
}

/// `Σ_l = μ_l (β₂ Σ_{i∈C_l} v_i v_iᴴ + β₃ L B_l⁻¹)⁻¹` for each `l` in `clusters`.
///
/// `v` is restricted to `users`. Fails with a solver fault when `μ_l ≤ 0` or
/// the bracketed matrix is not positive-definite.
#[allow(clippy::too_many_arguments)]
pub fn update_sigma(
    sigma: &mut [CMatrix],
    v: &CMatrix,
    users: &[usize],
    b_inv: &[CMatrix],
    mu: &[f64],
    beta2: f64,
    beta3: f64,
    layout: &ClusterLayout,
    clusters: &[usize],
) -> Result<()> {
    let l = layout.users_per_cluster() as f64;
    let m = v.nrows();
    let mut scatter = vec![CMatrix::zeros(m, m); layout.n_clusters()];
    if beta2 != 0.0 {
        for (k, &i) in users.iter().enumerate() {
            let col = v.column(k);
            scatter[layout.cluster_of(i)] += col * col.adjoint();
        }
    }
    for &cl in clusters {
        if mu[cl] <= 0.0 || !mu[cl].is_finite() {
            return Err(JuiceError::SolverFault {
                iteration: 0,
                reason: format!("Σ-update coefficient μ_{cl} = {} is not positive", mu[cl]),
            });
        }
        let system = linalg::hermitian_part(&(&scatter[cl] * c(beta2) + &b_inv[cl] * c(beta3 * l)));
        let inv = linalg::inverse_hpd(&system, "Σ-update system").map_err(|_| JuiceError::SolverFault {
            iteration: 0,
            reason: format!("Σ-update system of cluster {cl} is singular"),
        })?;
        sigma[cl] = inv * c(mu[cl]);
    }
    Ok(())
}

/// Dual ascent `Λ_z += ρ(X − Z)`, `Λ_v += ρ(X − V)`.
pub fn update_duals(x: &CMatrix, z: &CMatrix, v: &CMatrix, lambda_z: &mut CMatrix, lambda_v: &mut CMatrix, rho: f64) {
    *lambda_z += (x - z) * c(rho);
    *lambda_v += (x - v) * c(rho);
}

/// Clusters holding at least one column with `‖x_i‖ > eps`, ascending.
pub fn detect_active_clusters(x: &CMatrix, layout: &ClusterLayout, eps: f64) -> Vec<usize> {
    (0..layout.n_clusters())
        .filter(|&l| layout.members(l).any(|i| linalg::col_norm(x, i) > eps))
        .collect()
}
