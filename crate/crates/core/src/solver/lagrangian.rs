use crate::error::Result;
use crate::linalg::{self, c, CMatrix};
use crate::model::ClusterLayout;

use super::AdmmBlock;

/// Weights held fixed during one primal sweep: per-column shrinkage weights
/// `α` (aligned with the block's users) and per-cluster `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenWeights {
    pub alpha: Vec<f64>,
    pub mu: Vec<f64>,
}

/// Augmented Lagrangian of one ADMM block with frozen MM weights:
///
/// `½‖Y − Φ_S Z_Sᵀ‖² + Σ α_i‖x_i‖ + β₂ Σ v_iᴴΣ_l v_i − Σ_{l∈J} μ_l log|Σ_l|
///  + β₃L Σ_{l∈J} tr(B_l⁻¹Σ_l) + ρ/2‖X − V + Λ_v/ρ‖² + ρ/2‖X − Z + Λ_z/ρ‖²
///  − ‖Λ_z‖²/(2ρ) − ‖Λ_v‖²/(2ρ)`
///
/// `J` is the set of clusters touched by the block's users. Wishart terms
/// are skipped when both `β₂` and `β₃` are zero (no covariance estimation).
#[allow(clippy::too_many_arguments)]
pub fn augmented_lagrangian(
    block: &AdmmBlock,
    sigma: &[CMatrix],
    b_inv: &[CMatrix],
    y: &CMatrix,
    phi: &CMatrix,
    frozen: &FrozenWeights,
    beta2: f64,
    beta3: f64,
    rho: f64,
    layout: &ClusterLayout,
) -> Result<f64> {
    let phi_s = linalg::select_columns(phi, &block.users);
    let fit = 0.5 * linalg::fro_norm_sq(&(y - phi_s * block.z.transpose()));
    let shrink: f64 = frozen
        .alpha
        .iter()
        .enumerate()
        .map(|(k, &a)| a * linalg::col_norm(&block.x, k))
        .sum();
    let mut quad = 0.0;
    if beta2 != 0.0 {
        for (k, &i) in block.users.iter().enumerate() {
            let vk = block.v.column(k);
            quad += beta2 * (vk.adjoint() * &sigma[layout.cluster_of(i)] * vk)[(0, 0)].re;
        }
    }
    let mut wishart = 0.0;
    if beta2 != 0.0 || beta3 != 0.0 {
        let l = layout.users_per_cluster() as f64;
        for cl in block.clusters(layout) {
            wishart += -frozen.mu[cl] * linalg::logdet_hpd(&sigma[cl])?
                + beta3 * l * linalg::trace(&(&b_inv[cl] * &sigma[cl])).re;
        }
    }
    let inv_rho = c(1.0 / rho);
    let pen_v = 0.5 * rho * linalg::fro_norm_sq(&(&block.x - &block.v + &block.lambda_v * inv_rho));
    let pen_z = 0.5 * rho * linalg::fro_norm_sq(&(&block.x - &block.z + &block.lambda_z * inv_rho));
    let duals = (linalg::fro_norm_sq(&block.lambda_z) + linalg::fro_norm_sq(&block.lambda_v)) / (2.0 * rho);
    Ok(fit + shrink + quad + wishart + pen_v + pen_z - duals)
}
