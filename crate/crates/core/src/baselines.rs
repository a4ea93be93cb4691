//! Reference estimators: the support-aware oracle MMSE and reweighted
//! `ℓ2,1` ADMM.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{JuiceError, Result};
use crate::linalg::{self, c, CMatrix};
use crate::model::{ClusterLayout, Scenario};
use crate::solver::{self, JuiceSolution, SolverParams};

/// What the oracle knows: the true support, each active user's channel
/// covariance `p_i Σ_l⁻¹` and the noise variance.
#[derive(Debug, Clone)]
pub struct OracleInfo {
    pub support: Vec<usize>,
    /// One covariance per entry of `support`.
    pub covariances: Vec<CMatrix>,
    pub noise_var: f64,
}

impl OracleInfo {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let support = scenario.instance.activity.active_users().to_vec();
        let covariances = support
            .iter()
            .map(|&i| {
                let l = scenario.layout.cluster_of(i);
                &scenario.precision_set.covariances[l] * c(scenario.precision_set.powers[i])
            })
            .collect();
        Self {
            support,
            covariances,
            noise_var: scenario.instance.noise_var,
        }
    }
}

/// Linear MMSE estimate of `X` given the true support.
///
/// With `u = vec(X_Sᵀ)` stacked antenna by antenna, `vec(Y) = (I_M ⊗ Φ_S) u + w`
/// and the estimate is `û = (C AᴴA + σ²I)⁻¹ C Aᴴ vec(Y)`, which equals
/// `C Aᴴ (A C Aᴴ + σ²I)⁻¹ vec(Y)` and stays defined at `σ² = 0` when `Φ_S` has
/// full column rank.
pub fn oracle_mmse(y: &CMatrix, phi: &CMatrix, oracle: &OracleInfo) -> Result<CMatrix> {
    let m = y.ncols();
    let n = phi.ncols();
    if y.nrows() != phi.nrows() {
        return Err(JuiceError::Dimension("received signal and pilots disagree on τ_p".into()));
    }
    if oracle.covariances.len() != oracle.support.len() {
        return Err(JuiceError::Dimension("one covariance per supported user is required".into()));
    }
    let mut x_hat = CMatrix::zeros(m, n);
    let s = oracle.support.len();
    if s == 0 {
        return Ok(x_hat);
    }
    let phi_s = linalg::select_columns(phi, &oracle.support);
    let gram = phi_s.adjoint() * &phi_s;
    // column n of `matched` is Φ_Sᴴ y_n
    let matched = phi_s.adjoint() * y;

    let scalar = oracle.covariances.iter().map(scaled_identity).collect::<Option<Vec<f64>>>();
    let estimate: CMatrix = match scalar {
        Some(r) => per_antenna(&gram, &matched, &r, oracle.noise_var)?,
        None => stacked(&gram, &matched, &oracle.covariances, oracle.noise_var)?,
    };
    for (k, &i) in oracle.support.iter().enumerate() {
        x_hat.set_column(i, &estimate.column(k));
    }
    Ok(x_hat)
}

/// `Some(r)` when `cov = r·I` to working precision.
fn scaled_identity(cov: &CMatrix) -> Option<f64> {
    let r = linalg::trace(cov).re / cov.nrows() as f64;
    let dev = linalg::fro_norm(&(cov - linalg::identity(cov.nrows()) * c(r)));
    (dev <= 1e-12 * linalg::fro_norm(cov).max(1e-300)).then_some(r)
}

/// Isotropic covariances decouple the antennas: per antenna,
/// `(D P + σ²I) u_m = D Φ_Sᴴ y_m` with `D = diag(r_k)`, `P = Φ_SᴴΦ_S`.
/// Returns `M × |S|` (column `k` is user `k`'s estimate).
fn per_antenna(gram: &CMatrix, matched: &CMatrix, r: &[f64], noise_var: f64) -> Result<CMatrix> {
    let s = r.len();
    let system = CMatrix::from_fn(s, s, |k, j| {
        c(r[k]) * gram[(k, j)] + if k == j { c(noise_var) } else { linalg::ZERO }
    });
    let rhs = CMatrix::from_fn(s, matched.ncols(), |k, n| matched[(k, n)] * r[k]);
    let lu = system.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| JuiceError::Dimension("oracle MMSE system is singular".into()))?;
    Ok(sol.transpose())
}

/// Dense `M|S|`-dimensional solve for general covariances.
fn stacked(gram: &CMatrix, matched: &CMatrix, covs: &[CMatrix], noise_var: f64) -> Result<CMatrix> {
    let s = covs.len();
    let m = matched.ncols();
    let dim = m * s;
    let idx = |ant: usize, k: usize| ant * s + k;
    let mut system = CMatrix::zeros(dim, dim);
    let mut rhs = DVector::<Complex64>::zeros(dim);
    for a in 0..m {
        for k in 0..s {
            let row = idx(a, k);
            for b in 0..m {
                let r = covs[k][(a, b)];
                if r == linalg::ZERO {
                    continue;
                }
                for j in 0..s {
                    system[(row, idx(b, j))] += r * gram[(k, j)];
                }
                rhs[row] += r * matched[(k, b)];
            }
            system[(row, row)] += c(noise_var);
        }
    }
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| JuiceError::Dimension("oracle MMSE system is singular".into()))?;
    Ok(CMatrix::from_fn(m, s, |a, k| sol[idx(a, k)]))
}

/// Reweighted `ℓ2,1` ADMM: the solver with separable weights on every user,
/// `β₂ = β₃ = 0`, no cluster stage and no covariance updates.
pub fn ir_l21_admm(y: &CMatrix, phi: &CMatrix, layout: &ClusterLayout, params: &SolverParams) -> Result<JuiceSolution> {
    let m = y.ncols();
    let identity_priors = vec![linalg::identity(m); layout.n_clusters()];
    let powers = vec![1.0; layout.n_users()];
    solver::solve(y, phi, layout, &identity_priors, &powers, &params.clone().ir_l21())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_pilots, orthonormal_pilots};
    use crate::rng;

    fn rand_mat(r: usize, k: usize, seed: u64) -> CMatrix {
        let mut g = rng::rng_for(seed, 11);
        rng::complex_normal_matrix(&mut g, r, k, 1.0)
    }

    #[test]
    fn scalar_case_matches_hand_formula() {
        let phi = gen_pilots(5, 3, 2).unwrap();
        let y = rand_mat(5, 1, 3);
        let (p, var_h, noise) = (0.8, 1.7, 0.3);
        let oracle = OracleInfo {
            support: vec![1],
            covariances: vec![CMatrix::from_element(1, 1, c(p * var_h))],
            noise_var: noise,
        };
        let x = oracle_mmse(&y, &phi, &oracle).unwrap();
        let col = phi.column(1);
        let expect = (col.adjoint() * &y)[(0, 0)] * (p * var_h) / (p * var_h * col.norm_squared() + noise);
        assert!((x[(0, 1)] - expect).norm() < 1e-12);
        assert_eq!(x[(0, 0)], linalg::ZERO);
    }

    #[test]
    fn large_noise_gives_prior_mean() {
        let phi = gen_pilots(6, 4, 1).unwrap();
        let y = rand_mat(6, 2, 4);
        let cov = {
            let a = rand_mat(2, 2, 5);
            &a * a.adjoint() + linalg::identity(2)
        };
        let oracle = OracleInfo {
            support: vec![0, 3],
            covariances: vec![cov.clone(), cov],
            noise_var: 1e12,
        };
        let x = oracle_mmse(&y, &phi, &oracle).unwrap();
        assert!(linalg::fro_norm(&x) < 1e-9);
    }

    #[test]
    fn noiseless_orthonormal_recovers_exactly() {
        let phi = orthonormal_pilots(6, 6).unwrap();
        let mut x = CMatrix::zeros(3, 6);
        let src = rand_mat(3, 2, 6);
        x.set_column(1, &src.column(0));
        x.set_column(4, &src.column(1));
        let y = &phi * x.transpose();
        let cov = {
            let a = rand_mat(3, 3, 7);
            &a * a.adjoint() + linalg::identity(3) * c(0.1)
        };
        let oracle = OracleInfo {
            support: vec![1, 4],
            covariances: vec![cov.clone(), cov],
            noise_var: 0.0,
        };
        let est = oracle_mmse(&y, &phi, &oracle).unwrap();
        assert!(linalg::fro_norm(&(est - x)) < 1e-10);
    }

    #[test]
    fn fast_path_matches_dense_path() {
        let phi = gen_pilots(4, 5, 8).unwrap();
        let y = rand_mat(4, 3, 9);
        let r = [0.7, 1.9];
        let covs: Vec<CMatrix> = r.iter().map(|&v| linalg::identity(3) * c(v)).collect();
        let phi_s = linalg::select_columns(&phi, &[0, 2]);
        let gram = phi_s.adjoint() * &phi_s;
        let matched = phi_s.adjoint() * &y;
        let fast = per_antenna(&gram, &matched, &r, 0.2).unwrap();
        let dense = stacked(&gram, &matched, &covs, 0.2).unwrap();
        assert!(linalg::fro_norm(&(fast - dense)) < 1e-12);
    }

    #[test]
    fn dense_path_matches_textbook_form() {
        // X̂ via C Aᴴ (A C Aᴴ + σ²I)⁻¹ vec(Y), built explicitly
        let (tau, m) = (4usize, 2usize);
        let phi = gen_pilots(tau, 3, 10).unwrap();
        let y = rand_mat(tau, m, 11);
        let support = vec![0usize, 2];
        let covs: Vec<CMatrix> = (0..2)
            .map(|k| {
                let a = rand_mat(m, m, 20 + k);
                &a * a.adjoint() + linalg::identity(m) * c(0.2)
            })
            .collect();
        let s = support.len();
        let phi_s = linalg::select_columns(&phi, &support);
        let mut a_big = CMatrix::zeros(tau * m, s * m);
        for ant in 0..m {
            for t in 0..tau {
                for k in 0..s {
                    a_big[(ant * tau + t, ant * s + k)] = phi_s[(t, k)];
                }
            }
        }
        let mut c_big = CMatrix::zeros(s * m, s * m);
        for k in 0..s {
            for a in 0..m {
                for b in 0..m {
                    c_big[(a * s + k, b * s + k)] = covs[k][(a, b)];
                }
            }
        }
        let vec_y = DVector::from_iterator(tau * m, y.iter().copied());
        let noise = 0.4;
        let inner = &a_big * &c_big * a_big.adjoint() + linalg::identity(tau * m) * c(noise);
        let u = &c_big * a_big.adjoint() * inner.lu().solve(&vec_y).unwrap();
        let est = oracle_mmse(
            &y,
            &phi,
            &OracleInfo {
                support: support.clone(),
                covariances: covs,
                noise_var: noise,
            },
        )
        .unwrap();
        for ant in 0..m {
            for (k, &i) in support.iter().enumerate() {
                assert!((est[(ant, i)] - u[ant * s + k]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn ir_l21_zero_signal() {
        let layout = ClusterLayout::new(6, 2).unwrap();
        let phi = gen_pilots(4, 6, 1).unwrap();
        let sol = ir_l21_admm(&CMatrix::zeros(4, 2), &phi, &layout, &SolverParams::default()).unwrap();
        assert_eq!(sol.x_hat, CMatrix::zeros(2, 6));
        assert!(sol.support.is_empty());
    }
}
