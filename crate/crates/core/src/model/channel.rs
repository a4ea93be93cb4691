//! Spatially correlated channels under a local scattering model, per-cluster
//! precision matrices, power control and mismatched prior guesses.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{JuiceError, Result};
use crate::linalg::{self, c, CMatrix};
use crate::model::{ActivityPattern, ClusterLayout};
use crate::rng::{self, stream};

/// Parameters of the Gaussian local scattering model for one cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringParams {
    /// Nominal angle of arrival, radians.
    pub nominal_angle: f64,
    /// Angular standard deviation, radians.
    pub angular_std: f64,
    /// Antenna spacing in wavelengths.
    pub spacing: f64,
}

/// Covariance of a half-wavelength-style ULA under Gaussian angular spread:
///
/// `R[m,n] = exp(j2πδ(m−n) sinθ) · exp(−½ (2πδ(m−n) σ cosθ)²)`.
///
/// Diagonal entries are 1, so the trace is `m_antennas`. The result is
/// positive semidefinite but may be numerically singular for small spreads;
/// diagonal loading happens in [`PrecisionSet::from_covariances`].
pub fn gen_covariance(m_antennas: usize, params: ScatteringParams) -> CMatrix {
    let ScatteringParams {
        nominal_angle,
        angular_std,
        spacing,
    } = params;
    let (sin, cos) = nominal_angle.sin_cos();
    CMatrix::from_fn(m_antennas, m_antennas, |m, n| {
        let dist = 2.0 * PI * spacing * (m as f64 - n as f64);
        let damp = (-0.5 * (dist * angular_std * cos).powi(2)).exp();
        Complex64::from_polar(damp, dist * sin)
    })
}

/// ULA steering vector `a(θ)[m] = exp(j2πδ m sinθ)`.
pub fn steering_vector(m_antennas: usize, angle: f64, spacing: f64) -> linalg::CVector {
    linalg::CVector::from_fn(m_antennas, |m, _| {
        Complex64::from_polar(1.0, 2.0 * PI * spacing * m as f64 * angle.sin())
    })
}

/// Draws one nominal angle per cluster, uniform in `[lo, hi]` radians.
pub fn draw_cluster_angles(n_clusters: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng::rng_for(seed, stream::ANGLES);
    (0..n_clusters).map(|_| rng.random_range(lo..=hi)).collect()
}

/// Per-cluster channel precision matrices and per-user transmit powers.
#[derive(Debug, Clone)]
pub struct PrecisionSet {
    /// `Σ_l`, one per cluster.
    pub precisions: Vec<CMatrix>,
    /// `Σ_l⁻¹` (loaded covariance), one per cluster.
    pub covariances: Vec<CMatrix>,
    /// `p_i`, one per user.
    pub powers: Vec<f64>,
}

impl PrecisionSet {
    /// `Σ_l = (R_l + loading·I)⁻¹` and `p_i = M / tr(Σ_l⁻¹)` for `i ∈ C_l`.
    pub fn from_covariances(layout: &ClusterLayout, covariances: Vec<CMatrix>, loading: f64) -> Result<Self> {
        if covariances.len() != layout.n_clusters() {
            return Err(JuiceError::Dimension(format!(
                "{} covariances for {} clusters",
                covariances.len(),
                layout.n_clusters()
            )));
        }
        let mut precisions = Vec::with_capacity(covariances.len());
        let mut loaded = Vec::with_capacity(covariances.len());
        let mut powers = vec![0.0; layout.n_users()];
        for (l, cov) in covariances.into_iter().enumerate() {
            let m = cov.nrows();
            let cov = linalg::hermitian_part(&(cov + linalg::identity(m) * c(loading)));
            let precision = linalg::inverse_hpd(&cov, "loaded channel covariance")?;
            let p = m as f64 / linalg::trace(&cov).re;
            for i in layout.members(l) {
                powers[i] = p;
            }
            precisions.push(precision);
            loaded.push(cov);
        }
        Ok(Self {
            precisions,
            covariances: loaded,
            powers,
        })
    }

    pub fn n_antennas(&self) -> usize {
        self.precisions.first().map_or(0, |p| p.nrows())
    }
}

/// Builds the precision set from per-cluster scattering parameters.
pub fn gen_precision_set(
    layout: &ClusterLayout,
    m_antennas: usize,
    scattering: &[ScatteringParams],
    loading: f64,
) -> Result<PrecisionSet> {
    let covs = scattering.iter().map(|&p| gen_covariance(m_antennas, p)).collect();
    PrecisionSet::from_covariances(layout, covs, loading)
}

/// Effective channel `X` (M×N): zero columns for inactive users, otherwise
/// `√p_i · (Σ_l⁻¹)^{1/2} w` with `w ~ CN(0, I)`.
pub fn sample_channels(
    activity: &ActivityPattern,
    layout: &ClusterLayout,
    precision_set: &PrecisionSet,
    seed: u64,
) -> Result<CMatrix> {
    if activity.n_users() != layout.n_users() || precision_set.powers.len() != layout.n_users() {
        return Err(JuiceError::Dimension(
            "activity, layout and precision set disagree on the number of users".into(),
        ));
    }
    let m = precision_set.n_antennas();
    let roots: Vec<CMatrix> = precision_set.covariances.iter().map(linalg::sqrt_hpsd).collect();
    let mut rng = rng::rng_for(seed, stream::CHANNELS);
    let mut x = CMatrix::zeros(m, layout.n_users());
    for &i in activity.active_users() {
        let w = rng::complex_normal_matrix(&mut rng, m, 1, 1.0);
        let h = &roots[layout.cluster_of(i)] * w;
        x.set_column(i, &(h.column(0) * c(precision_set.powers[i].sqrt())));
    }
    Ok(x)
}

/// Mismatched prior guess `B_l = ζ Ψ_l + (1 − ζ) Σ_l`.
///
/// `Ψ_l = A Aᴴ` with `A` standard complex Gaussian, rescaled so that
/// `tr Ψ_l = tr Σ_l`.
pub fn build_prior_guess(sigma: &CMatrix, zeta: f64, seed: u64) -> Result<CMatrix> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(JuiceError::Config(format!("mismatch level ζ={zeta} outside [0, 1]")));
    }
    let m = sigma.nrows();
    let mut rng = rng::rng_for(seed, stream::PRIOR_GUESS);
    let a = rng::complex_normal_matrix(&mut rng, m, m, 1.0);
    let psi = linalg::hermitian_part(&(&a * a.adjoint()));
    let psi = &psi * c(linalg::trace(sigma).re / linalg::trace(&psi).re);
    let b = linalg::hermitian_part(&(psi * c(zeta) + sigma * c(1.0 - zeta)));
    linalg::cholesky(&b, "prior guess B")?;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_activity, ActivityKind};

    fn deg(x: f64) -> f64 {
        x.to_radians()
    }

    /// `∫ exp(j2πδ d sin(θ+φ)) N(φ; 0, σ²) dφ` by composite Simpson over ±8σ.
    fn integrated_entry(d: f64, theta: f64, sigma: f64, spacing: f64) -> Complex64 {
        let n = 20_000;
        let (lo, hi) = (-8.0 * sigma, 8.0 * sigma);
        let h = (hi - lo) / n as f64;
        let f = |phi: f64| {
            let pdf = (-0.5 * (phi / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt());
            Complex64::from_polar(pdf, 2.0 * PI * spacing * d * (theta + phi).sin())
        };
        let mut acc = f(lo) + f(hi);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += f(lo + k as f64 * h) * w;
        }
        acc * (h / 3.0)
    }

    #[test]
    fn closed_form_matches_angular_integral() {
        let params = ScatteringParams {
            nominal_angle: deg(30.0),
            angular_std: deg(10.0),
            spacing: 0.5,
        };
        let r = gen_covariance(4, params);
        // entry (1,2) in one-based indexing: antenna offset m − n = −1
        let oracle = integrated_entry(-1.0, params.nominal_angle, params.angular_std, 0.5);
        let rel = (r[(0, 1)].norm() - oracle.norm()).abs() / oracle.norm();
        assert!(rel < 0.05, "closed form {} vs integral {}", r[(0, 1)].norm(), oracle.norm());
        let phase_err = (r[(0, 1)] / oracle).arg().abs();
        assert!(phase_err < 0.05, "phase error {phase_err}");
    }

    #[test]
    fn covariance_is_hermitian_with_unit_diagonal() {
        let r = gen_covariance(
            6,
            ScatteringParams {
                nominal_angle: deg(-40.0),
                angular_std: deg(10.0),
                spacing: 0.5,
            },
        );
        assert!(linalg::hermitian_defect(&r) < 1e-14);
        for m in 0..6 {
            assert!((r[(m, m)] - c(1.0)).norm() < 1e-15);
        }
        assert!((linalg::trace(&r).re - 6.0).abs() < 1e-12);
        assert!(linalg::hermitian_eigenvalues(&r)[0] > -1e-10);
    }

    #[test]
    fn uncorrelated_limit() {
        let r = gen_covariance(
            5,
            ScatteringParams {
                nominal_angle: deg(10.0),
                angular_std: 1e3,
                spacing: 0.5,
            },
        );
        assert!(linalg::fro_norm(&(r - linalg::identity(5))) < 1e-12);
    }

    #[test]
    fn single_path_limit() {
        let theta = deg(25.0);
        let r = gen_covariance(
            5,
            ScatteringParams {
                nominal_angle: theta,
                angular_std: 1e-9,
                spacing: 0.5,
            },
        );
        let a = steering_vector(5, theta, 0.5);
        let rank_one = &a * a.adjoint();
        assert!(linalg::fro_norm(&(&r - &rank_one)) < 1e-8);
        let eig = linalg::hermitian_eigenvalues(&r);
        assert!((eig[4] - 5.0).abs() < 1e-8);
    }

    #[test]
    fn identity_covariance_gives_unit_precision_and_power() {
        let layout = ClusterLayout::new(4, 2).unwrap();
        let set = PrecisionSet::from_covariances(&layout, vec![linalg::identity(3); 2], 0.0).unwrap();
        for p in &set.precisions {
            assert!(linalg::fro_norm(&(p - linalg::identity(3))) < 1e-14);
        }
        assert!(set.powers.iter().all(|&p| (p - 1.0).abs() < 1e-15));
    }

    #[test]
    fn power_inverse_to_trace() {
        let layout = ClusterLayout::new(2, 1).unwrap();
        let set = PrecisionSet::from_covariances(&layout, vec![linalg::identity(3) * c(2.0)], 0.0).unwrap();
        assert!(set.powers.iter().all(|&p| (p - 0.5).abs() < 1e-15));
    }

    #[test]
    fn full_scale_precisions_are_positive_definite() {
        let layout = ClusterLayout::new(500, 20).unwrap();
        let angles = draw_cluster_angles(20, deg(-60.0), deg(60.0), 11);
        let params: Vec<_> = angles
            .iter()
            .map(|&a| ScatteringParams {
                nominal_angle: a,
                angular_std: deg(10.0),
                spacing: 0.5,
            })
            .collect();
        let set = gen_precision_set(&layout, 20, &params, 1e-4).unwrap();
        for p in &set.precisions {
            assert!(linalg::hermitian_defect(p) < 1e-10);
            assert!(linalg::hermitian_eigenvalues(p)[0] > 0.0);
        }
        assert!(set.powers.iter().all(|&p| (p - 1.0 / (1.0 + 1e-4)).abs() < 1e-12));
    }

    #[test]
    fn inactive_channels_are_zero() {
        let layout = ClusterLayout::new(6, 2).unwrap();
        let set = PrecisionSet::from_covariances(&layout, vec![linalg::identity(2); 2], 0.0).unwrap();
        let none = sample_activity(&layout, ActivityKind::Random, 0, 0, 1).unwrap();
        let x = sample_channels(&none, &layout, &set, 5).unwrap();
        assert_eq!(x, CMatrix::zeros(2, 6));
        let some = sample_activity(&layout, ActivityKind::Random, 3, 0, 1).unwrap();
        let x = sample_channels(&some, &layout, &set, 5).unwrap();
        for i in 0..6 {
            assert_eq!(linalg::col_norm(&x, i) > 0.0, some.gamma()[i]);
        }
    }

    #[test]
    fn channel_sample_covariance() {
        // Σ_l = I, p_i = 1: sample covariance of active columns → I.
        let layout = ClusterLayout::new(10, 1).unwrap();
        let set = PrecisionSet::from_covariances(&layout, vec![linalg::identity(3)], 0.0).unwrap();
        let act = sample_activity(&layout, ActivityKind::Random, 10, 0, 0).unwrap();
        let mut acc = CMatrix::zeros(3, 3);
        let mut mean = linalg::CVector::zeros(3);
        let draws = 10_000;
        for s in 0..draws {
            let x = sample_channels(&act, &layout, &set, s).unwrap();
            acc += &x * x.adjoint();
            mean += x.column_sum();
        }
        let n = (draws * 10) as f64;
        let cov = acc / c(n);
        let rel = linalg::fro_norm(&(cov - linalg::identity(3))) / 3f64.sqrt();
        assert!(rel < 0.02, "relative Frobenius error {rel}");
        // standard error of each mean component is sqrt(1/n)
        let se = (1.0 / n).sqrt();
        for z in (mean / c(n)).iter() {
            assert!(z.norm() < 3.0 * se * 2f64.sqrt(), "mean {z}");
        }
    }

    #[test]
    fn correlated_channel_covariance_matches_power_scaled_covariance() {
        let layout = ClusterLayout::new(20, 1).unwrap();
        let params = ScatteringParams {
            nominal_angle: deg(20.0),
            angular_std: deg(10.0),
            spacing: 0.5,
        };
        let set = gen_precision_set(&layout, 4, &[params], 1e-4).unwrap();
        let act = sample_activity(&layout, ActivityKind::Random, 20, 0, 0).unwrap();
        let mut acc = CMatrix::zeros(4, 4);
        let draws = 5_000;
        for s in 0..draws {
            let x = sample_channels(&act, &layout, &set, 1000 + s).unwrap();
            acc += &x * x.adjoint();
        }
        let cov = acc / c((draws * 20) as f64);
        let target = &set.covariances[0] * c(set.powers[0]);
        let rel = linalg::fro_norm(&(cov - &target)) / linalg::fro_norm(&target);
        assert!(rel < 0.02, "relative Frobenius error {rel}");
    }

    #[test]
    fn prior_guess_extremes() {
        let sigma = linalg::identity(3) * c(2.0) + CMatrix::from_fn(3, 3, |r, k| c(0.1 * (r + k) as f64));
        let b0 = build_prior_guess(&sigma, 0.0, 4).unwrap();
        assert!(linalg::fro_norm(&(&b0 - &sigma)) < 1e-12);
        let b1 = build_prior_guess(&sigma, 1.0, 4).unwrap();
        assert!((linalg::trace(&b1).re - linalg::trace(&sigma).re).abs() < 1e-10);
        // ζ = 0.1: mismatch is exactly one tenth of the Ψ mismatch (same seed → same Ψ)
        let b = build_prior_guess(&sigma, 0.1, 4).unwrap();
        let lhs = linalg::fro_norm(&(&b - &sigma)) / linalg::fro_norm(&sigma);
        let rhs = 0.1 * linalg::fro_norm(&(&b1 - &sigma)) / linalg::fro_norm(&sigma);
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(linalg::is_hpd(&b));
        assert!(build_prior_guess(&sigma, 1.5, 4).is_err());
    }
}
