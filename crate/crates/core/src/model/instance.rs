use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{JuiceError, Result};
use crate::linalg::{self, CMatrix};
use crate::model::{
    build_prior_guess, draw_cluster_angles, gen_precision_set, sample_activity, sample_channels, ActivityKind,
    ActivityPattern, ClusterLayout, PrecisionSet, ScatteringParams,
};
use crate::rng::{self, stream};

/// Complex Bernoulli pilot book: entries `(±1 ± j)/√(2τ_p)`, equiprobable.
pub fn gen_pilots(tau_p: usize, n_users: usize, seed: u64) -> Result<CMatrix> {
    if tau_p == 0 {
        return Err(JuiceError::Config("pilot length must be at least 1".into()));
    }
    let scale = 1.0 / (2.0 * tau_p as f64).sqrt();
    let mut rng = rng::rng_for(seed, stream::PILOTS);
    let mut phi = CMatrix::zeros(tau_p, n_users);
    for j in 0..n_users {
        for t in 0..tau_p {
            let re = if rng.random::<bool>() { scale } else { -scale };
            let im = if rng.random::<bool>() { scale } else { -scale };
            phi[(t, j)] = Complex64::new(re, im);
        }
    }
    Ok(phi)
}

/// `Y = Φ Xᵀ + W` with `W` i.i.d. `CN(0, σ²)`.
pub fn synthesize(pilots: &CMatrix, x: &CMatrix, noise_var: f64, seed: u64) -> Result<CMatrix> {
    if pilots.ncols() != x.ncols() {
        return Err(JuiceError::Dimension(format!(
            "pilot book has {} columns but the channel matrix has {}",
            pilots.ncols(),
            x.ncols()
        )));
    }
    if noise_var < 0.0 {
        return Err(JuiceError::Config(format!("negative noise variance {noise_var}")));
    }
    let mut y = pilots * x.transpose();
    if noise_var > 0.0 {
        let mut rng = rng::rng_for(seed, stream::NOISE);
        y += rng::complex_normal_matrix(&mut rng, y.nrows(), y.ncols(), noise_var);
    }
    Ok(y)
}

/// One received pilot block and the ground truth behind it.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub pilots: CMatrix,
    pub effective_channel: CMatrix,
    pub received: CMatrix,
    pub noise_var: f64,
    pub activity: ActivityPattern,
}

impl ProblemInstance {
    pub fn n_antennas(&self) -> usize {
        self.effective_channel.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.effective_channel.ncols()
    }

    pub fn pilot_length(&self) -> usize {
        self.pilots.nrows()
    }
}

/// System dimensions and activity model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    pub n_antennas: usize,
    pub n_users: usize,
    pub n_clusters: usize,
    pub n_active: usize,
    pub activity: ActivityKind,
    pub active_clusters: usize,
}

/// Local scattering and prior-mismatch parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub angle_min_deg: f64,
    pub angle_max_deg: f64,
    pub angular_std_deg: f64,
    pub spacing: f64,
    pub loading: f64,
    pub zeta: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            angle_min_deg: -60.0,
            angle_max_deg: 60.0,
            angular_std_deg: 10.0,
            spacing: 0.5,
            loading: 1e-4,
            zeta: 0.1,
        }
    }
}

/// Pilot construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PilotKind {
    /// Complex Bernoulli `(±1 ± j)/√(2τ_p)`.
    #[default]
    Bernoulli,
    /// Columns of the unitary DFT matrix; requires `τ_p ≥ N`.
    Orthonormal,
}

/// Unitary-DFT pilots: column `j` is `exp(−j2π t j/τ_p)/√τ_p`, `t = 0..τ_p`.
pub fn orthonormal_pilots(tau_p: usize, n_users: usize) -> Result<CMatrix> {
    if tau_p < n_users {
        return Err(JuiceError::Config(format!(
            "orthonormal pilots need τ_p ≥ N (got τ_p={tau_p}, N={n_users})"
        )));
    }
    let scale = 1.0 / (tau_p as f64).sqrt();
    Ok(CMatrix::from_fn(tau_p, n_users, |t, j| {
        let angle = -2.0 * std::f64::consts::PI * (t * j % tau_p) as f64 / tau_p as f64;
        Complex64::from_polar(scale, angle)
    }))
}

/// Everything one trial needs: layout, true statistics, prior guesses and the
/// observed instance.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub layout: ClusterLayout,
    pub precision_set: PrecisionSet,
    pub prior_guess: Vec<CMatrix>,
    pub instance: ProblemInstance,
}

impl Scenario {
    /// Generates a full scenario from explicit parameters and one seed.
    pub fn generate(
        system: &SystemParams,
        channel: &ChannelParams,
        pilots: PilotKind,
        tau_p: usize,
        noise_var: f64,
        seed: u64,
    ) -> Result<Self> {
        let layout = ClusterLayout::new(system.n_users, system.n_clusters)?;
        let angles = draw_cluster_angles(
            layout.n_clusters(),
            channel.angle_min_deg.to_radians(),
            channel.angle_max_deg.to_radians(),
            seed,
        );
        let scattering: Vec<ScatteringParams> = angles
            .into_iter()
            .map(|nominal_angle| ScatteringParams {
                nominal_angle,
                angular_std: channel.angular_std_deg.to_radians(),
                spacing: channel.spacing,
            })
            .collect();
        let precision_set = gen_precision_set(&layout, system.n_antennas, &scattering, channel.loading)?;
        let prior_guess = precision_set
            .precisions
            .iter()
            .enumerate()
            .map(|(l, sigma)| build_prior_guess(sigma, channel.zeta, rng::sub_seed(seed, l as u64)))
            .collect::<Result<Vec<_>>>()?;
        let activity = sample_activity(&layout, system.activity, system.n_active, system.active_clusters, seed)?;
        let x = sample_channels(&activity, &layout, &precision_set, seed)?;
        let phi = match pilots {
            PilotKind::Bernoulli => gen_pilots(tau_p, layout.n_users(), seed)?,
            PilotKind::Orthonormal => orthonormal_pilots(tau_p, layout.n_users())?,
        };
        let y = synthesize(&phi, &x, noise_var, seed)?;
        Ok(Self {
            seed,
            layout,
            precision_set,
            prior_guess,
            instance: ProblemInstance {
                pilots: phi,
                effective_channel: x,
                received: y,
                noise_var,
                activity,
            },
        })
    }
}

/// Column-major dense complex matrix in plain serializable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&CMatrix> for MatrixRecord {
    fn from(m: &CMatrix) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            re: m.iter().map(|z| z.re).collect(),
            im: m.iter().map(|z| z.im).collect(),
        }
    }
}

impl MatrixRecord {
    pub fn to_matrix(&self) -> Result<CMatrix> {
        let len = self.rows * self.cols;
        if self.re.len() != len || self.im.len() != len {
            return Err(JuiceError::Dimension(format!(
                "matrix record {}x{} carries {} real and {} imaginary parts",
                self.rows,
                self.cols,
                self.re.len(),
                self.im.len()
            )));
        }
        Ok(CMatrix::from_iterator(
            self.rows,
            self.cols,
            self.re.iter().zip(&self.im).map(|(&re, &im)| Complex64::new(re, im)),
        ))
    }
}

/// Reproducibility snapshot of a scenario (JSON).
///
/// Holds `Φ`, `X`, `Y`, `γ`, every `Σ_l`, every `B_l`, the powers, `σ²` and
/// the seed. Matrices use [`MatrixRecord`] (column-major real/imag arrays).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSnapshot {
    pub seed: u64,
    pub n_users: usize,
    pub n_clusters: usize,
    pub noise_var: f64,
    pub activity: ActivityKind,
    pub gamma: Vec<u8>,
    pub powers: Vec<f64>,
    pub pilots: MatrixRecord,
    pub effective_channel: MatrixRecord,
    pub received: MatrixRecord,
    pub precisions: Vec<MatrixRecord>,
    pub prior_guess: Vec<MatrixRecord>,
}

impl InstanceSnapshot {
    pub fn capture(scenario: &Scenario) -> Self {
        let inst = &scenario.instance;
        Self {
            seed: scenario.seed,
            n_users: scenario.layout.n_users(),
            n_clusters: scenario.layout.n_clusters(),
            noise_var: inst.noise_var,
            activity: inst.activity.kind(),
            gamma: inst.activity.gamma().iter().map(|&g| g as u8).collect(),
            powers: scenario.precision_set.powers.clone(),
            pilots: (&inst.pilots).into(),
            effective_channel: (&inst.effective_channel).into(),
            received: (&inst.received).into(),
            precisions: scenario.precision_set.precisions.iter().map(Into::into).collect(),
            prior_guess: scenario.prior_guess.iter().map(Into::into).collect(),
        }
    }

    /// Rebuilds the scenario; covariances are recomputed as `Σ_l⁻¹`.
    pub fn restore(&self) -> Result<Scenario> {
        let layout = ClusterLayout::new(self.n_users, self.n_clusters)?;
        let precisions = self.precisions.iter().map(MatrixRecord::to_matrix).collect::<Result<Vec<_>>>()?;
        let covariances = precisions
            .iter()
            .map(|p| linalg::inverse_hpd(p, "snapshot precision"))
            .collect::<Result<Vec<_>>>()?;
        let active = self.gamma.iter().enumerate().filter(|(_, &g)| g != 0).map(|(i, _)| i).collect();
        Ok(Scenario {
            seed: self.seed,
            layout,
            precision_set: PrecisionSet {
                precisions,
                covariances,
                powers: self.powers.clone(),
            },
            prior_guess: self.prior_guess.iter().map(MatrixRecord::to_matrix).collect::<Result<_>>()?,
            instance: ProblemInstance {
                pilots: self.pilots.to_matrix()?,
                effective_channel: self.effective_channel.to_matrix()?,
                received: self.received.to_matrix()?,
                noise_var: self.noise_var,
                activity: ActivityPattern::from_support(self.n_users, active, self.activity)?,
            },
        })
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| JuiceError::parse(path, e))?;
        std::fs::write(path, text).map_err(|e| JuiceError::io(path, e))
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| JuiceError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| JuiceError::parse(path, e))
    }
}
