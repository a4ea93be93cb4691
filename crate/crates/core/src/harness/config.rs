use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{JuiceError, Result};
use crate::model::{ActivityKind, ChannelParams, PilotKind, SystemParams};
use crate::solver::SolverParams;

/// Solver settings of one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub solver: SolverParams,
    /// Multiply `β₁, β₂, β₃` by the noise variance `σ²` before solving, as
    /// in the MAP objective scaled to a unit data-fit weight.
    pub noise_scaled_betas: bool,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            solver: SolverParams::default(),
            noise_scaled_betas: true,
        }
    }
}

impl AlgorithmConfig {
    /// Solver parameters for an instance with noise variance `noise_var`.
    pub fn resolve(&self, noise_var: f64) -> SolverParams {
        let mut p = self.solver.clone();
        if self.noise_scaled_betas {
            p.beta1 *= noise_var;
            p.beta2 *= noise_var;
            p.beta3 *= noise_var;
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    /// Pilot lengths `τ_p` to sweep.
    pub sweep: Vec<usize>,
    /// Per-antenna SNR `1/σ²` in dB; `None` means noiseless.
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub pilots: PilotKind,
    /// Write wall-clock times to the CSV. Off by default so that output is
    /// byte-identical across runs.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub system: SystemParams,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub proposed: AlgorithmConfig,
    #[serde(default)]
    pub ir_l21: AlgorithmConfig,
}

impl ExperimentConfig {
    /// Reduced configuration: `M=8, N=100, C=10, K=8` in 2 clusters.
    pub fn desk() -> Self {
        Self {
            seed: 2024,
            trials: 100,
            sweep: vec![10, 20, 30, 40, 50],
            snr_db: Some(10.0),
            pilots: PilotKind::Bernoulli,
            record_timing: false,
            output: None,
            system: SystemParams {
                n_antennas: 8,
                n_users: 100,
                n_clusters: 10,
                n_active: 8,
                activity: ActivityKind::Clustered,
                active_clusters: 2,
            },
            channel: ChannelParams::default(),
            proposed: AlgorithmConfig::default(),
            ir_l21: AlgorithmConfig::default(),
        }
    }

    /// Full-size configuration: `M=20, N=500, C=20, K=16` in 2 clusters.
    pub fn paper() -> Self {
        Self {
            sweep: vec![20, 30, 40, 50, 60, 70, 80],
            system: SystemParams {
                n_antennas: 20,
                n_users: 500,
                n_clusters: 20,
                n_active: 16,
                activity: ActivityKind::Clustered,
                active_clusters: 2,
            },
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(JuiceError::Config(format!("unknown preset '{other}' (expected desk|paper)"))),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| JuiceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| JuiceError::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| JuiceError::parse(path, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| JuiceError::Config(e.to_string()))
    }

    /// `σ² = 10^(−SNR/10)`, or 0 without an SNR.
    pub fn noise_var(&self) -> f64 {
        self.snr_db.map_or(0.0, |snr| 10f64.powf(-snr / 10.0))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(JuiceError::Config(msg));
        let s = &self.system;
        if s.n_antennas == 0 || s.n_users == 0 || s.n_clusters == 0 {
            return bad("M, N and C must be positive".into());
        }
        if s.n_users % s.n_clusters != 0 {
            return bad(format!("N={} is not divisible by C={}", s.n_users, s.n_clusters));
        }
        if s.n_active > s.n_users {
            return bad(format!("K={} exceeds N={}", s.n_active, s.n_users));
        }
        if s.activity == ActivityKind::Clustered && s.n_active > 0 {
            let l = s.n_users / s.n_clusters;
            if s.active_clusters == 0 || s.active_clusters > s.n_clusters || s.n_active > s.active_clusters * l {
                return bad(format!(
                    "{} active users do not fit in {} active clusters of {l}",
                    s.n_active, s.active_clusters
                ));
            }
        }
        if self.sweep.is_empty() || self.sweep.contains(&0) {
            return bad("the τ_p sweep must be nonempty and positive".into());
        }
        if self.pilots == PilotKind::Orthonormal && self.sweep.iter().any(|&t| t < s.n_users) {
            return bad("orthonormal pilots need τ_p ≥ N at every sweep point".into());
        }
        if self.trials == 0 {
            return bad("at least one trial per point is required".into());
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return bad(format!("SNR must be finite, got {snr}"));
            }
        }
        let c = &self.channel;
        if !(0.0..=1.0).contains(&c.zeta) || !(c.loading >= 0.0) || !(c.angular_std_deg >= 0.0) {
            return bad("channel parameters out of range".into());
        }
        self.proposed.solver.validate()?;
        self.ir_l21.solver.clone().ir_l21().validate()
    }
}
