//! Channel-estimation and activity-detection quality measures.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMatrix};

/// Running NMSE as a ratio of sums: `Σ‖X − X̂‖²_F / Σ‖X‖²_F`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NmseAccumulator {
    pub num: f64,
    pub den: f64,
    pub trials: usize,
}

impl NmseAccumulator {
    pub fn add(&mut self, num: f64, den: f64) {
        self.num += num;
        self.den += den;
        self.trials += 1;
    }

    pub fn merge(mut self, other: NmseAccumulator) -> Self {
        self.num += other.num;
        self.den += other.den;
        self.trials += other.trials;
        self
    }

    /// `None` while no signal energy has been accumulated.
    pub fn nmse(&self) -> Option<f64> {
        (self.den > 0.0).then(|| self.num / self.den)
    }
}

/// Adds one trial's `(‖X − X̂‖², ‖X‖²)` pair.
pub fn nmse_accumulate(x_true: &CMatrix, x_hat: &CMatrix, acc: &mut NmseAccumulator) {
    acc.add(linalg::fro_norm_sq(&(x_true - x_hat)), linalg::fro_norm_sq(x_true));
}

pub fn to_db(value: f64) -> f64 {
    10.0 * value.log10()
}

/// How the set difference in the SRR denominator is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetDifference {
    /// `|S Δ Ŝ|`: misses and false alarms.
    #[default]
    Symmetric,
    /// `|S \ Ŝ|`: misses only.
    OneSided,
}

/// Support recovery rate `|S ∩ Ŝ| / (|S − Ŝ| + K)` with `K = |S|`.
///
/// Returns 1 when both sets are empty.
pub fn srr(truth: &[usize], detected: &[usize], mode: SetDifference) -> f64 {
    let s: BTreeSet<usize> = truth.iter().copied().collect();
    let s_hat: BTreeSet<usize> = detected.iter().copied().collect();
    let k = s.len();
    let hits = s.intersection(&s_hat).count();
    let diff = match mode {
        SetDifference::Symmetric => s.symmetric_difference(&s_hat).count(),
        SetDifference::OneSided => s.difference(&s_hat).count(),
    };
    if k == 0 && diff == 0 {
        return 1.0;
    }
    hits as f64 / (diff + k) as f64
}

/// `{i : ‖x̂_i‖ > threshold}`.
pub fn detect_support(x_hat: &CMatrix, threshold: f64) -> Vec<usize> {
    linalg::col_norms(x_hat)
        .into_iter()
        .enumerate()
        .filter(|&(_, n)| n > threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Per-trial scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub nmse_num: f64,
    pub nmse_den: f64,
    pub srr: f64,
    pub support: Vec<usize>,
}

impl TrialMetrics {
    pub fn evaluate(x_true: &CMatrix, x_hat: &CMatrix, truth: &[usize], support: Vec<usize>) -> Self {
        Self {
            nmse_num: linalg::fro_norm_sq(&(x_true - x_hat)),
            nmse_den: linalg::fro_norm_sq(x_true),
            srr: srr(truth, &support, SetDifference::Symmetric),
            support,
        }
    }
}
