use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{JuiceError, Result};
use crate::model::ClusterLayout;
use crate::rng::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivityKind {
    Clustered,
    Random,
}

impl std::str::FromStr for ActivityKind {
    type Err = JuiceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clustered" => Ok(Self::Clustered),
            "random" => Ok(Self::Random),
            other => Err(JuiceError::Config(format!(
                "unknown activity kind '{other}' (expected clustered|random)"
            ))),
        }
    }
}

/// Binary activity vector together with its support.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityPattern {
    gamma: Vec<bool>,
    active: Vec<usize>,
    kind: ActivityKind,
}

impl ActivityPattern {
    pub fn from_support(n_users: usize, mut active: Vec<usize>, kind: ActivityKind) -> Result<Self> {
        active.sort_unstable();
        active.dedup();
        if active.last().is_some_and(|&i| i >= n_users) {
            return Err(JuiceError::Dimension(format!("active user index out of range for N={n_users}")));
        }
        let mut gamma = vec![false; n_users];
        for &i in &active {
            gamma[i] = true;
        }
        Ok(Self { gamma, active, kind })
    }

    pub fn gamma(&self) -> &[bool] {
        &self.gamma
    }

    /// Active user indices, ascending.
    pub fn active_users(&self) -> &[usize] {
        &self.active
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    pub fn n_users(&self) -> usize {
        self.gamma.len()
    }

    pub fn kind(&self) -> ActivityKind {
        self.kind
    }

    /// Clusters that contain at least one active user, ascending.
    pub fn active_clusters(&self, layout: &ClusterLayout) -> Vec<usize> {
        let mut out: Vec<usize> = self.active.iter().map(|&i| layout.cluster_of(i)).collect();
        out.dedup();
        out
    }
}

/// Draws an activity pattern with `k` active users.
///
/// `Clustered`: `active_clusters` clusters chosen uniformly without
/// replacement, then `k / active_clusters` users uniformly within each.
/// `Random`: `k` users uniformly among all `N`.
pub fn sample_activity(
    layout: &ClusterLayout,
    kind: ActivityKind,
    k: usize,
    active_clusters: usize,
    seed: u64,
) -> Result<ActivityPattern> {
    let n = layout.n_users();
    let mut rng = rng::rng_for(seed, stream::ACTIVITY);
    let active = match kind {
        _ if k == 0 => Vec::new(),
        ActivityKind::Random => {
            if k > n {
                return Err(JuiceError::Config(format!("cannot activate {k} of {n} users")));
            }
            index::sample(&mut rng, n, k).into_vec()
        }
        ActivityKind::Clustered => {
            let l = layout.users_per_cluster();
            if active_clusters == 0 || k % active_clusters != 0 {
                return Err(JuiceError::Config(format!(
                    "K={k} active users cannot be split evenly over {active_clusters} clusters"
                )));
            }
            if active_clusters > layout.n_clusters() || k / active_clusters > l {
                return Err(JuiceError::Config(format!(
                    "K={k} over {active_clusters} clusters exceeds the layout ({} clusters of {l})",
                    layout.n_clusters()
                )));
            }
            let per_cluster = k / active_clusters;
            let clusters = index::sample(&mut rng, layout.n_clusters(), active_clusters).into_vec();
            let mut users = Vec::with_capacity(k);
            for cl in clusters {
                let base = layout.members(cl).start;
                users.extend(index::sample(&mut rng, l, per_cluster).into_iter().map(|u| base + u));
            }
            users
        }
    };
    ActivityPattern::from_support(n, active, kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clustered_paper_configuration() {
        let layout = ClusterLayout::new(500, 20).unwrap();
        for seed in 0..20 {
            let act = sample_activity(&layout, ActivityKind::Clustered, 16, 2, seed).unwrap();
            assert_eq!(act.n_active(), 16);
            let clusters = act.active_clusters(&layout);
            assert_eq!(clusters.len(), 2);
            for cl in clusters {
                let count = act.active_users().iter().filter(|&&i| layout.cluster_of(i) == cl).count();
                assert_eq!(count, 8);
            }
            let gamma_count = act.gamma().iter().filter(|&&g| g).count();
            assert_eq!(gamma_count, 16);
        }
    }

    #[test]
    fn zero_activity() {
        let layout = ClusterLayout::new(20, 4).unwrap();
        let act = sample_activity(&layout, ActivityKind::Clustered, 0, 2, 3).unwrap();
        assert!(act.gamma().iter().all(|&g| !g));
        assert!(act.active_users().is_empty());
    }

    #[test]
    fn infeasible_requests() {
        let layout = ClusterLayout::new(20, 4).unwrap();
        assert!(sample_activity(&layout, ActivityKind::Clustered, 12, 2, 0).is_err()); // 6 > L=5
        assert!(sample_activity(&layout, ActivityKind::Clustered, 5, 2, 0).is_err());
        assert!(sample_activity(&layout, ActivityKind::Clustered, 10, 5, 0).is_err());
        assert!(sample_activity(&layout, ActivityKind::Random, 21, 0, 0).is_err());
    }

    #[test]
    fn random_activation_frequency_is_uniform() {
        let layout = ClusterLayout::new(500, 20).unwrap();
        let draws = 10_000u64;
        let mut counts = vec![0u32; 500];
        for seed in 0..draws {
            let act = sample_activity(&layout, ActivityKind::Random, 16, 0, seed).unwrap();
            for &i in act.active_users() {
                counts[i] += 1;
            }
        }
        let p = 16.0 / 500.0;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        let mut outside = 0;
        for &cnt in &counts {
            let freq = cnt as f64 / draws as f64;
            if (freq - p).abs() > 3.0 * se {
                outside += 1;
            }
        }
        // 3σ band: expect ~0.27% of 500 users outside; allow generous slack
        assert!(outside <= 8, "{outside} users outside the 3σ band");
        let overall: u32 = counts.iter().sum();
        assert_eq!(overall as u64, 16 * draws);
    }

    #[test]
    fn deterministic_given_seed() {
        let layout = ClusterLayout::new(100, 10).unwrap();
        let a = sample_activity(&layout, ActivityKind::Clustered, 8, 2, 99).unwrap();
        let b = sample_activity(&layout, ActivityKind::Clustered, 8, 2, 99).unwrap();
        assert_eq!(a, b);
    }
}
