use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{JuiceError, Result};

/// Partition of `n_users` into `n_clusters` contiguous blocks of equal size.
///
/// Indices are zero-based: cluster `l` owns users `l*L .. (l+1)*L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLayout {
    n_users: usize,
    n_clusters: usize,
    users_per_cluster: usize,
}

impl ClusterLayout {
    pub fn new(n_users: usize, n_clusters: usize) -> Result<Self> {
        if n_users == 0 || n_clusters == 0 {
            return Err(JuiceError::Config(format!(
                "cluster layout needs positive counts, got N={n_users}, C={n_clusters}"
            )));
        }
        if n_users % n_clusters != 0 {
            return Err(JuiceError::Config(format!(
                "{n_clusters} clusters do not divide {n_users} users"
            )));
        }
        Ok(Self {
            n_users,
            n_clusters,
            users_per_cluster: n_users / n_clusters,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn users_per_cluster(&self) -> usize {
        self.users_per_cluster
    }

    pub fn members(&self, cluster: usize) -> Range<usize> {
        let l = self.users_per_cluster;
        cluster * l..(cluster + 1) * l
    }

    pub fn cluster_of(&self, user: usize) -> usize {
        user / self.users_per_cluster
    }

    /// Every user of every listed cluster, ascending.
    pub fn expand(&self, clusters: &[usize]) -> Vec<usize> {
        let mut sorted = clusters.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        sorted.into_iter().flat_map(|l| self.members(l)).collect()
    }
}

/// Builds the contiguous-block layout; fails when `n_clusters` does not divide `n_users`.
pub fn build_cluster_layout(n_users: usize, n_clusters: usize) -> Result<ClusterLayout> {
    ClusterLayout::new(n_users, n_clusters)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_scale_layout() {
        let layout = build_cluster_layout(500, 20).unwrap();
        assert_eq!(layout.users_per_cluster(), 25);
        assert_eq!(layout.members(0), 0..25);
        assert_eq!(layout.members(19), 475..500);
    }

    #[test]
    fn small_layout() {
        let layout = build_cluster_layout(4, 2).unwrap();
        assert_eq!(layout.members(0).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(layout.members(1).collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(layout.cluster_of(3), 1);
    }

    #[test]
    fn non_divisible_is_config_error() {
        assert!(matches!(build_cluster_layout(5, 2), Err(JuiceError::Config(_))));
        assert!(build_cluster_layout(0, 1).is_err());
    }

    #[test]
    fn blocks_partition_users() {
        let layout = build_cluster_layout(60, 6).unwrap();
        let mut seen = vec![0u8; 60];
        for l in 0..6 {
            for i in layout.members(l) {
                seen[i] += 1;
                assert_eq!(layout.cluster_of(i), l);
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
        assert_eq!(layout.expand(&[2, 0, 2]), (0..10).chain(20..30).collect::<Vec<_>>());
    }
}
