//! Synthetic system model: cluster layout, correlated channels, activity,
//! pilots and the received pilot signal `Y = Φ Xᵀ + W`.

mod activity;
mod channel;
mod instance;
mod layout;

pub use activity::{sample_activity, ActivityKind, ActivityPattern};
pub use channel::{
    build_prior_guess, draw_cluster_angles, gen_covariance, gen_precision_set, sample_channels, steering_vector,
    PrecisionSet, ScatteringParams,
};
pub use instance::{
    gen_pilots, orthonormal_pilots, synthesize, ChannelParams, InstanceSnapshot, MatrixRecord, PilotKind,
    ProblemInstance, Scenario, SystemParams,
};
pub use layout::{build_cluster_layout, ClusterLayout};
