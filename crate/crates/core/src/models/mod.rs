//! Interarrival, delay and cluster laws, process specs and the samplers built on them.

mod cluster;
mod laws;
mod sampling;
mod spec;

pub use cluster::{cluster_radius, ClusterModel};
pub use laws::{Delay, InterarrivalLaw, SizeLaw};
pub use sampling::{
    sample_cluster, sample_delayed_marked_renewal, sample_interarrival,
    sample_renewal_cluster_process, ClusterSample, GuardBand, Simulator, PILOT_DRAWS,
};
pub use spec::{
    bartlett_lewis_preset, example_two_cluster, example_two_preset, law_expr, parse_law_expr,
    parse_size_expr, size_expr, BartlettLewis, ProcessSpec, DEFAULT_GUARD_DELTA,
    DEFAULT_RUNAWAY_CAP, DEFAULT_SIZE_BIAS_POOL,
};

#[cfg(test)]
mod moment_tests;
