use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::laws::{InterarrivalLaw, SizeLaw};
use crate::error::{invalid, Result};

/// Joint law of a cluster `(L, (T_j))` given the interarrival `x` that ended at its parent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClusterModel {
    /// `L = 0`.
    Empty,
    /// `L = size`, every offset equal to `offset`.
    Fixed { size: usize, offset: f64 },
    /// Offsets are partial sums of i.i.d. nonnegative steps; independent of `x`.
    BartlettLewis {
        size: SizeLaw,
        step: InterarrivalLaw,
    },
    /// Size drawn from `above` when `x > threshold`, else from `below`; offsets are
    /// `x + jitter_sd * N(0, 1)`.
    Threshold {
        threshold: f64,
        above: SizeLaw,
        below: SizeLaw,
        jitter_sd: f64,
    },
}

impl ClusterModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            ClusterModel::Empty => Ok(()),
            ClusterModel::Fixed { offset, .. } => {
                if offset.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("fixed cluster offset must be finite"))
                }
            }
            ClusterModel::BartlettLewis { size, step } => {
                size.validate()?;
                step.validate()
            }
            ClusterModel::Threshold {
                threshold,
                above,
                below,
                jitter_sd,
            } => {
                above.validate()?;
                below.validate()?;
                if !threshold.is_finite() || !(*jitter_sd >= 0.0 && jitter_sd.is_finite()) {
                    return Err(invalid(
                        "threshold cluster needs finite threshold and jitter_sd >= 0",
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn depends_on_interarrival(&self) -> bool {
        matches!(self, ClusterModel::Threshold { .. })
    }

    /// Draws the cluster offsets; the cluster size is the returned length.
    pub fn sample<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::new();
        self.sample_into(x, rng, &mut out);
        out
    }

    /// Same draws as [`ClusterModel::sample`], written into a reused buffer.
    pub fn sample_into<R: Rng + ?Sized>(&self, x: f64, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        match self {
            ClusterModel::Empty => {}
            ClusterModel::Fixed { size, offset } => out.resize(*size, *offset),
            ClusterModel::BartlettLewis { size, step } => {
                let n = size.sample(rng);
                let mut acc = 0.0;
                for _ in 0..n {
                    acc += step.sample(rng);
                    out.push(acc);
                }
            }
            ClusterModel::Threshold {
                threshold,
                above,
                below,
                jitter_sd,
            } => {
                let law = if x > *threshold { above } else { below };
                let n = law.sample(rng);
                for _ in 0..n {
                    let z: f64 = StandardNormal.sample(rng);
                    out.push(x + jitter_sd * z);
                }
            }
        }
    }

    /// `E[L]` when the interarrival has law `law`.
    pub fn mean_size(&self, law: &InterarrivalLaw) -> Option<f64> {
        Some(match self {
            ClusterModel::Empty => 0.0,
            ClusterModel::Fixed { size, .. } => *size as f64,
            ClusterModel::BartlettLewis { size, .. } => size.mean(),
            ClusterModel::Threshold {
                threshold,
                above,
                below,
                ..
            } => {
                let p_below = law.cdf(*threshold);
                above.mean() * (1.0 - p_below) + below.mean() * p_below
            }
        })
    }

    /// `E[L R]` with `R` the cluster radius.
    pub fn mean_size_radius(&self, _law: &InterarrivalLaw) -> Option<f64> {
        match self {
            ClusterModel::Empty => Some(0.0),
            ClusterModel::Fixed { size, offset } => Some(*size as f64 * offset.abs()),
            // R is the last partial sum, so E[L R] = E[L^2] E[Y].
            ClusterModel::BartlettLewis { size, step } => Some(size.second_moment() * step.mean()),
            ClusterModel::Threshold { .. } => None,
        }
    }

    /// `E[L X]` with `X` the interarrival ending at the parent.
    pub fn mean_size_interarrival(&self, law: &InterarrivalLaw) -> Option<f64> {
        let mu = law.mean();
        Some(match self {
            ClusterModel::Empty => 0.0,
            ClusterModel::Fixed { size, .. } => *size as f64 * mu,
            ClusterModel::BartlettLewis { size, .. } => size.mean() * mu,
            ClusterModel::Threshold {
                threshold,
                above,
                below,
                ..
            } => {
                let low = law.partial_mean(*threshold);
                above.mean() * (mu - low) + below.mean() * low
            }
        })
    }
}

/// Farthest point of a cluster from its parent; 0 for an empty cluster.
pub fn cluster_radius(offsets: &[f64]) -> f64 {
    offsets.iter().fold(0.0, |r, o| r.max(o.abs()))
}
