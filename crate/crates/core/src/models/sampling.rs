use rand::Rng;

use super::cluster::{cluster_radius, ClusterModel};
use super::laws::InterarrivalLaw;
use super::spec::ProcessSpec;
use crate::error::{Error, Result};
use crate::pattern::{MarkedArrival, MarkedPattern, PointPattern, Window};
use crate::rng::RngStream;

/// Number of pilot clusters drawn to size the guard band.
pub const PILOT_DRAWS: usize = 10_000;
const PILOT_SEED: u64 = 0x5eed_6a7d_ba4d_0001;
/// The guard is this factor times the pilot `(1 - delta)` radius quantile.
const GUARD_MARGIN: f64 = 1.1;

pub fn sample_interarrival<R: Rng + ?Sized>(law: &InterarrivalLaw, rng: &mut R) -> f64 {
    law.sample(rng)
}

/// Cluster `(size, offsets)` conditioned on the interarrival `x`.
pub fn sample_cluster<R: Rng + ?Sized>(
    model: &ClusterModel,
    x: f64,
    rng: &mut R,
) -> (usize, Vec<f64>) {
    let offsets = model.sample(x, rng);
    (offsets.len(), offsets)
}

/// Guard band sizing from pilot cluster draws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuardBand {
    /// Margin added beyond each simulated window edge.
    pub width: f64,
    /// Pilot `(1 - delta)` quantile of the cluster radius.
    pub radius_quantile: f64,
    /// Pilot estimate of `E[L (R - width)^+]`, the Campbell mass a single side can miss
    /// per unit parent intensity.
    pub excess_mass: f64,
}

impl GuardBand {
    pub fn estimate(spec: &ProcessSpec) -> Self {
        let mut rng = RngStream::new(PILOT_SEED, 0);
        let mut buf = Vec::new();
        let mut draws: Vec<(usize, f64)> = (0..PILOT_DRAWS)
            .map(|_| {
                let x = spec.interarrival.sample(&mut rng);
                spec.cluster.sample_into(x, &mut rng, &mut buf);
                (buf.len(), cluster_radius(&buf))
            })
            .collect();
        draws.sort_by(|a, b| a.1.total_cmp(&b.1));
        let idx = (((1.0 - spec.guard_delta) * PILOT_DRAWS as f64).ceil() as usize)
            .clamp(1, PILOT_DRAWS)
            - 1;
        let radius_quantile = draws[idx].1;
        let width = GUARD_MARGIN * radius_quantile;
        let excess_mass = draws
            .iter()
            .map(|&(l, r)| l as f64 * (r - width).max(0.0))
            .sum::<f64>()
            / PILOT_DRAWS as f64;
        Self {
            width,
            radius_quantile,
            excess_mass,
        }
    }

    pub fn fixed(width: f64) -> Self {
        Self {
            width,
            radius_quantile: f64::NAN,
            excess_mass: f64::NAN,
        }
    }
}

/// A realization of the cluster process restricted to an observation window.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSample {
    pub pattern: PointPattern,
    /// Cluster points that fell outside the simulated region.
    pub overflow: usize,
    /// Estimated expected number of window points missed because their parents lie
    /// beyond the guard band.
    pub truncation_bias_bound: f64,
}

/// Sampler for one process spec. Holds the validated spec and its guard band.
#[derive(Clone, Debug)]
pub struct Simulator {
    spec: ProcessSpec,
    guard: GuardBand,
}

impl Simulator {
    pub fn new(spec: ProcessSpec) -> Result<Self> {
        spec.validate()?;
        let guard = GuardBand::estimate(&spec);
        Ok(Self { spec, guard })
    }

    pub fn with_guard(spec: ProcessSpec, guard: GuardBand) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, guard })
    }

    pub fn spec(&self) -> &ProcessSpec {
        &self.spec
    }

    pub fn guard(&self) -> GuardBand {
        self.guard
    }

    /// Walks the delayed arrivals `T'_0 = X'_0, T'_i = T'_{i-1} + X'_i` up to and including
    /// the last epoch `<= limit`, handing each arrival's epoch, interarrival and cluster
    /// offsets to `visit`.
    fn walk_delayed(
        &self,
        limit: f64,
        rng: &mut RngStream,
        mut visit: impl FnMut(f64, f64, &[f64]),
    ) -> Result<()> {
        let spec = &self.spec;
        let mut buf = Vec::new();
        let x0 = spec.delay.sample(rng);
        let mut epoch = x0;
        if epoch > limit {
            return Ok(());
        }
        spec.delay_cluster.sample_into(x0, rng, &mut buf);
        visit(epoch, x0, &buf);
        let mut count = 1usize;
        loop {
            let x = spec.interarrival.sample(rng);
            epoch += x;
            if epoch > limit {
                return Ok(());
            }
            count += 1;
            if count > spec.runaway_cap {
                return Err(Error::RunawayGeneration {
                    cap: spec.runaway_cap,
                });
            }
            spec.cluster.sample_into(x, rng, &mut buf);
            visit(epoch, x, &buf);
        }
    }

    /// Delayed marked renewal arrivals with epochs in `[0, horizon + guard]`.
    pub fn delayed_marked_renewal(
        &self,
        horizon: f64,
        guard: f64,
        rng: &mut RngStream,
    ) -> Result<MarkedPattern> {
        let limit = horizon + guard;
        let mut arrivals = Vec::new();
        self.walk_delayed(limit, rng, |epoch, x, offsets| {
            arrivals.push(MarkedArrival {
                epoch,
                interarrival: x,
                offsets: offsets.to_vec(),
            })
        })?;
        MarkedPattern::new(
            arrivals,
            Window::new(f64::NEG_INFINITY, limit.max(f64::MIN))?,
        )
    }

    /// Cluster process of the delayed spec on `(lo, hi]`. Parents are simulated on
    /// `[0, hi + guard]`.
    pub fn renewal_cluster_process(
        &self,
        lo: f64,
        hi: f64,
        rng: &mut RngStream,
    ) -> Result<ClusterSample> {
        let window = Window::new(lo, hi)?;
        let limit = hi + self.guard.width;
        let include_parents = self.spec.include_parents;
        let mut points = Vec::new();
        let mut overflow = 0usize;
        self.walk_delayed(limit, rng, |epoch, _, offsets| {
            if include_parents && window.contains(epoch) {
                points.push(epoch);
            }
            for &o in offsets {
                let t = epoch + o;
                if t > limit {
                    overflow += 1;
                } else if window.contains(t) {
                    points.push(t);
                }
            }
        })?;
        points.sort_unstable_by(f64::total_cmp);
        Ok(ClusterSample {
            pattern: PointPattern::new(points, window)?,
            overflow,
            truncation_bias_bound: self.guard.excess_mass / self.spec.mean_interarrival(),
        })
    }
}

pub fn sample_delayed_marked_renewal(
    spec: &ProcessSpec,
    horizon: f64,
    guard: f64,
    rng: &mut RngStream,
) -> Result<MarkedPattern> {
    Simulator::with_guard(spec.clone(), GuardBand::fixed(guard))?
        .delayed_marked_renewal(horizon, guard, rng)
}

pub fn sample_renewal_cluster_process(
    spec: &ProcessSpec,
    window_lo: f64,
    window_hi: f64,
    rng: &mut RngStream,
) -> Result<ClusterSample> {
    Simulator::new(spec.clone())?.renewal_cluster_process(window_lo, window_hi, rng)
}
