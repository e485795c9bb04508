//! Stationary and point-stationary versions of a marked renewal process.
//!
//! The straddling interval of the origin has the size-biased law `X*` (mark `W*`,
//! `E f(W*) = E[X f(W)] / mu`), the origin splits it uniformly (`T_0 = U X*`,
//! `T_{-1} = -(1 - U) X*`), and ordinary i.i.d. arrivals extend the pattern to both sides.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::harness::stats::{mean_and_se, two_sample_critical_value, two_sample_ks, KsReport};
use crate::models::{ClusterSample, ProcessSpec, Simulator};
use crate::pattern::{flatten, MarkedArrival, MarkedPattern, Window};
use crate::rng::{derive_stream_id, RngStream};
use crate::Execution;

/// How `X*` is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SizeBiasMethod {
    /// Exact: draw `X`, accept with probability `X / bound`.
    Rejection { bound: f64 },
    /// Approximate: draw `pool` candidates and resample one proportionally to `X`.
    /// Bias is `O(1 / pool)`.
    Pool { pool: usize },
}

impl SizeBiasMethod {
    pub fn for_spec(spec: &ProcessSpec) -> Result<Self> {
        match spec.interarrival.upper_bound() {
            Some(bound) => Ok(Self::Rejection { bound }),
            None if spec.size_bias_pool > 0 => Ok(Self::Pool {
                pool: spec.size_bias_pool,
            }),
            None => Err(Error::UnboundedWithoutPool),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Self::Rejection { .. })
    }
}

/// Draws an interarrival from the `x`-weighted version of the law sampled by `draw`.
pub fn size_biased_interarrival<R: Rng + ?Sized>(
    method: SizeBiasMethod,
    rng: &mut R,
    mut draw: impl FnMut(&mut R) -> f64,
) -> f64 {
    match method {
        SizeBiasMethod::Rejection { bound } => loop {
            let x = draw(rng);
            if rng.random::<f64>() * bound < x {
                return x;
            }
        },
        SizeBiasMethod::Pool { pool } => {
            let xs: Vec<f64> = (0..pool).map(|_| draw(rng)).collect();
            let total: f64 = xs.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for &x in &xs {
                if u < x {
                    return x;
                }
                u -= x;
            }
            xs[pool - 1]
        }
    }
}

/// Size-biased mark `W* = (X*, cluster | X*)`. The returned arrival's epoch is 0; callers
/// place it.
pub fn sample_size_biased_mark(spec: &ProcessSpec, rng: &mut RngStream) -> Result<MarkedArrival> {
    let method = SizeBiasMethod::for_spec(spec)?;
    Ok(size_biased_mark(spec, method, rng))
}

fn size_biased_mark(
    spec: &ProcessSpec,
    method: SizeBiasMethod,
    rng: &mut RngStream,
) -> MarkedArrival {
    let x = size_biased_interarrival(method, rng, |r| spec.interarrival.sample(r));
    let offsets = spec.cluster.sample(x, rng);
    MarkedArrival {
        epoch: 0.0,
        interarrival: x,
        offsets,
    }
}

/// Two-sided marked pattern with the arrival `T_0 >= 0` at `origin_index`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoSidedMarkedPattern {
    pub pattern: MarkedPattern,
    pub origin_index: usize,
    /// `X* = T_0 - T_{-1}`.
    pub straddle: f64,
    /// `U = T_0 / X*`.
    pub split: f64,
}

impl TwoSidedMarkedPattern {
    pub fn origin(&self) -> &MarkedArrival {
        &self.pattern.arrivals()[self.origin_index]
    }
}

impl Simulator {
    /// Stationary two-sided marked arrivals covering `(lo - guard, hi + guard]`.
    pub fn stationary_marked_renewal(
        &self,
        lo: f64,
        hi: f64,
        rng: &mut RngStream,
    ) -> Result<TwoSidedMarkedPattern> {
        let spec = self.spec();
        Window::new(lo, hi)?;
        let method = SizeBiasMethod::for_spec(spec)?;
        let g = self.guard().width;
        let (left_limit, right_limit) = (lo - g, hi + g);

        let star = size_biased_mark(spec, method, rng);
        let u: f64 = rng.random();
        let x_star = star.interarrival;
        let t0 = u * x_star;
        let t_minus1 = -(1.0 - u) * x_star;

        let mut right = vec![MarkedArrival { epoch: t0, ..star }];
        let mut epoch = t0;
        loop {
            let x = spec.interarrival.sample(rng);
            epoch += x;
            if epoch > right_limit {
                break;
            }
            if right.len() > spec.runaway_cap {
                return Err(Error::RunawayGeneration {
                    cap: spec.runaway_cap,
                });
            }
            let offsets = spec.cluster.sample(x, rng);
            right.push(MarkedArrival {
                epoch,
                interarrival: x,
                offsets,
            });
        }

        // Left side: each arrival's own interarrival is the gap to its predecessor.
        let mut left = Vec::new();
        let mut epoch = t_minus1;
        let window_lo = loop {
            if epoch <= left_limit {
                break epoch;
            }
            if left.len() > spec.runaway_cap {
                return Err(Error::RunawayGeneration {
                    cap: spec.runaway_cap,
                });
            }
            let x = spec.interarrival.sample(rng);
            let offsets = spec.cluster.sample(x, rng);
            left.push(MarkedArrival {
                epoch,
                interarrival: x,
                offsets,
            });
            epoch -= x;
        };

        let origin_index = left.len();
        left.reverse();
        left.extend(right);
        let window = Window::new(window_lo, right_limit.max(t0))?;
        Ok(TwoSidedMarkedPattern {
            pattern: MarkedPattern::new(left, window)?,
            origin_index,
            straddle: x_star,
            split: u,
        })
    }

    /// Stationary cluster process on `(lo, hi]`.
    pub fn stationary_cluster_process(
        &self,
        lo: f64,
        hi: f64,
        rng: &mut RngStream,
    ) -> Result<ClusterSample> {
        let two = self.stationary_marked_renewal(lo, hi, rng)?;
        let flat = flatten(&two.pattern, self.spec().include_parents);
        let (pattern, _) = flat.pattern.restrict(lo, hi)?;
        Ok(ClusterSample {
            pattern,
            overflow: flat.overflow,
            truncation_bias_bound: 2.0 * self.guard().excess_mass / self.spec().mean_interarrival(),
        })
    }
}

pub fn sample_stationary_marked_renewal(
    spec: &ProcessSpec,
    window_lo: f64,
    window_hi: f64,
    rng: &mut RngStream,
) -> Result<TwoSidedMarkedPattern> {
    Simulator::new(spec.clone())?.stationary_marked_renewal(window_lo, window_hi, rng)
}

pub fn sample_stationary_cluster_process(
    spec: &ProcessSpec,
    window_lo: f64,
    window_hi: f64,
    rng: &mut RngStream,
) -> Result<ClusterSample> {
    Simulator::new(spec.clone())?.stationary_cluster_process(window_lo, window_hi, rng)
}

/// Per-coordinate comparison of the zero-anchored process seen from `T_0` and from `T_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointStationarityReport {
    pub k: usize,
    pub coordinates: usize,
    pub n_rep: usize,
    /// KS results for interarrivals `1..=m`, then cluster sizes `1..=m`.
    pub tests: Vec<KsReport>,
    pub max_distance: f64,
    /// Bonferroni-adjusted critical value over all `2 m` coordinates.
    pub critical_value: f64,
    pub reject: bool,
}

#[allow(clippy::too_many_arguments)]
/// Simulates the zero-anchored process `T_0 = 0`, recenters at `T_k`, and compares the
/// next `coordinates` interarrivals and cluster sizes against those following the origin.
pub fn point_stationary_check(
    spec: &ProcessSpec,
    k: usize,
    coordinates: usize,
    n_rep: usize,
    alpha: f64,
    seed: u64,
    stream_id: u64,
    exec: Execution,
) -> Result<PointStationarityReport> {
    spec.validate()?;
    if coordinates == 0 || n_rep < 2 {
        return Err(invalid(
            "point stationarity check needs coordinates >= 1 and n_rep >= 2",
        ));
    }
    let m = coordinates;
    let rows = exec.map(n_rep, |r| {
        let mut rng = RngStream::new(seed, derive_stream_id(stream_id, r as u64));
        let mut xs = Vec::with_capacity(k + m);
        let mut ls = Vec::with_capacity(k + m);
        for _ in 0..k + m {
            let x = spec.interarrival.sample(&mut rng);
            xs.push(x);
            ls.push(spec.cluster.sample(x, &mut rng).len() as f64);
        }
        (xs, ls)
    });
    // which = 0 picks interarrivals, 1 cluster sizes
    let column = |which: usize, j: usize| -> Vec<f64> {
        rows.iter()
            .map(|(xs, ls)| if which == 0 { xs[j] } else { ls[j] })
            .collect()
    };
    let adjusted = alpha / (2 * m) as f64;
    let mut tests = Vec::with_capacity(2 * m);
    for which in 0..2 {
        for j in 0..m {
            let origin = column(which, j);
            let recentered = column(which, k + j);
            tests.push(two_sample_ks(&origin, &recentered, adjusted)?);
        }
    }
    let max_distance = tests.iter().map(|t| t.distance).fold(0.0, f64::max);
    let critical_value = two_sample_critical_value(adjusted, n_rep, n_rep);
    Ok(PointStationarityReport {
        k,
        coordinates: m,
        n_rep,
        max_distance,
        critical_value,
        reject: max_distance > critical_value,
        tests,
    })
}

/// Window counts of the stationary process on `(s, s + x]` at each shift, compared with
/// the counts at the first shift by a two-sample KS test per later shift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftInvarianceReport {
    pub shifts: Vec<f64>,
    pub x: f64,
    pub n_rep: usize,
    /// Mean window count at each shift.
    pub mean_counts: Vec<f64>,
    /// Standard error of each mean count.
    pub std_errors: Vec<f64>,
    /// KS of shift `i` against shift 0, for `i >= 1`.
    pub tests: Vec<KsReport>,
    pub reject: bool,
}

/// Each shift uses its own independent replications, so the samples are independent.
#[allow(clippy::too_many_arguments)]
pub fn shift_invariance_check(
    spec: &ProcessSpec,
    shifts: &[f64],
    x: f64,
    n_rep: usize,
    alpha: f64,
    seed: u64,
    stream_id: u64,
    exec: Execution,
) -> Result<ShiftInvarianceReport> {
    if shifts.len() < 2 || n_rep < 1 || !(x > 0.0 && x.is_finite()) {
        return Err(invalid(
            "shift check needs two or more shifts, n_rep >= 1 and finite x > 0",
        ));
    }
    if shifts.iter().any(|s| !s.is_finite()) {
        return Err(invalid("shifts must be finite"));
    }
    let sim = Simulator::new(spec.clone())?;
    let samples = shifts
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let parent = derive_stream_id(stream_id, i as u64);
            exec.try_map(n_rep, |r| {
                let mut rng = RngStream::new(seed, derive_stream_id(parent, r as u64));
                let c = sim.stationary_cluster_process(s, s + x, &mut rng)?;
                Ok::<f64, Error>(c.pattern.len() as f64)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean_counts, std_errors) = samples.iter().map(|v| mean_and_se(v)).unzip();
    let tests = samples[1..]
        .iter()
        .map(|v| two_sample_ks(&samples[0], v, alpha))
        .collect::<Result<Vec<_>>>()?;
    Ok(ShiftInvarianceReport {
        shifts: shifts.to_vec(),
        x,
        n_rep,
        mean_counts,
        std_errors,
        reject: tests.iter().any(|t| t.reject),
        tests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::stats::{correlation, one_sample_ks};
    use crate::models::{example_two_preset, ClusterModel, InterarrivalLaw};
    use crate::pattern::count_in;

    fn uniform_spec() -> ProcessSpec {
        ProcessSpec::new(InterarrivalLaw::uniform(0.0, 5.0), ClusterModel::Empty)
    }

    #[test]
    fn constant_weight_is_identity() {
        let mut rng = RngStream::new(0, 0);
        for _ in 0..100 {
            let x = size_biased_interarrival(
                SizeBiasMethod::Rejection { bound: 2.0 },
                &mut rng,
                |_| 2.0,
            );
            assert_eq!(x, 2.0);
            let x = size_biased_interarrival(SizeBiasMethod::Pool { pool: 16 }, &mut rng, |_| 2.0);
            assert_eq!(x, 2.0);
        }
    }

    #[test]
    fn size_biased_uniform_mean() {
        // E[X^2] / E[X]; midpoint quadrature of x^2 / 5 on (0, 5) gives 25/3
        let h = 5.0 / 100_000.0;
        let second: f64 = (0..100_000)
            .map(|i| ((i as f64 + 0.5) * h).powi(2) / 5.0 * h)
            .sum();
        let target = second / 2.5;
        assert!((target - 10.0 / 3.0).abs() < 1e-8);
        let spec = uniform_spec();
        let mut rng = RngStream::new(1, 0);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| {
                sample_size_biased_mark(&spec, &mut rng)
                    .unwrap()
                    .interarrival
            })
            .collect();
        let (m, se) = mean_and_se(&xs);
        assert!((m - target).abs() < 4.0 * se, "{m} vs {target}");
    }

    #[test]
    fn size_biased_tail_example_two() {
        // P(X* > 1) = (int_1^5 x / 5 dx) / 2.5 = 0.96
        let h = 4.0 / 100_000.0;
        let target: f64 = (0..100_000)
            .map(|i| (1.0 + (i as f64 + 0.5) * h) / 5.0 * h)
            .sum::<f64>()
            / 2.5;
        assert!((target - 0.96).abs() < 1e-9);
        let spec = example_two_preset();
        let mut rng = RngStream::new(2, 0);
        let hits: Vec<f64> = (0..100_000)
            .map(|_| {
                (sample_size_biased_mark(&spec, &mut rng)
                    .unwrap()
                    .interarrival
                    > 1.0) as u8 as f64
            })
            .collect();
        let (p, se) = mean_and_se(&hits);
        assert!((p - target).abs() < 4.0 * se, "{p}");
    }

    #[test]
    fn unbounded_without_pool_errors() {
        let mut spec = ProcessSpec::new(InterarrivalLaw::exponential(1.0), ClusterModel::Empty);
        spec.size_bias_pool = 0;
        assert!(matches!(
            sample_size_biased_mark(&spec, &mut RngStream::new(0, 0)),
            Err(Error::UnboundedWithoutPool)
        ));
        spec.size_bias_pool = 64;
        assert!(sample_size_biased_mark(&spec, &mut RngStream::new(0, 0)).is_ok());
    }

    #[test]
    fn exponential_origin_is_exponential() {
        let spec = ProcessSpec::new(InterarrivalLaw::exponential(1.5), ClusterModel::Empty);
        let sim = Simulator::new(spec).unwrap();
        let t0: Vec<f64> = (0..5000)
            .map(|r| {
                let p = sim
                    .stationary_marked_renewal(-1.0, 1.0, &mut RngStream::new(3, r))
                    .unwrap();
                p.origin().epoch
            })
            .collect();
        let ks = one_sample_ks(&t0, |x| 1.0 - (-1.5 * x).exp(), 0.01).unwrap();
        assert!(!ks.reject, "{ks:?}");
    }

    #[test]
    fn straddle_identity_and_structure() {
        let sim = Simulator::new(uniform_spec()).unwrap();
        let mut ratios = Vec::new();
        let mut straddles = Vec::new();
        let mut t0s = Vec::new();
        for r in 0..20_000 {
            let p = sim
                .stationary_marked_renewal(-20.0, 20.0, &mut RngStream::new(4, r))
                .unwrap();
            let arr = p.pattern.arrivals();
            let o = p.origin_index;
            assert!(arr[o].epoch >= 0.0 && arr[o - 1].epoch < 0.0);
            assert_eq!(arr.iter().find(|a| a.epoch >= 0.0).unwrap(), &arr[o]);
            let gap = arr[o].epoch - arr[o - 1].epoch;
            assert!((gap - p.straddle).abs() <= 1e-12);
            ratios.push(arr[o].epoch / gap);
            straddles.push(gap);
            t0s.push(arr[o].epoch);
        }
        let ks = one_sample_ks(&ratios, |x| x.clamp(0.0, 1.0), 0.01).unwrap();
        assert!(!ks.reject, "{ks:?}");
        let rho = correlation(&ratios, &straddles);
        assert!(rho.abs() < 4.0 / (ratios.len() as f64).sqrt(), "rho {rho}");
        // E[T_0] = E[X^2] / (2 mu) = 5/3
        let (m, se) = mean_and_se(&t0s);
        assert!((m - 5.0 / 3.0).abs() < 4.0 * se, "{m}");
    }

    #[test]
    fn window_counts_shift_invariant() {
        let spec = ProcessSpec::new(InterarrivalLaw::uniform(0.0, 5.0), ClusterModel::Empty)
            .with_parents(true);
        let sim = Simulator::new(spec).unwrap();
        let counts_at = |s: f64, stream: u64| -> Vec<f64> {
            (0..10_000)
                .map(|r| {
                    let c = sim
                        .stationary_cluster_process(s, s + 3.0, &mut RngStream::new(stream, r))
                        .unwrap();
                    count_in(&c.pattern, s, s + 3.0).unwrap() as f64
                })
                .collect()
        };
        let base = counts_at(0.0, 10);
        for (i, s) in [-50.0, 137.2].into_iter().enumerate() {
            let other = counts_at(s, 11 + i as u64);
            let ks = two_sample_ks(&base, &other, 0.01).unwrap();
            assert!(!ks.reject, "shift {s}: {ks:?}");
        }
    }

    #[test]
    fn shift_check_example_two() {
        let rep = shift_invariance_check(
            &example_two_preset(),
            &[0.0, 37.7],
            1.0,
            4000,
            0.01,
            3,
            0,
            Execution::Parallel,
        )
        .unwrap();
        assert!(!rep.reject, "{rep:?}");
        assert!((rep.mean_counts[0] - 0.56).abs() < 0.1);
        assert!(shift_invariance_check(
            &example_two_preset(),
            &[0.0],
            1.0,
            10,
            0.01,
            3,
            0,
            Execution::Parallel
        )
        .is_err());
    }

    #[test]
    fn example_two_stationary_mean() {
        let sim = Simulator::new(example_two_preset()).unwrap();
        let counts: Vec<f64> = (0..10_000)
            .map(|r| {
                let c = sim
                    .stationary_cluster_process(10.0, 20.0, &mut RngStream::new(5, r))
                    .unwrap();
                c.pattern.len() as f64
            })
            .collect();
        let (m, se) = mean_and_se(&counts);
        assert!((m - 5.6).abs() < 4.0 * se, "{m} +- {se}");
    }

    #[test]
    fn empty_clusters_without_parents() {
        let spec = ProcessSpec::new(InterarrivalLaw::exponential(1.0), ClusterModel::Empty);
        let c =
            sample_stationary_cluster_process(&spec, -5.0, 5.0, &mut RngStream::new(0, 0)).unwrap();
        assert!(c.pattern.is_empty());
    }

    #[test]
    fn point_stationarity() {
        let spec = example_two_preset();
        let rep =
            point_stationary_check(&spec, 0, 3, 2000, 0.01, 1, 0, Execution::Parallel).unwrap();
        assert_eq!(rep.max_distance, 0.0);
        let rep =
            point_stationary_check(&spec, 4, 3, 10_000, 0.01, 1, 0, Execution::Parallel).unwrap();
        assert!(!rep.reject, "{rep:?}");
        assert_eq!(rep.tests.len(), 6);
    }
}
