//! Coupling of a stationary and a delayed marked renewal process driven by one shared
//! i.i.d. sequence `(W~_j, X~_j)` and an independent Rademacher sequence.
//!
//! Step `j` goes to the stationary process when the sign is `+1` and to the delayed one
//! when it is `-1`, so the gap between the two current epochs is the symmetric walk
//! `V_i = T_0 - T''_0 + sum_{j <= i} sign_j X~_j`. The walk is recurrent; at the first
//! `tau` with `V_tau` in `[0, eps)` the delayed process switches to the stationary
//! process's future increments and marks, and the two stay `eps`-close forever.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::harness::stats::{two_sample_ks, KsReport};
use crate::models::ProcessSpec;
use crate::rng::{derive_stream_id, RngStream};
use crate::stationary::{size_biased_interarrival, SizeBiasMethod};
use crate::Execution;

/// Steps stored verbatim before the path starts thinning.
pub const DENSE_PATH_STEPS: u64 = 10_000;
pub const DEFAULT_STEPS_CAP: u64 = 10_000_000;

/// Marks are drawn from per-index substreams of this stream id, so a mark exists for
/// every step without being materialized during the walk.
const MARK_STREAM: u64 = 0x6d61_726b;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingRun {
    pub epsilon: f64,
    pub steps_cap: u64,
    /// First step with `V` in `[0, eps)`, or `None` when the cap was hit.
    pub tau: Option<u64>,
    /// Stationary start `T_0`.
    pub stationary_start: f64,
    /// Delayed start `T''_0`.
    pub delayed_start: f64,
    /// `(step, V)` samples: every step up to [`DENSE_PATH_STEPS`], then every `2^k`-th.
    pub v_path: Vec<(u64, f64)>,
    /// `L_tau`: number of `+1` signs up to `tau`.
    pub plus_count: u64,
    /// `L'_tau = tau - L_tau`.
    pub minus_count: u64,
    /// `T_{L_tau} max T''_{L'_tau}`.
    pub coupling_time: Option<f64>,
}

impl CouplingRun {
    pub fn capped(&self) -> bool {
        self.tau.is_none()
    }
}

/// The coupled pair mid-walk. `stationary` is `T_{L_i}`, `delayed` is `T''_{L'_i}`.
struct Walk {
    rng: RngStream,
    marks: RngStream,
    step: u64,
    stationary: f64,
    delayed: f64,
    plus: u64,
    minus: u64,
}

impl Walk {
    fn start(spec: &ProcessSpec, rng: &RngStream) -> Result<Walk> {
        let mut rng = rng.clone();
        let method = SizeBiasMethod::for_spec(spec)?;
        let x_star = size_biased_interarrival(method, &mut rng, |r| spec.interarrival.sample(r));
        let u: f64 = rng.random();
        let stationary = u * x_star;
        let delayed = spec.delay.sample(&mut rng);
        let marks = RngStream::new(
            rng.key().seed,
            derive_stream_id(rng.key().stream_id, MARK_STREAM),
        );
        Ok(Walk {
            rng,
            marks,
            step: 0,
            stationary,
            delayed,
            plus: 0,
            minus: 0,
        })
    }

    #[inline]
    fn gap(&self) -> f64 {
        self.stationary - self.delayed
    }

    /// Draws `(sign_j, X~_j)` for the next step.
    #[inline]
    fn draw(&mut self, spec: &ProcessSpec) -> (bool, f64) {
        self.step += 1;
        let plus: bool = self.rng.random();
        let x = spec.interarrival.sample(&mut self.rng);
        (plus, x)
    }

    #[inline]
    fn advance(&mut self, spec: &ProcessSpec) {
        let (plus, x) = self.draw(spec);
        if plus {
            self.stationary += x;
            self.plus += 1;
        } else {
            self.delayed += x;
            self.minus += 1;
        }
    }

    /// Cluster offsets of `W~_j`.
    fn mark(&self, spec: &ProcessSpec, j: u64, x: f64) -> Vec<f64> {
        spec.cluster.sample(x, &mut self.marks.substream(j))
    }
}

fn in_band(v: f64, epsilon: f64) -> bool {
    (0.0..epsilon).contains(&v)
}

fn record(path: &mut Vec<(u64, f64)>, step: u64, v: f64) {
    let stride = if step < DENSE_PATH_STEPS {
        1
    } else {
        (step / DENSE_PATH_STEPS + 1).next_power_of_two()
    };
    if step.is_multiple_of(stride) {
        path.push((step, v));
    }
}

fn walk_to_tau(
    spec: &ProcessSpec,
    epsilon: f64,
    steps_cap: u64,
    rng: &RngStream,
    starts: Option<(f64, f64)>,
) -> Result<(CouplingRun, Walk)> {
    spec.validate()?;
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon {epsilon} must be > 0")));
    }
    if steps_cap < 1 {
        return Err(invalid("steps cap must be >= 1"));
    }
    let mut w = Walk::start(spec, rng)?;
    if let Some((s, d)) = starts {
        w.stationary = s;
        w.delayed = d;
    }
    let (stationary_start, delayed_start) = (w.stationary, w.delayed);
    let mut v_path = vec![(0, w.gap())];
    let mut tau = in_band(w.gap(), epsilon).then_some(0);
    while tau.is_none() && w.step < steps_cap {
        w.advance(spec);
        let v = w.gap();
        record(&mut v_path, w.step, v);
        if in_band(v, epsilon) {
            tau = Some(w.step);
        }
    }
    let coupling_time = tau.map(|_| w.stationary.max(w.delayed));
    let run = CouplingRun {
        epsilon,
        steps_cap,
        tau,
        stationary_start,
        delayed_start,
        v_path,
        plus_count: w.plus,
        minus_count: w.minus,
        coupling_time,
    };
    Ok((run, w))
}

pub fn run_coupling(
    spec: &ProcessSpec,
    epsilon: f64,
    steps_cap: u64,
    rng: &RngStream,
) -> Result<CouplingRun> {
    walk_to_tau(spec, epsilon, steps_cap, rng, None).map(|(run, _)| run)
}

/// As [`run_coupling`] with the two starting epochs overridden.
pub fn run_coupling_from(
    spec: &ProcessSpec,
    stationary_start: f64,
    delayed_start: f64,
    epsilon: f64,
    steps_cap: u64,
    rng: &RngStream,
) -> Result<CouplingRun> {
    walk_to_tau(
        spec,
        epsilon,
        steps_cap,
        rng,
        Some((stationary_start, delayed_start)),
    )
    .map(|(run, _)| run)
}

/// Walk `V_0, ..., V_steps` without stopping.
pub fn symmetric_walk(spec: &ProcessSpec, steps: u64, rng: &RngStream) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut w = Walk::start(spec, rng)?;
    let mut out = Vec::with_capacity(steps as usize + 1);
    out.push(w.gap());
    for _ in 0..steps {
        w.advance(spec);
        out.push(w.gap());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub run: CouplingRun,
    pub k_checks: usize,
    /// Indices `k` where `T_{k+L_tau} - T'_{k+L'_tau}` left `[0, eps)`.
    pub time_violations: Vec<usize>,
    /// Indices `k >= 1` where the marks differed.
    pub mark_violations: Vec<usize>,
}

impl AgreementReport {
    pub fn passed(&self) -> bool {
        !self.run.capped() && self.time_violations.is_empty() && self.mark_violations.is_empty()
    }
}

/// Runs the coupling to `tau`, then continues both processes past it and checks that
/// they stay `eps`-close with identical marks for `k_checks` further arrivals.
///
/// The delayed side is rebuilt from the sign sequence flipped after `tau`: its future
/// arrivals are the steps with flipped sign `-1`. The stationary side takes the steps
/// with unflipped sign `+1`. Mark equality is checked for `k >= 1`; at `k = 0` the two
/// current arrivals carry the marks they had before coupling.
pub fn post_coupling_agreement(
    spec: &ProcessSpec,
    epsilon: f64,
    k_checks: usize,
    steps_cap: u64,
    rng: &RngStream,
) -> Result<AgreementReport> {
    let (run, mut w) = walk_to_tau(spec, epsilon, steps_cap, rng, None)?;
    let mut report = AgreementReport {
        run,
        k_checks,
        time_violations: Vec::new(),
        mark_violations: Vec::new(),
    };
    if report.run.capped() {
        return Ok(report);
    }
    let mut stationary = w.stationary;
    let mut delayed = w.delayed;
    if !in_band(stationary - delayed, epsilon) {
        report.time_violations.push(0);
    }
    let mut stationary_next: Vec<(u64, f64)> = Vec::with_capacity(k_checks);
    let mut delayed_next: Vec<(u64, f64)> = Vec::with_capacity(k_checks);
    while stationary_next.len() < k_checks || delayed_next.len() < k_checks {
        let (plus, x) = w.draw(spec);
        let j = w.step;
        if plus {
            stationary_next.push((j, x));
        }
        let flipped_minus = plus;
        if flipped_minus {
            delayed_next.push((j, x));
        }
    }
    for k in 1..=k_checks {
        let (js, xs) = stationary_next[k - 1];
        let (jd, xd) = delayed_next[k - 1];
        stationary += xs;
        delayed += xd;
        if !in_band(stationary - delayed, epsilon) {
            report.time_violations.push(k);
        }
        let ms = w.mark(spec, js, xs);
        let md = w.mark(spec, jd, xd);
        let same = js == jd
            && xs.to_bits() == xd.to_bits()
            && ms.len() == md.len()
            && ms.iter().zip(&md).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            report.mark_violations.push(k);
        }
    }
    Ok(report)
}

pub fn write_runs_csv<W: Write>(runs: &[CouplingRun], mut out: W) -> Result<()> {
    writeln!(out, "epsilon,tau,coupling_time,capped")?;
    for r in runs {
        let tau = r.tau.map(|t| t.to_string()).unwrap_or_default();
        let ct = r.coupling_time.map(|t| t.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{}", r.epsilon, tau, ct, r.capped())?;
    }
    Ok(())
}

/// Stopping rule applied before flipping all later signs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlipRule {
    /// Index of the `m`-th `+1`: a stopping time.
    NthPlus(usize),
    /// Index of the first maximum of the partial sums over `1..=n`. Looks ahead, so it
    /// is not a stopping time; used as a negative control.
    PeekArgmax,
}

impl FlipRule {
    fn index(&self, signs: &[i8]) -> usize {
        match *self {
            FlipRule::NthPlus(m) => {
                let mut seen = 0;
                for (i, &s) in signs.iter().enumerate() {
                    if s == 1 {
                        seen += 1;
                        if seen == m {
                            return i + 1;
                        }
                    }
                }
                signs.len()
            }
            FlipRule::PeekArgmax => {
                let (mut best, mut arg, mut sum) = (0i64, 0usize, 0i64);
                for (i, &s) in signs.iter().enumerate() {
                    sum += s as i64;
                    if sum > best {
                        best = sum;
                        arg = i + 1;
                    }
                }
                arg
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipReport {
    pub n: usize,
    pub n_rep: usize,
    pub rule: FlipRule,
    pub ks: KsReport,
}

fn signs(n: usize, rng: &mut RngStream) -> Vec<i8> {
    (0..n)
        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
        .collect()
}

/// Compares the law of `S_n` for sign sequences flipped after the rule's index against
/// unflipped sequences (independent replications for each sample).
pub fn rademacher_flip_test(
    n: usize,
    n_rep: usize,
    rule: FlipRule,
    alpha: f64,
    seed: u64,
    stream_id: u64,
    exec: Execution,
) -> Result<FlipReport> {
    if n < 1 || n_rep < 1 {
        return Err(invalid("flip test needs n >= 1 and n_rep >= 1"));
    }
    let pairs = exec.map(n_rep, |r| {
        let mut a = RngStream::new(seed, derive_stream_id(stream_id, 2 * r as u64));
        let mut b = RngStream::new(seed, derive_stream_id(stream_id, 2 * r as u64 + 1));
        let mut flipped = signs(n, &mut a);
        let tau = rule.index(&flipped);
        for s in &mut flipped[tau..] {
            *s = -*s;
        }
        let plain = signs(n, &mut b);
        let sum = |v: &[i8]| v.iter().map(|&s| s as f64).sum::<f64>();
        (sum(&flipped), sum(&plain))
    });
    let (flipped, plain): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(FlipReport {
        n,
        n_rep,
        rule,
        ks: two_sample_ks(&flipped, &plain, alpha)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::stats::mean_and_se;
    use crate::models::{example_two_preset, ClusterModel, Delay, InterarrivalLaw};

    fn uniform_spec() -> ProcessSpec {
        ProcessSpec::new(InterarrivalLaw::uniform(0.0, 5.0), ClusterModel::Empty)
    }

    #[test]
    fn zero_gap_couples_immediately() {
        let run = run_coupling_from(&uniform_spec(), 1.25, 1.25, 0.01, 10, &RngStream::new(0, 0))
            .unwrap();
        assert_eq!(run.tau, Some(0));
        assert_eq!(run.coupling_time, Some(1.25));
        assert_eq!((run.plus_count, run.minus_count), (0, 0));
        // V_0 = T_0 - 0 always lies in [0, 10)
        let run = run_coupling(&uniform_spec(), 10.0, 10, &RngStream::new(0, 0)).unwrap();
        assert_eq!(run.tau, Some(0));
    }

    #[test]
    fn tau_band_invariant() {
        for r in 0..50 {
            let run =
                run_coupling(&uniform_spec(), 0.25, 1_000_000, &RngStream::new(1, r)).unwrap();
            let tau = run.tau.expect("finite tau");
            assert_eq!(run.plus_count + run.minus_count, tau);
            let last = run.v_path.last().unwrap();
            if tau < DENSE_PATH_STEPS {
                assert_eq!(last.0, tau);
                assert!(last.1 >= 0.0 && last.1 < 0.25);
            }
            assert!(run.coupling_time.unwrap() >= 0.0);
        }
    }

    #[test]
    fn smaller_epsilon_never_couples_sooner() {
        for r in 0..30 {
            let rng = RngStream::new(2, r);
            let a = run_coupling(&uniform_spec(), 0.5, 2_000_000, &rng).unwrap();
            let b = run_coupling(&uniform_spec(), 0.05, 2_000_000, &rng).unwrap();
            if let (Some(ta), Some(tb)) = (a.tau, b.tau) {
                assert!(tb >= ta);
            }
            assert!(a.tau.is_some());
        }
    }

    #[test]
    fn agreement_after_tau() {
        let spec = example_two_preset();
        for r in 0..20 {
            let rep = post_coupling_agreement(&spec, 0.1, 100, 10_000_000, &RngStream::new(3, r))
                .unwrap();
            assert!(
                rep.passed(),
                "{:?} {:?}",
                rep.time_violations,
                rep.mark_violations
            );
        }
        let rep =
            post_coupling_agreement(&spec, 0.1, 0, 10_000_000, &RngStream::new(3, 0)).unwrap();
        assert!(rep.passed());
    }

    #[test]
    fn walk_is_martingale() {
        let spec = uniform_spec().with_delay(
            Delay::Law(InterarrivalLaw::uniform(0.0, 2.0)),
            ClusterModel::Empty,
        );
        // E[T_0] - E[T''_0] = 5/3 - 1
        let target = 5.0 / 3.0 - 1.0;
        let paths: Vec<Vec<f64>> = (0..4000)
            .map(|r| symmetric_walk(&spec, 1000, &RngStream::new(4, r)).unwrap())
            .collect();
        for i in [10usize, 100, 1000] {
            let vs: Vec<f64> = paths.iter().map(|p| p[i]).collect();
            let (m, se) = mean_and_se(&vs);
            assert!((m - target).abs() < 4.0 * se, "i={i}: {m}");
        }
    }

    #[test]
    fn walk_increments_symmetric() {
        let spec = uniform_spec();
        let inc: Vec<f64> = (0..5000)
            .map(|r| {
                let p = symmetric_walk(&spec, 50, &RngStream::new(5, r)).unwrap();
                p[50] - p[0]
            })
            .collect();
        let mirrored: Vec<f64> = (0..5000)
            .map(|r| {
                let p = symmetric_walk(&spec, 50, &RngStream::new(6, r)).unwrap();
                p[0] - p[50]
            })
            .collect();
        assert!(!two_sample_ks(&inc, &mirrored, 0.01).unwrap().reject);
    }

    #[test]
    fn path_thinning() {
        let mut path = Vec::new();
        for s in 0..100_000 {
            record(&mut path, s, 0.0);
        }
        assert!(path.len() < 40_000);
        assert!(path[..DENSE_PATH_STEPS as usize]
            .iter()
            .enumerate()
            .all(|(i, p)| p.0 == i as u64));
    }

    #[test]
    fn flip_rule_indices() {
        assert_eq!(FlipRule::NthPlus(2).index(&[-1, 1, -1, 1, 1]), 4);
        assert_eq!(FlipRule::NthPlus(2).index(&[-1, -1]), 2);
        assert_eq!(FlipRule::PeekArgmax.index(&[1, 1, -1, 1, 1, -1]), 5);
        assert_eq!(FlipRule::PeekArgmax.index(&[-1, -1]), 0);
    }

    #[test]
    fn flip_n_one_untouched() {
        let rep = rademacher_flip_test(
            1,
            20_000,
            FlipRule::NthPlus(1),
            0.01,
            1,
            0,
            Execution::Parallel,
        )
        .unwrap();
        assert!(!rep.ks.reject);
    }

    #[test]
    fn csv_header() {
        let run = run_coupling(&uniform_spec(), 10.0, 10, &RngStream::new(0, 0)).unwrap();
        let mut buf = Vec::new();
        write_runs_csv(&[run], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epsilon,tau,coupling_time,capped\n10,0,"));
        assert!(text.trim_end().ends_with(",false"));
    }
}
