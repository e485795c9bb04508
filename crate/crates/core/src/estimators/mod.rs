//! Monte Carlo estimators of window means, ratios, recurrence times, void probabilities
//! and renewal functions, with the closed-form limits they converge to.

mod quadrature;
mod renewal;
mod report;
mod step;

pub use quadrature::adaptive_simpson;
pub use renewal::{
    estimate_key_renewal, estimate_renewal_function, isotonic_fit, key_renewal_convolve,
    key_renewal_limit, RenewalTable,
};
pub use report::{
    read_reports_csv, read_reports_jsonl, write_reports_csv, write_reports_jsonl, ExperimentReport,
    ACCEPTANCE_SE, DEFAULT_CI_LEVEL, REPORT_CSV_HEADER,
};
pub use step::{StepFunction, StepPiece};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::models::{ProcessSpec, Simulator};
use crate::rng::RngStream;

/// Tolerance for the inner integral of the Bartlett-Lewis void probability.
pub const VOID_QUADRATURE_TOL: f64 = 1e-9;
/// Default "large t" for distribution-level checks, in units of the mean interarrival.
pub const DISTRIBUTION_T_FACTOR: f64 = 200.0;
/// Default "large t" for ratio checks, in units of the mean interarrival.
pub const RATIO_T_FACTOR: f64 = 4000.0;
/// Doublings of the recurrence-time search window before giving up.
const MAX_EXTENSIONS: u32 = 40;

/// Replication plan: replication `r` draws from `rng.substream(r)`.
#[derive(Clone, Debug)]
pub struct MonteCarlo {
    pub n_rep: usize,
    pub rng: RngStream,
    pub ci_level: f64,
    pub exec: Execution,
}

impl MonteCarlo {
    pub fn new(n_rep: usize, seed: u64) -> Self {
        Self {
            n_rep,
            rng: RngStream::new(seed, 0),
            ci_level: DEFAULT_CI_LEVEL,
            exec: Execution::default(),
        }
    }

    pub fn with_rng(mut self, rng: RngStream) -> Self {
        self.rng = rng;
        self
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        let seed = self.rng.key().seed;
        self.with_rng(RngStream::new(seed, stream_id))
    }

    pub fn with_level(mut self, level: f64) -> Self {
        self.ci_level = level;
        self
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.n_rep < 2 {
            return Err(invalid(format!(
                "n_rep = {} must be at least 2",
                self.n_rep
            )));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(invalid(format!(
                "ci level {} must lie in (0, 1)",
                self.ci_level
            )));
        }
        Ok(())
    }

    /// Runs `f` once per replication on its own substream; results in replication order.
    pub fn replicate<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&mut RngStream) -> Result<T> + Sync + Send,
    {
        self.check()?;
        self.exec
            .try_map(self.n_rep, |r| f(&mut self.rng.substream(r as u64)))
    }

    pub(crate) fn report(
        &self,
        base: ExperimentReport,
        target: Option<f64>,
        tally: u64,
    ) -> ExperimentReport {
        let key = self.rng.key();
        base.with_target(target)
            .with_stream(key.seed, key.stream_id)
            .with_tally(tally)
    }

    fn summarize(&self, values: &[f64], target: Option<f64>, tally: u64) -> ExperimentReport {
        self.report(
            ExperimentReport::from_samples(values, self.ci_level),
            target,
            tally,
        )
    }
}

fn check_time(t: f64, what: &str) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{what} = {t} must be finite")))
    }
}

fn check_positive(x: f64, what: &str) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{what} = {x} must be finite and positive")))
    }
}

/// Blackwell limit of `E xi(t, t + x]`: `x (E[L] + parents) / mu`.
pub fn theoretical_blackwell_limit(spec: &ProcessSpec, x: f64) -> Result<f64> {
    check_positive(x, "x")?;
    Ok(spec.intensity()? * x)
}

/// Mean measure of `(a, b]` under the stationary process.
pub fn theoretical_mean_measure(spec: &ProcessSpec, a: f64, b: f64) -> Result<f64> {
    check_time(a, "a")?;
    check_time(b, "b")?;
    if a > b {
        return Err(invalid(format!(
            "mean measure needs a <= b, got ({a}, {b}]"
        )));
    }
    Ok(spec.intensity()? * (b - a))
}

/// Counts in `(t, t + x]` of the delayed process, one per replication, with overflow tallies.
pub fn window_counts(
    spec: &ProcessSpec,
    t: f64,
    x: f64,
    mc: &MonteCarlo,
) -> Result<Vec<(usize, usize)>> {
    check_time(t, "t")?;
    check_positive(x, "x")?;
    let sim = Simulator::new(spec.clone())?;
    mc.replicate(|rng| {
        let s = sim.renewal_cluster_process(t, t + x, rng)?;
        Ok((s.pattern.len(), s.overflow))
    })
}

fn counts_report(
    counts: &[(usize, usize)],
    scale: f64,
    target: Option<f64>,
    mc: &MonteCarlo,
) -> ExperimentReport {
    let values: Vec<f64> = counts.iter().map(|&(n, _)| n as f64 / scale).collect();
    let tally = counts.iter().map(|&(_, o)| o as u64).sum();
    mc.summarize(&values, target, tally)
}

/// Monte Carlo estimate of `E xi(t, t + x]`.
pub fn estimate_window_mean(
    spec: &ProcessSpec,
    t: f64,
    x: f64,
    mc: &MonteCarlo,
) -> Result<ExperimentReport> {
    if t < 0.0 {
        return Err(invalid(format!("window start t = {t} must be >= 0")));
    }
    let counts = window_counts(spec, t, x, mc)?;
    let target = theoretical_blackwell_limit(spec, x).ok();
    Ok(counts_report(&counts, 1.0, target, mc))
}

/// Monte Carlo estimate of `E xi(0, t] / t`.
pub fn estimate_elementary_ratio(
    spec: &ProcessSpec,
    t: f64,
    mc: &MonteCarlo,
) -> Result<ExperimentReport> {
    check_positive(t, "t")?;
    let counts = window_counts(spec, 0.0, t, mc)?;
    let target = spec.intensity().ok();
    Ok(counts_report(&counts, t, target, mc))
}

/// Monte Carlo estimate of `P(xi(t, t + x] = 0)`.
pub fn estimate_void_probability(
    spec: &ProcessSpec,
    t: f64,
    x: f64,
    mc: &MonteCarlo,
) -> Result<ExperimentReport> {
    if t < 0.0 {
        return Err(invalid(format!("window start t = {t} must be >= 0")));
    }
    let counts = window_counts(spec, t, x, mc)?;
    let values: Vec<f64> = counts
        .iter()
        .map(|&(n, _)| if n == 0 { 1.0 } else { 0.0 })
        .collect();
    let tally = counts.iter().map(|&(_, o)| o as u64).sum();
    let target = bartlett_lewis_void_target(spec, x).transpose()?;
    Ok(mc.summarize(&values, target, tally))
}

/// `exp{-lambda (x + E[L] int_0^x P(Y > y) dy)}`.
pub fn bartlett_lewis_void_probability(
    lambda: f64,
    mean_l: f64,
    step_survival: &dyn Fn(f64) -> f64,
    x: f64,
) -> Result<f64> {
    check_positive(lambda, "lambda")?;
    if !(mean_l >= 0.0 && mean_l.is_finite()) {
        return Err(invalid(format!(
            "mean cluster size {mean_l} must be finite and >= 0"
        )));
    }
    if !(x >= 0.0 && x.is_finite()) {
        return Err(invalid(format!("x = {x} must be finite and >= 0")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    let inner = if mean_l == 0.0 {
        0.0
    } else {
        adaptive_simpson(step_survival, 0.0, x, VOID_QUADRATURE_TOL)?
    };
    Ok((-lambda * (x + mean_l * inner)).exp())
}

/// Closed-form void probability when `spec` is a Bartlett-Lewis process.
pub fn bartlett_lewis_void_target(spec: &ProcessSpec, x: f64) -> Option<Result<f64>> {
    let bl = spec.as_bartlett_lewis()?;
    Some(bartlett_lewis_void_probability(
        bl.rate,
        bl.size.mean(),
        &|y| bl.step.survival(y),
        x,
    ))
}

/// Empirical CDF of the forward recurrence time `R(t)` on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceCdf {
    pub t: f64,
    pub grid: Vec<f64>,
    /// One report per grid point; the target is the closed form when available.
    pub points: Vec<ExperimentReport>,
    /// Largest search window used by any replication, measured from `t`.
    pub max_span: f64,
}

impl RecurrenceCdf {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|r| r.estimate).collect()
    }

    /// `max_x |F_hat(x) - F(x)|` over the grid, when every point has a target.
    pub fn max_abs_error(&self) -> Option<f64> {
        self.points
            .iter()
            .map(|r| r.target.map(|f| (r.estimate - f).abs()))
            .try_fold(0.0, |m: f64, e| e.map(|e| m.max(e)))
    }
}

/// Forward recurrence time `R(t)`: gap from `t` to the first point strictly after it.
/// With `span = None` the search window starts at `max(grid max, 4 mu)` and doubles until
/// a point is found; with `Some(span)` a missing point is an error.
pub fn estimate_forward_recurrence_cdf(
    spec: &ProcessSpec,
    t: f64,
    x_grid: &[f64],
    span: Option<f64>,
    mc: &MonteCarlo,
) -> Result<RecurrenceCdf> {
    check_time(t, "t")?;
    if x_grid.iter().any(|x| !(x.is_finite() && *x >= 0.0))
        || x_grid.windows(2).any(|w| w[1] < w[0])
    {
        return Err(invalid(
            "recurrence grid must be sorted, finite and nonnegative",
        ));
    }
    if let Some(s) = span {
        check_positive(s, "span")?;
    }
    if spec.intensity().ok() == Some(0.0) {
        return Err(Error::NoPointAfter {
            t,
            horizon: f64::INFINITY,
        });
    }
    let sim = Simulator::new(spec.clone())?;
    let grid_max = x_grid.last().copied().unwrap_or(0.0);
    let initial = span.unwrap_or_else(|| grid_max.max(4.0 * spec.mean_interarrival()).max(1.0));
    let gaps = mc.replicate(|rng| {
        let start = rng.clone();
        let mut width = initial;
        for _ in 0..=MAX_EXTENSIONS {
            // every attempt replays the same draws, so the result does not depend on
            // how many extensions were needed
            let mut attempt = start.clone();
            let s = sim.renewal_cluster_process(t, t + width, &mut attempt)?;
            if let Some(&first) = s.pattern.points().first() {
                return Ok((first - t, width, s.overflow));
            }
            if span.is_some() {
                break;
            }
            width *= 2.0;
        }
        Err(Error::NoPointAfter {
            t,
            horizon: t + width,
        })
    })?;
    let tally = gaps.iter().map(|g| g.2 as u64).sum();
    let max_span = gaps.iter().map(|g| g.1).fold(0.0, f64::max);
    let n = gaps.len() as f64;
    let bl = spec.as_bartlett_lewis();
    let points = x_grid
        .iter()
        .map(|&x| {
            let hits = gaps.iter().filter(|g| g.0 <= x).count() as f64;
            let base = ExperimentReport::from_moments(hits, hits, gaps.len(), mc.ci_level);
            let target = match &bl {
                Some(bl) => Some(
                    1.0 - bartlett_lewis_void_probability(
                        bl.rate,
                        bl.size.mean(),
                        &|y| bl.step.survival(y),
                        x,
                    )?,
                ),
                None => None,
            };
            debug_assert!(base.estimate <= 1.0 && n > 0.0);
            Ok(mc.report(base, target, tally))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RecurrenceCdf {
        t,
        grid: x_grid.to_vec(),
        points,
        max_span,
    })
}

/// Window-mean reports at increasing `t`, each on its own substream of `mc.rng`.
pub fn convergence_diagnostics(
    spec: &ProcessSpec,
    ts: &[f64],
    x: f64,
    mc: &MonteCarlo,
) -> Result<Vec<ExperimentReport>> {
    ts.iter()
        .enumerate()
        .map(|(i, &t)| {
            estimate_window_mean(spec, t, x, &mc.clone().with_rng(mc.rng.substream(i as u64)))
        })
        .collect()
}
