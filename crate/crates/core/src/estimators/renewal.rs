use serde::{Deserialize, Serialize};

use super::report::ExperimentReport;
use super::step::StepFunction;
use super::MonteCarlo;
use crate::error::{invalid, Error, Result};
use crate::models::{ProcessSpec, Simulator};

/// Replications per work item when tabulating `U`. Each chunk accumulates its own
/// sums; chunks are reduced in index order.
const CHUNK: usize = 64;

/// Monte Carlo tabulation of the renewal function `U(t) = E #{points <= t}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenewalTable {
    pub grid: Vec<f64>,
    /// Per-grid-point reports of the raw replication means.
    pub raw: Vec<ExperimentReport>,
    /// Pool-adjacent-violators fit of the raw means (nondecreasing).
    pub isotonic: Vec<f64>,
}

impl RenewalTable {
    pub fn raw_values(&self) -> Vec<f64> {
        self.raw.iter().map(|r| r.estimate).collect()
    }

    /// Largest `|isotonic - raw|` in units of the raw standard error.
    pub fn max_isotonic_shift_in_se(&self) -> f64 {
        self.raw
            .iter()
            .zip(&self.isotonic)
            .map(|(r, &v)| {
                let d = (v - r.estimate).abs();
                if d == 0.0 {
                    0.0
                } else {
                    d / r.std_error
                }
            })
            .fold(0.0, f64::max)
    }

    /// Raw value at the largest grid point `<= s`.
    pub fn lookup(&self, s: f64) -> Option<f64> {
        let idx = self.grid.partition_point(|&y| y <= s);
        (idx > 0).then(|| self.raw[idx - 1].estimate)
    }
}

/// Estimates `U` at each point of a sorted, finite `t_grid`. Every point of each
/// replication at or below the grid value is counted, including cluster points left of 0.
pub fn estimate_renewal_function(
    spec: &ProcessSpec,
    t_grid: &[f64],
    mc: &MonteCarlo,
) -> Result<RenewalTable> {
    mc.check()?;
    if t_grid.is_empty() {
        return Err(invalid("renewal grid is empty"));
    }
    if t_grid.iter().any(|t| !t.is_finite()) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("renewal grid must be finite and sorted"));
    }
    let sim = Simulator::new(spec.clone())?;
    let hi = *t_grid.last().expect("nonempty");
    let m = t_grid.len();
    let chunks = mc.n_rep.div_ceil(CHUNK);
    let partial = mc
        .exec
        .try_map(chunks, |c| -> Result<(Vec<f64>, Vec<f64>, u64)> {
            let mut sum = vec![0.0; m];
            let mut sum_sq = vec![0.0; m];
            let mut tally = 0u64;
            for r in c * CHUNK..((c + 1) * CHUNK).min(mc.n_rep) {
                let mut rng = mc.rng.substream(r as u64);
                let sample = sim.renewal_cluster_process(f64::NEG_INFINITY, hi, &mut rng)?;
                tally += sample.overflow as u64;
                for (k, &t) in t_grid.iter().enumerate() {
                    let n = sample.pattern.rank(t) as f64;
                    sum[k] += n;
                    sum_sq[k] += n * n;
                }
            }
            Ok((sum, sum_sq, tally))
        })?;
    let mut sum = vec![0.0; m];
    let mut sum_sq = vec![0.0; m];
    let mut tally = 0u64;
    for (s, q, t) in partial {
        for k in 0..m {
            sum[k] += s[k];
            sum_sq[k] += q[k];
        }
        tally += t;
    }
    let raw: Vec<ExperimentReport> = (0..m)
        .map(|k| {
            mc.report(
                ExperimentReport::from_moments(sum[k], sum_sq[k], mc.n_rep, mc.ci_level),
                None,
                tally,
            )
        })
        .collect();
    let isotonic = isotonic_fit(&raw.iter().map(|r| r.estimate).collect::<Vec<_>>());
    Ok(RenewalTable {
        grid: t_grid.to_vec(),
        raw,
        isotonic,
    })
}

/// Least-squares nondecreasing fit by pooling adjacent violators.
pub fn isotonic_fit(values: &[f64]) -> Vec<f64> {
    // blocks of (mean, weight)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, w2) = blocks[blocks.len() - 1];
            let (m1, w1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().expect("len > 1") =
                ((m1 * w1 as f64 + m2 * w2 as f64) / w as f64, w);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, w)| std::iter::repeat_n(m, w))
        .collect()
}

/// `int_0^t g(t - y) dU(y)` against the tabulated increments: each piece `h 1_[a, b)`
/// contributes `h (U(t - a) - U(t - b))`, with `U` read at the largest grid point at or
/// below its argument.
pub fn key_renewal_convolve(table: &RenewalTable, g: &StepFunction, t: f64) -> Result<f64> {
    let (range_lo, range_hi) = match (table.grid.first(), table.grid.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Err(invalid("renewal table is empty")),
    };
    let mut total = 0.0;
    for p in g.pieces() {
        let (upper, lower) = (t - p.lo, t - p.hi);
        if lower < range_lo || upper > range_hi {
            return Err(Error::SupportExceedsRange {
                lo: p.lo,
                hi: p.hi,
                range_lo,
                range_hi,
            });
        }
        let u = |s: f64| table.lookup(s).expect("checked against range");
        total += p.height * (u(upper) - u(lower));
    }
    Ok(total)
}

/// Closed-form key renewal limit `(E[L] + parents) / mu * int g`.
pub fn key_renewal_limit(spec: &ProcessSpec, g: &StepFunction) -> Result<f64> {
    Ok(spec.intensity()? * g.integral())
}

/// Key renewal estimate at `t`: tabulates `U` on the endpoints `t - a_k`, `t - b_k` of
/// `g`'s pieces, and returns the table together with a report whose estimate is
/// [`key_renewal_convolve`] on that table and whose standard error comes from the
/// per-replication convolution sums.
pub fn estimate_key_renewal(
    spec: &ProcessSpec,
    g: &StepFunction,
    t: f64,
    mc: &MonteCarlo,
) -> Result<(RenewalTable, ExperimentReport)> {
    mc.check()?;
    if !t.is_finite() {
        return Err(invalid(format!("t = {t} must be finite")));
    }
    let mut grid: Vec<f64> = g
        .pieces()
        .iter()
        .flat_map(|p| [t - p.hi, t - p.lo])
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.is_empty() {
        grid.push(t);
    }
    let sim = Simulator::new(spec.clone())?;
    let hi = *grid.last().expect("nonempty");
    let rows = mc.replicate(|rng| {
        let sample = sim.renewal_cluster_process(f64::NEG_INFINITY, hi, rng)?;
        let counts: Vec<f64> = grid
            .iter()
            .map(|&s| sample.pattern.rank(s) as f64)
            .collect();
        Ok((counts, sample.overflow as u64))
    })?;
    let m = grid.len();
    let mut sum = vec![0.0; m];
    let mut sum_sq = vec![0.0; m];
    let mut tally = 0u64;
    let at = |counts: &[f64], s: f64| counts[grid.partition_point(|&y| y <= s) - 1];
    let mut per_rep = Vec::with_capacity(rows.len());
    for (counts, overflow) in &rows {
        for k in 0..m {
            sum[k] += counts[k];
            sum_sq[k] += counts[k] * counts[k];
        }
        tally += overflow;
        per_rep.push(
            g.pieces()
                .iter()
                .map(|p| p.height * (at(counts, t - p.lo) - at(counts, t - p.hi)))
                .sum::<f64>(),
        );
    }
    let raw: Vec<ExperimentReport> = (0..m)
        .map(|k| {
            mc.report(
                ExperimentReport::from_moments(sum[k], sum_sq[k], mc.n_rep, mc.ci_level),
                None,
                tally,
            )
        })
        .collect();
    let isotonic = isotonic_fit(&raw.iter().map(|r| r.estimate).collect::<Vec<_>>());
    let table = RenewalTable {
        grid,
        raw,
        isotonic,
    };
    let estimate = key_renewal_convolve(&table, g, t)?;
    let spread = ExperimentReport::from_samples(&per_rep, mc.ci_level);
    let half = (spread.ci_high - spread.ci_low) / 2.0;
    let report = ExperimentReport {
        estimate,
        ci_low: estimate - half,
        ci_high: estimate + half,
        ..spread
    };
    Ok((
        table,
        mc.report(report, key_renewal_limit(spec, g).ok(), tally),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ClusterModel, Delay, InterarrivalLaw};
    use crate::Execution;
    use proptest::prelude::*;

    #[test]
    fn pava_examples() {
        assert_eq!(
            isotonic_fit(&[1.0, 3.0, 2.0, 4.0]),
            vec![1.0, 2.5, 2.5, 4.0]
        );
        assert_eq!(isotonic_fit(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
        assert!(isotonic_fit(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn pava_is_monotone_and_mean_preserving(v in prop::collection::vec(-100.0..100.0f64, 1..50)) {
            let fit = isotonic_fit(&v);
            prop_assert_eq!(fit.len(), v.len());
            prop_assert!(fit.windows(2).all(|w| w[0] <= w[1] + 1e-12));
            let (a, b): (f64, f64) = (v.iter().sum(), fit.iter().sum());
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }

    fn mc(n: usize, seed: u64) -> MonteCarlo {
        MonteCarlo::new(n, seed).with_exec(Execution::Sequential)
    }

    #[test]
    fn empty_clusters_without_parents_give_zero() {
        let spec = ProcessSpec::new(InterarrivalLaw::exponential(1.0), ClusterModel::Empty);
        let t = estimate_renewal_function(&spec, &[0.0, 5.0, 10.0], &mc(50, 1)).unwrap();
        assert!(t.raw_values().iter().all(|&v| v == 0.0));
        assert!(t.isotonic.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn delayed_poisson_renewal_function() {
        // parents only, first parent at 0, rate 2: U(t) = 1 + 2 t
        let spec = ProcessSpec::new(InterarrivalLaw::exponential(2.0), ClusterModel::Empty)
            .with_parents(true)
            .with_delay(Delay::Zero, ClusterModel::Empty);
        let grid = [1.0, 3.0, 10.0];
        let t = estimate_renewal_function(&spec, &grid, &mc(20_000, 2)).unwrap();
        for (r, &g) in t.raw.iter().zip(&grid) {
            let target = 1.0 + 2.0 * g;
            assert!(
                (r.estimate - target).abs() < 4.0 * r.std_error,
                "{} vs {target}",
                r.estimate
            );
            assert!(r.estimate.is_finite());
        }
        assert!(t.max_isotonic_shift_in_se() < 4.0);
    }

    #[test]
    fn indicator_convolution_is_table_difference() {
        let spec = crate::models::example_two_preset();
        let grid: Vec<f64> = (0..=40).map(|i| 80.0 + 0.5 * i as f64).collect();
        let table = estimate_renewal_function(&spec, &grid, &mc(200, 3)).unwrap();
        for &x in &[0.5, 1.0, 3.0, 10.0] {
            let g = StepFunction::indicator(x).unwrap();
            let v = key_renewal_convolve(&table, &g, 100.0).unwrap();
            assert_eq!(
                v,
                table.lookup(100.0).unwrap() - table.lookup(100.0 - x).unwrap()
            );
        }
        assert_eq!(
            key_renewal_convolve(&table, &StepFunction::zero(), 100.0).unwrap(),
            0.0
        );
        let wide = StepFunction::indicator(30.0).unwrap();
        assert!(matches!(
            key_renewal_convolve(&table, &wide, 100.0),
            Err(Error::SupportExceedsRange { .. })
        ));
        assert!(
            key_renewal_convolve(&table, &StepFunction::indicator(1.0).unwrap(), 101.0).is_err()
        );
    }

    #[test]
    fn key_renewal_estimate_matches_table() {
        let spec = crate::models::example_two_preset();
        let g = StepFunction::new([(0.0, 1.0, 1.0), (2.0, 4.0, 0.5)]).unwrap();
        let (table, report) = estimate_key_renewal(&spec, &g, 100.0, &mc(3000, 4)).unwrap();
        assert_eq!(table.grid, vec![96.0, 98.0, 99.0, 100.0]);
        assert_eq!(
            report.estimate,
            key_renewal_convolve(&table, &g, 100.0).unwrap()
        );
        assert!((report.target.unwrap() - 1.12).abs() < 1e-12);
        assert!(report.within_se(4.0).unwrap(), "{report:?}");
        let (_, zero) =
            estimate_key_renewal(&spec, &StepFunction::zero(), 100.0, &mc(10, 4)).unwrap();
        assert_eq!(zero.estimate, 0.0);
    }

    #[test]
    fn key_renewal_limit_example_two() {
        let g = StepFunction::new([(0.0, 1.0, 1.0), (2.0, 4.0, 0.5)]).unwrap();
        let v = key_renewal_limit(&crate::models::example_two_preset(), &g).unwrap();
        assert!((v - 1.12).abs() < 1e-12);
    }
}
