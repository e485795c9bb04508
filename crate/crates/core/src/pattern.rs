//! Point patterns on a bounded half-open window and the measure-level operators
//! used throughout: shift, interval counts, restriction and cluster flattening.
//!
//! Intervals are half-open `(a, b]` everywhere. Membership uses exact float
//! comparison.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Half-open interval `(lo, hi]`. Bounds may be infinite, never NaN.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    lo: f64,
    hi: f64,
}

impl Window {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(invalid(format!("window ({lo}, {hi}] is not an interval")));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.lo == self.hi
    }

    #[inline]
    pub fn contains(&self, t: f64) -> bool {
        self.lo < t && t <= self.hi
    }

    pub fn covers(&self, a: f64, b: f64) -> bool {
        self.lo <= a && b <= self.hi
    }

    pub fn shifted(&self, t: f64) -> Window {
        Window {
            lo: self.lo - t,
            hi: self.hi - t,
        }
    }
}

/// Finite sorted multiset of times inside a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    points: Vec<f64>,
    window: Window,
}

impl PointPattern {
    /// Sorts `points` and checks finiteness and window containment.
    pub fn new(mut points: Vec<f64>, window: Window) -> Result<Self> {
        if let Some(&bad) = points.iter().find(|t| !t.is_finite()) {
            return Err(Error::NonFiniteTime(bad));
        }
        if let Some(&out) = points.iter().find(|&&t| !window.contains(t)) {
            return Err(invalid(format!(
                "point {out} outside window ({}, {}]",
                window.lo, window.hi
            )));
        }
        points.sort_by(f64::total_cmp);
        Ok(Self { points, window })
    }

    pub fn empty(window: Window) -> Self {
        Self {
            points: Vec::new(),
            window,
        }
    }

    pub(crate) fn from_sorted_unchecked(points: Vec<f64>, window: Window) -> Self {
        debug_assert!(points.windows(2).all(|w| w[0] <= w[1]));
        debug_assert!(points.iter().all(|&t| window.contains(t)));
        Self { points, window }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of points `<= t`.
    #[inline]
    pub fn rank(&self, t: f64) -> usize {
        self.points.partition_point(|&p| p <= t)
    }

    /// First point strictly after `t`.
    pub fn first_after(&self, t: f64) -> Option<f64> {
        self.points.get(self.rank(t)).copied()
    }

    /// Keeps points in `(lo, hi]`; returns the restricted pattern and the number dropped.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<(PointPattern, usize)> {
        let w = Window::new(lo, hi)?;
        let start = self.rank(lo);
        let end = self.rank(hi).max(start);
        let kept = self.points[start..end].to_vec();
        let dropped = self.points.len() - kept.len();
        Ok((PointPattern::from_sorted_unchecked(kept, w), dropped))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t")?;
        for t in &self.points {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }

    /// Parses the `t` CSV format. The window is not part of the file.
    pub fn read_csv<R: BufRead>(input: R, window: Window) -> Result<Self> {
        let mut points = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if i == 0 {
                if line != "t" {
                    return Err(Error::Csv {
                        line: 1,
                        msg: format!("expected header `t`, found `{line}`"),
                    });
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            points.push(parse_f64(line, i + 1)?);
        }
        Self::new(points, window)
    }
}

/// Shifted measure: every point `x` becomes `x - t` and the window moves by `-t`.
pub fn shift(p: &PointPattern, t: f64) -> PointPattern {
    let points = p.points.iter().map(|&x| x - t).collect();
    PointPattern::from_sorted_unchecked(points, p.window.shifted(t))
}

/// Number of points in `(a, b]`.
pub fn count_in(p: &PointPattern, a: f64, b: f64) -> Result<usize> {
    if !(a <= b) {
        return Err(invalid(format!("count_in needs a <= b, got ({a}, {b}]")));
    }
    if !p.window.covers(a, b) {
        return Err(Error::WindowViolation {
            a,
            b,
            lo: p.window.lo,
            hi: p.window.hi,
        });
    }
    Ok(p.rank(b) - p.rank(a))
}

/// One epoch with its mark: cluster size, cluster offsets and the interarrival that ended at it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkedArrival {
    pub epoch: f64,
    pub interarrival: f64,
    pub offsets: Vec<f64>,
}

impl MarkedArrival {
    pub fn new(epoch: f64, interarrival: f64, offsets: Vec<f64>) -> Result<Self> {
        if !epoch.is_finite() {
            return Err(Error::NonFiniteTime(epoch));
        }
        if !(interarrival >= 0.0) || !interarrival.is_finite() {
            return Err(invalid(format!(
                "interarrival {interarrival} must be finite and >= 0"
            )));
        }
        if let Some(&bad) = offsets.iter().find(|t| !t.is_finite()) {
            return Err(Error::NonFiniteTime(bad));
        }
        Ok(Self {
            epoch,
            interarrival,
            offsets,
        })
    }

    pub fn cluster_size(&self) -> usize {
        self.offsets.len()
    }

    /// Farthest cluster point from the epoch; 0 for an empty cluster.
    pub fn cluster_radius(&self) -> f64 {
        self.offsets.iter().fold(0.0, |r, o| r.max(o.abs()))
    }
}

/// Arrivals sorted by epoch, together with the window on which they are complete.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkedPattern {
    arrivals: Vec<MarkedArrival>,
    window: Window,
}

/// Relative tolerance for the epoch-difference invariant.
pub const EPOCH_TOLERANCE: f64 = 1e-9;

impl MarkedPattern {
    /// Validates ordering, window containment and that consecutive epoch gaps equal the
    /// later arrival's interarrival.
    pub fn new(arrivals: Vec<MarkedArrival>, window: Window) -> Result<Self> {
        for a in &arrivals {
            if !window.contains(a.epoch) {
                return Err(invalid(format!(
                    "epoch {} outside window ({}, {}]",
                    a.epoch, window.lo, window.hi
                )));
            }
        }
        for (i, pair) in arrivals.windows(2).enumerate() {
            let gap = pair[1].epoch - pair[0].epoch;
            if gap < 0.0 {
                return Err(invalid(format!("epochs decrease at index {}", i + 1)));
            }
            let scale = 1.0_f64.max(pair[1].epoch.abs());
            if (gap - pair[1].interarrival).abs() > EPOCH_TOLERANCE * scale {
                return Err(invalid(format!(
                    "epoch gap {gap} at index {} differs from interarrival {}",
                    i + 1,
                    pair[1].interarrival
                )));
            }
        }
        Ok(Self { arrivals, window })
    }

    pub fn arrivals(&self) -> &[MarkedArrival] {
        &self.arrivals
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn len(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,interarrival,cluster_size,offsets")?;
        for a in &self.arrivals {
            let offsets: Vec<String> = a.offsets.iter().map(|o| o.to_string()).collect();
            writeln!(
                out,
                "{},{},{},{}",
                a.epoch,
                a.interarrival,
                a.offsets.len(),
                offsets.join(";")
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R, window: Window) -> Result<Self> {
        let mut arrivals = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            let lineno = i + 1;
            if i == 0 {
                if line != "epoch,interarrival,cluster_size,offsets" {
                    return Err(Error::Csv {
                        line: 1,
                        msg: format!("unexpected header `{line}`"),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::Csv {
                    line: lineno,
                    msg: format!("expected 4 columns, found {}", cols.len()),
                });
            }
            let epoch = parse_f64(cols[0], lineno)?;
            let interarrival = parse_f64(cols[1], lineno)?;
            let size: usize = cols[2].trim().parse().map_err(|_| Error::Csv {
                line: lineno,
                msg: format!("bad cluster_size `{}`", cols[2]),
            })?;
            let offsets = if cols[3].is_empty() {
                Vec::new()
            } else {
                cols[3]
                    .split(';')
                    .map(|s| parse_f64(s, lineno))
                    .collect::<Result<Vec<_>>>()?
            };
            if offsets.len() != size {
                return Err(Error::Csv {
                    line: lineno,
                    msg: format!("cluster_size {size} but {} offsets", offsets.len()),
                });
            }
            arrivals.push(MarkedArrival::new(epoch, interarrival, offsets)?);
        }
        Self::new(arrivals, window)
    }
}

/// Result of superposing clusters: the pattern plus the count of points that fell
/// outside the marked pattern's window.
#[derive(Clone, Debug, PartialEq)]
pub struct Flattened {
    pub pattern: PointPattern,
    pub overflow: usize,
}

/// Superposes `epoch + offset` over all arrivals (and the epochs themselves when
/// `include_parents`), keeping points inside the marked window.
pub fn flatten(m: &MarkedPattern, include_parents: bool) -> Flattened {
    let w = m.window;
    let mut points = Vec::new();
    let mut overflow = 0;
    for a in &m.arrivals {
        if include_parents {
            // epochs are in the window by construction
            points.push(a.epoch);
        }
        for &o in &a.offsets {
            let t = a.epoch + o;
            if w.contains(t) {
                points.push(t);
            } else {
                overflow += 1;
            }
        }
    }
    points.sort_unstable_by(f64::total_cmp);
    Flattened {
        pattern: PointPattern::from_sorted_unchecked(points, w),
        overflow,
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Csv {
        line,
        msg: format!("bad number `{s}`"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn win(lo: f64, hi: f64) -> Window {
        Window::new(lo, hi).unwrap()
    }

    #[test]
    fn shift_by_one() {
        let p = PointPattern::new(vec![3.0, 1.5], win(0.0, 10.0)).unwrap();
        let q = shift(&p, 1.0);
        assert_eq!(q.points(), &[0.5, 2.0]);
        assert_eq!(q.window(), win(-1.0, 9.0));
        assert_eq!(shift(&p, 0.0), p);
    }

    #[test]
    fn count_is_half_open_with_multiplicity() {
        let p = PointPattern::new(vec![1.0, 2.0, 2.0, 5.0], win(0.0, 10.0)).unwrap();
        assert_eq!(count_in(&p, 1.0, 2.0).unwrap(), 2);
        assert_eq!(count_in(&p, 0.0, 1.0).unwrap(), 1);
        assert_eq!(count_in(&p, 2.0, 2.0).unwrap(), 0);
        let e = PointPattern::empty(win(0.0, 10.0));
        assert_eq!(count_in(&e, 3.0, 7.0).unwrap(), 0);
    }

    #[test]
    fn count_outside_window_is_error() {
        let p = PointPattern::new(vec![1.0], win(0.0, 10.0)).unwrap();
        assert!(matches!(
            count_in(&p, -1.0, 2.0),
            Err(Error::WindowViolation { .. })
        ));
        assert!(matches!(
            count_in(&p, 2.0, 11.0),
            Err(Error::WindowViolation { .. })
        ));
        assert!(count_in(&p, 3.0, 2.0).is_err());
    }

    #[test]
    fn rejects_bad_points() {
        assert!(PointPattern::new(vec![f64::NAN], win(0.0, 1.0)).is_err());
        assert!(PointPattern::new(vec![0.0], win(0.0, 1.0)).is_err());
        assert!(PointPattern::new(vec![1.0], win(0.0, 1.0)).is_ok());
        assert!(Window::new(2.0, 1.0).is_err());
    }

    #[test]
    fn flatten_single_arrival_with_parent() {
        let a = MarkedArrival::new(2.0, 2.0, vec![-0.5, 1.0]).unwrap();
        let m = MarkedPattern::new(vec![a], win(0.0, 10.0)).unwrap();
        let f = flatten(&m, true);
        assert_eq!(f.pattern.points(), &[1.5, 2.0, 3.0]);
        assert_eq!(f.overflow, 0);
        let f = flatten(&m, false);
        assert_eq!(f.pattern.points(), &[1.5, 3.0]);
    }

    #[test]
    fn flatten_empty_clusters() {
        let arrivals = vec![
            MarkedArrival::new(1.0, 1.0, vec![]).unwrap(),
            MarkedArrival::new(2.5, 1.5, vec![]).unwrap(),
        ];
        let m = MarkedPattern::new(arrivals, win(0.0, 10.0)).unwrap();
        assert!(flatten(&m, false).pattern.is_empty());
        assert_eq!(flatten(&m, true).pattern.len(), 2);
    }

    #[test]
    fn flatten_tallies_overflow() {
        let a = MarkedArrival::new(9.0, 9.0, vec![0.5, 2.0, -10.0]).unwrap();
        let m = MarkedPattern::new(vec![a], win(0.0, 10.0)).unwrap();
        let f = flatten(&m, false);
        assert_eq!(f.pattern.points(), &[9.5]);
        assert_eq!(f.overflow, 2);
    }

    #[test]
    fn marked_pattern_checks_gaps() {
        let a = MarkedArrival::new(1.0, 1.0, vec![]).unwrap();
        let b = MarkedArrival::new(2.0, 0.5, vec![]).unwrap();
        assert!(MarkedPattern::new(vec![a.clone(), b], win(0.0, 5.0)).is_err());
        let b = MarkedArrival::new(2.0, 1.0, vec![]).unwrap();
        assert!(MarkedPattern::new(vec![a, b], win(0.0, 5.0)).is_ok());
        assert!(MarkedArrival::new(0.0, -1.0, vec![]).is_err());
    }

    #[test]
    fn radius() {
        assert_eq!(
            MarkedArrival::new(0.0, 0.0, vec![])
                .unwrap()
                .cluster_radius(),
            0.0
        );
        let a = MarkedArrival::new(0.0, 0.0, vec![-0.5, 1.0, 0.2]).unwrap();
        assert_eq!(a.cluster_radius(), 1.0);
        let a = MarkedArrival::new(0.0, 0.0, vec![0.7; 4]).unwrap();
        assert_eq!(a.cluster_radius(), 0.7);
    }

    #[test]
    fn restrict_drops_and_counts() {
        let p = PointPattern::new(vec![1.0, 2.0, 3.0, 4.0], win(0.0, 10.0)).unwrap();
        let (q, dropped) = p.restrict(1.0, 3.0).unwrap();
        assert_eq!(q.points(), &[2.0, 3.0]);
        assert_eq!(dropped, 2);
    }

    #[test]
    fn marked_csv_roundtrip() {
        let arrivals = vec![
            MarkedArrival::new(0.1, 0.1, vec![]).unwrap(),
            MarkedArrival::new(0.1 + 0.7, 0.7, vec![-0.25, 1.0 / 3.0]).unwrap(),
        ];
        let m = MarkedPattern::new(arrivals, win(0.0, 5.0)).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = MarkedPattern::read_csv(buf.as_slice(), win(0.0, 5.0)).unwrap();
        assert_eq!(back, m);
    }

    fn pattern_strategy() -> impl Strategy<Value = PointPattern> {
        prop::collection::vec(-100.0..100.0f64, 0..60)
            .prop_map(|pts| PointPattern::new(pts, win(-100.0, 100.0)).unwrap())
    }

    proptest! {
        #[test]
        fn shift_semigroup(p in pattern_strategy(), a in -50.0..50.0f64, b in -50.0..50.0f64) {
            let lhs = shift(&shift(&p, a), b);
            let rhs = shift(&p, a + b);
            prop_assert_eq!(lhs.len(), rhs.len());
            for (x, y) in lhs.points().iter().zip(rhs.points()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
            prop_assert!(lhs.points().windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn count_additive(p in pattern_strategy(), mut cuts in prop::array::uniform3(-100.0..100.0f64)) {
            cuts.sort_by(f64::total_cmp);
            let [a, b, c] = cuts;
            prop_assert_eq!(
                count_in(&p, a, b).unwrap() + count_in(&p, b, c).unwrap(),
                count_in(&p, a, c).unwrap()
            );
        }

        #[test]
        fn count_shift_covariant(p in pattern_strategy(), t in -20.0..20.0f64, a in -50.0..0.0f64, len in 0.0..50.0f64) {
            // integer-valued times keep the shifted comparisons exact
            let p = PointPattern::new(p.points().iter().map(|x| x.round()).filter(|&x| x > -100.0).collect(), p.window()).unwrap();
            let (t, a, b) = (t.round(), a.round(), (a + len).round());
            prop_assert_eq!(count_in(&shift(&p, t), a - t, b - t).unwrap(), count_in(&p, a, b).unwrap());
        }

        #[test]
        fn csv_roundtrip(p in pattern_strategy()) {
            let mut buf = Vec::new();
            p.write_csv(&mut buf).unwrap();
            let back = PointPattern::read_csv(buf.as_slice(), p.window()).unwrap();
            prop_assert_eq!(back, p);
        }

        #[test]
        fn flatten_count_identity(
            clusters in prop::collection::vec((0.0..5.0f64, prop::collection::vec(-20.0..20.0f64, 0..6)), 0..20),
            parents in any::<bool>(),
        ) {
            let mut epoch = 0.0;
            let mut arrivals = Vec::new();
            for (gap, offs) in clusters {
                epoch += gap;
                arrivals.push(MarkedArrival::new(epoch, gap, offs).unwrap());
            }
            let n_arr = arrivals.len();
            let total: usize = arrivals.iter().map(|a| a.cluster_size()).sum();
            let m = MarkedPattern::new(arrivals, win(-1.0, 100.0)).unwrap();
            let f = flatten(&m, parents);
            let expected = total + if parents { n_arr } else { 0 } - f.overflow;
            prop_assert_eq!(f.pattern.len(), expected);
            prop_assert!(f.pattern.points().windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(
                flatten(&m, true).pattern.len() - flatten(&m, false).pattern.len(),
                n_arr
            );
        }
    }
}
