use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPiece {
    pub lo: f64,
    pub hi: f64,
    pub height: f64,
}

/// Nonnegative step function `sum_k h_k 1_[a_k, b_k)` with finitely many disjoint pieces.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pieces: Vec<StepPiece>,
}

impl StepFunction {
    pub fn new(pieces: impl IntoIterator<Item = (f64, f64, f64)>) -> Result<Self> {
        let mut pieces: Vec<StepPiece> = pieces
            .into_iter()
            .map(|(lo, hi, height)| StepPiece { lo, hi, height })
            .collect();
        for p in &pieces {
            if !(p.lo.is_finite() && p.hi.is_finite() && p.lo < p.hi) {
                return Err(invalid(format!(
                    "step piece [{}, {}) is not a bounded interval",
                    p.lo, p.hi
                )));
            }
            if !(p.height >= 0.0 && p.height.is_finite()) {
                return Err(invalid(format!(
                    "step height {} must be finite and >= 0",
                    p.height
                )));
            }
        }
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        if pieces.windows(2).any(|w| w[1].lo < w[0].hi) {
            return Err(invalid("step pieces overlap"));
        }
        Ok(Self { pieces })
    }

    /// `1_[0, x)`.
    pub fn indicator(x: f64) -> Result<Self> {
        Self::new([(0.0, x, 1.0)])
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn pieces(&self) -> &[StepPiece] {
        &self.pieces
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.pieces
            .iter()
            .find(|p| p.lo <= y && y < p.hi)
            .map_or(0.0, |p| p.height)
    }

    pub fn integral(&self) -> f64 {
        self.pieces.iter().map(|p| p.height * (p.hi - p.lo)).sum()
    }

    /// Smallest `lo` and largest `hi` over all pieces.
    pub fn support(&self) -> Option<(f64, f64)> {
        let lo = self.pieces.first()?.lo;
        let hi = self
            .pieces
            .iter()
            .map(|p| p.hi)
            .fold(f64::NEG_INFINITY, f64::max);
        Some((lo, hi))
    }

    /// Parses `lo:hi:height` pieces separated by `;`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Some(Self::zero());
        }
        let pieces = s
            .split(';')
            .map(|p| {
                let v: Vec<f64> = p
                    .split(':')
                    .map(|x| x.trim().parse().ok())
                    .collect::<Option<_>>()?;
                (v.len() == 3).then(|| (v[0], v[1], v[2]))
            })
            .collect::<Option<Vec<_>>>()?;
        Self::new(pieces).ok()
    }

    pub fn to_expr(&self) -> String {
        let parts: Vec<String> = self
            .pieces
            .iter()
            .map(|p| format!("{}:{}:{}", p.lo, p.hi, p.height))
            .collect();
        parts.join(";")
    }
}
