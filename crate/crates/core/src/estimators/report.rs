use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::stats::normal_z;

/// Normal-approximation level giving a `+-3 SE` interval.
pub const DEFAULT_CI_LEVEL: f64 = 0.9973;
/// Acceptance band half-width, in standard errors.
pub const ACCEPTANCE_SE: f64 = 4.0;

pub const REPORT_CSV_HEADER: &str =
    "estimate,std_error,ci_low,ci_high,n_rep,target,seed,truncation_tally";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_rep: usize,
    pub target: Option<f64>,
    pub seed: u64,
    pub stream_id: u64,
    pub truncation_tally: u64,
}

impl ExperimentReport {
    /// Report from the sum and sum of squares of `n_rep` replication values.
    pub fn from_moments(sum: f64, sum_sq: f64, n_rep: usize, level: f64) -> Self {
        let n = n_rep as f64;
        let estimate = sum / n;
        let var = if n_rep > 1 {
            ((sum_sq - sum * estimate) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        let std_error = (var / n).sqrt();
        let half = normal_z(level) * std_error;
        Self {
            estimate,
            std_error,
            ci_low: estimate - half,
            ci_high: estimate + half,
            n_rep,
            target: None,
            seed: 0,
            stream_id: 0,
            truncation_tally: 0,
        }
    }

    pub fn from_samples(samples: &[f64], level: f64) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        // centred second moment is numerically kinder than sum_sq
        let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
        let mut r = Self::from_moments(mean * n, ss + mean * mean * n, samples.len(), level);
        r.estimate = mean;
        let half = (r.ci_high - r.ci_low) / 2.0;
        r.ci_low = mean - half;
        r.ci_high = mean + half;
        r
    }

    pub fn with_target(mut self, target: Option<f64>) -> Self {
        self.target = target;
        self
    }

    pub fn with_stream(mut self, seed: u64, stream_id: u64) -> Self {
        self.seed = seed;
        self.stream_id = stream_id;
        self
    }

    pub fn with_tally(mut self, tally: u64) -> Self {
        self.truncation_tally = tally;
        self
    }

    pub fn ci_contains(&self, v: f64) -> bool {
        self.ci_low <= v && v <= self.ci_high
    }

    /// `|estimate - target| <= k * SE`; `None` without a target.
    pub fn within_se(&self, k: f64) -> Option<bool> {
        self.target
            .map(|t| (self.estimate - t).abs() <= k * self.std_error)
    }

    pub fn csv_row(&self) -> String {
        let target = self.target.map(|t| t.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.estimate,
            self.std_error,
            self.ci_low,
            self.ci_high,
            self.n_rep,
            target,
            self.seed,
            self.truncation_tally
        )
    }

    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

pub fn write_reports_csv<W: Write>(reports: &[ExperimentReport], mut out: W) -> Result<()> {
    writeln!(out, "{REPORT_CSV_HEADER}")?;
    for r in reports {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn write_reports_jsonl<W: Write>(reports: &[ExperimentReport], mut out: W) -> Result<()> {
    for r in reports {
        writeln!(out, "{}", r.json_line())?;
    }
    Ok(())
}

pub fn read_reports_jsonl<R: BufRead>(input: R) -> Result<Vec<ExperimentReport>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Csv {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Parses the report CSV. `stream_id` is not part of the CSV and reads back as 0.
pub fn read_reports_csv<R: BufRead>(input: R) -> Result<Vec<ExperimentReport>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if i == 0 {
            if line.trim_end() != REPORT_CSV_HEADER {
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
        if cols.len() != 8 {
            return Err(Error::Csv {
                line: lineno,
                msg: format!("expected 8 columns, found {}", cols.len()),
            });
        }
        let bad = |what: &str| Error::Csv {
            line: lineno,
            msg: format!("bad {what}"),
        };
        let f = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
        out.push(ExperimentReport {
            estimate: f(cols[0], "estimate")?,
            std_error: f(cols[1], "std_error")?,
            ci_low: f(cols[2], "ci_low")?,
            ci_high: f(cols[3], "ci_high")?,
            n_rep: cols[4].parse().map_err(|_| bad("n_rep"))?,
            target: if cols[5].is_empty() {
                None
            } else {
                Some(f(cols[5], "target")?)
            },
            seed: cols[6].parse().map_err(|_| bad("seed"))?,
            stream_id: 0,
            truncation_tally: cols[7].parse().map_err(|_| bad("truncation_tally"))?,
        });
    }
    Ok(out)
}
