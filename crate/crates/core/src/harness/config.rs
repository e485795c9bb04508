use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::estimators::{StepFunction, DEFAULT_CI_LEVEL};
use crate::kv::{split_call, KvFile};
use crate::models::ProcessSpec;

/// What to run, with the parameters specific to it.
#[derive(Clone, Debug, PartialEq)]
pub enum ExperimentKind {
    WindowMean {
        t: f64,
        x: f64,
    },
    Elementary {
        t: f64,
    },
    RecurrenceCdf {
        t: f64,
        grid: Vec<f64>,
        span: Option<f64>,
    },
    VoidProb {
        t: f64,
        x: f64,
    },
    RenewalFunction {
        grid: Vec<f64>,
    },
    KeyRenewal {
        t: f64,
        g: StepFunction,
    },
    Coupling {
        epsilon: f64,
        steps_cap: u64,
        k_checks: usize,
        min_finite: f64,
    },
    /// Window-count KS across shifts of the stationary process.
    StationarityShift {
        shifts: Vec<f64>,
        x: f64,
        alpha: f64,
    },
    /// Point stationarity seen from `T_k`.
    StationarityPoint {
        k: usize,
        coordinates: usize,
        alpha: f64,
    },
    FlipTest {
        n: usize,
        stop_after: usize,
        alpha: f64,
        control: bool,
    },
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::WindowMean { .. } => "window_mean",
            ExperimentKind::Elementary { .. } => "elementary",
            ExperimentKind::RecurrenceCdf { .. } => "recurrence_cdf",
            ExperimentKind::VoidProb { .. } => "void_prob",
            ExperimentKind::RenewalFunction { .. } => "renewal_function",
            ExperimentKind::KeyRenewal { .. } => "key_renewal",
            ExperimentKind::Coupling { .. } => "coupling",
            ExperimentKind::StationarityShift { .. } | ExperimentKind::StationarityPoint { .. } => {
                "stationarity_check"
            }
            ExperimentKind::FlipTest { .. } => "flip_test",
        }
    }

    fn needs_spec(&self) -> bool {
        !matches!(self, ExperimentKind::FlipTest { .. })
    }
}

/// Acceptance band applied to reports that carry a target.
#[derive(Clone, Debug, PartialEq)]
pub struct Acceptance {
    /// Half-width in standard errors; used when no other tolerance is set.
    pub se: f64,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
}

impl Default for Acceptance {
    fn default() -> Self {
        Self {
            se: crate::estimators::ACCEPTANCE_SE,
            abs_tol: None,
            rel_tol: None,
        }
    }
}

impl Acceptance {
    pub fn accepts(&self, estimate: f64, std_error: f64, target: f64) -> bool {
        let err = (estimate - target).abs();
        if let Some(a) = self.abs_tol {
            err < a
        } else if let Some(r) = self.rel_tol {
            err <= r * target.abs()
        } else {
            err <= self.se * std_error
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Absent only for experiments that do not simulate a process.
    pub spec: Option<ProcessSpec>,
    pub kind: ExperimentKind,
    pub acceptance: Acceptance,
    pub n_rep: usize,
    pub seed: u64,
    pub stream_id: u64,
    pub ci_level: f64,
    pub out: PathBuf,
}

fn config_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config {
        line,
        msg: msg.into(),
    }
}

/// `a, b, c` or `linspace(lo, hi, n)`.
pub fn parse_grid(s: &str) -> Option<Vec<f64>> {
    let s = s.trim();
    if let Some(("linspace", args)) = split_call(s) {
        if args.len() != 3 {
            return None;
        }
        let lo: f64 = args[0].parse().ok()?;
        let hi: f64 = args[1].parse().ok()?;
        let n: usize = args[2].parse().ok()?;
        return match n {
            0 => None,
            1 => Some(vec![lo]),
            _ => Some(
                (0..n)
                    .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                    .collect(),
            ),
        };
    }
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse().ok())
        .collect::<Option<_>>()?;
    (!v.is_empty() && v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[0] <= w[1]))
        .then_some(v)
}

fn grid_key(kv: &mut KvFile, key: &str) -> Result<Vec<f64>> {
    let (line, v) = kv.require_str(key)?;
    parse_grid(&v).ok_or_else(|| config_err(line, format!("bad grid `{v}` for `{key}`")))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KvFile::parse(text)?;
        let cfg = Self::from_kv(&mut kv)?;
        kv.finish()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(0, format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Consumes the experiment, acceptance and run keys, and the process keys when the
    /// experiment needs a process.
    pub fn from_kv(kv: &mut KvFile) -> Result<Self> {
        let (line, name) = kv.require_str("experiment.kind")?;
        let kind = match name.as_str() {
            "window_mean" => ExperimentKind::WindowMean {
                t: kv.require("experiment.t")?,
                x: kv.require("experiment.x")?,
            },
            "elementary" => ExperimentKind::Elementary {
                t: kv.require("experiment.t")?,
            },
            "recurrence_cdf" => ExperimentKind::RecurrenceCdf {
                t: kv.require("experiment.t")?,
                grid: grid_key(kv, "experiment.grid")?,
                span: kv.take("experiment.span")?,
            },
            "void_prob" => ExperimentKind::VoidProb {
                t: kv.require("experiment.t")?,
                x: kv.require("experiment.x")?,
            },
            "renewal_function" => ExperimentKind::RenewalFunction {
                grid: grid_key(kv, "experiment.grid")?,
            },
            "key_renewal" => {
                let t = kv.require("experiment.t")?;
                let (gl, gs) = kv.require_str("experiment.g")?;
                let g = StepFunction::parse(&gs).ok_or_else(|| {
                    config_err(
                        gl,
                        format!("bad step function `{gs}` (want lo:hi:height;...)"),
                    )
                })?;
                ExperimentKind::KeyRenewal { t, g }
            }
            "coupling" => ExperimentKind::Coupling {
                epsilon: kv.require("experiment.epsilon")?,
                steps_cap: kv
                    .take_or("experiment.steps_cap", crate::coupling::DEFAULT_STEPS_CAP)?,
                k_checks: kv.take_or("experiment.k_checks", 100)?,
                min_finite: kv.take_or("experiment.min_finite", 0.99)?,
            },
            "stationarity_check" => {
                let alpha = kv.take_or("experiment.alpha", 0.01)?;
                let (ml, mode) = kv
                    .take_str("experiment.mode")
                    .unwrap_or((line, "shift".into()));
                match mode.as_str() {
                    "shift" => ExperimentKind::StationarityShift {
                        shifts: grid_key(kv, "experiment.shifts")?,
                        x: kv.take_or("experiment.x", 1.0)?,
                        alpha,
                    },
                    "point" => ExperimentKind::StationarityPoint {
                        k: kv.require("experiment.k")?,
                        coordinates: kv.take_or("experiment.coordinates", 3)?,
                        alpha,
                    },
                    other => {
                        return Err(config_err(ml, format!("unknown experiment.mode `{other}`")))
                    }
                }
            }
            "flip_test" => ExperimentKind::FlipTest {
                n: kv.require("experiment.n")?,
                stop_after: kv.take_or("experiment.stop_after", 1)?,
                alpha: kv.take_or("experiment.alpha", 0.01)?,
                control: kv.take_or("experiment.control", true)?,
            },
            other => {
                return Err(config_err(
                    line,
                    format!("unknown experiment.kind `{other}`"),
                ))
            }
        };
        let spec = if kind.needs_spec() || kv.contains("interarrival.kind") {
            Some(ProcessSpec::from_kv(kv)?)
        } else {
            None
        };
        let acceptance = Acceptance {
            se: kv.take_or("acceptance.se", crate::estimators::ACCEPTANCE_SE)?,
            abs_tol: kv.take("acceptance.abs_tol")?,
            rel_tol: kv.take("acceptance.rel_tol")?,
        };
        let cfg = Self {
            spec,
            kind,
            acceptance,
            n_rep: kv.require("run.n_rep")?,
            seed: kv.take_or("run.seed", 0)?,
            stream_id: kv.take_or("run.stream_id", 0)?,
            ci_level: kv.take_or("run.ci_level", DEFAULT_CI_LEVEL)?,
            out: kv.take_or("run.out", PathBuf::from("out"))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every value that can be checked without sampling.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(config_err(0, msg));
        if let Some(spec) = &self.spec {
            spec.validate().map_err(|e| config_err(0, e.to_string()))?;
        }
        if self.n_rep < 2 {
            return bad(format!("run.n_rep = {} must be at least 2", self.n_rep));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return bad(format!(
                "run.ci_level = {} must lie in (0, 1)",
                self.ci_level
            ));
        }
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        let ok = match &self.kind {
            ExperimentKind::WindowMean { t, x } | ExperimentKind::VoidProb { t, x } => {
                *t >= 0.0 && t.is_finite() && finite_pos(*x)
            }
            ExperimentKind::Elementary { t } => finite_pos(*t),
            ExperimentKind::RecurrenceCdf { t, grid, span } => {
                t.is_finite() && grid.iter().all(|x| *x >= 0.0) && span.is_none_or(finite_pos)
            }
            ExperimentKind::RenewalFunction { grid } => !grid.is_empty(),
            ExperimentKind::KeyRenewal { t, .. } => t.is_finite(),
            ExperimentKind::Coupling {
                epsilon,
                steps_cap,
                min_finite,
                ..
            } => finite_pos(*epsilon) && *steps_cap > 0 && (0.0..=1.0).contains(min_finite),
            ExperimentKind::StationarityShift { shifts, x, alpha } => {
                shifts.len() >= 2 && finite_pos(*x) && *alpha > 0.0 && *alpha < 1.0
            }
            ExperimentKind::StationarityPoint {
                coordinates, alpha, ..
            } => *coordinates > 0 && *alpha > 0.0 && *alpha < 1.0,
            ExperimentKind::FlipTest {
                n,
                stop_after,
                alpha,
                ..
            } => *n > 0 && *stop_after > 0 && *alpha > 0.0 && *alpha < 1.0,
        };
        if !ok {
            return bad(format!(
                "invalid parameters for experiment `{}`",
                self.kind.name()
            ));
        }
        if self.kind.needs_spec() && self.spec.is_none() {
            return bad("missing process keys".into());
        }
        Ok(())
    }

    /// Canonical `key = value` lines for the manifest, sorted by key.
    pub fn to_kv_lines(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        put("experiment.kind", self.kind.name().into());
        let grid = |g: &[f64]| {
            g.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        match &self.kind {
            ExperimentKind::WindowMean { t, x } | ExperimentKind::VoidProb { t, x } => {
                put("experiment.t", t.to_string());
                put("experiment.x", x.to_string());
            }
            ExperimentKind::Elementary { t } => put("experiment.t", t.to_string()),
            ExperimentKind::RecurrenceCdf { t, grid: g, span } => {
                put("experiment.t", t.to_string());
                put("experiment.grid", grid(g));
                if let Some(s) = span {
                    put("experiment.span", s.to_string());
                }
            }
            ExperimentKind::RenewalFunction { grid: g } => put("experiment.grid", grid(g)),
            ExperimentKind::KeyRenewal { t, g } => {
                put("experiment.t", t.to_string());
                put("experiment.g", g.to_expr());
            }
            ExperimentKind::Coupling {
                epsilon,
                steps_cap,
                k_checks,
                min_finite,
            } => {
                put("experiment.epsilon", epsilon.to_string());
                put("experiment.steps_cap", steps_cap.to_string());
                put("experiment.k_checks", k_checks.to_string());
                put("experiment.min_finite", min_finite.to_string());
            }
            ExperimentKind::StationarityShift { shifts, x, alpha } => {
                put("experiment.mode", "shift".into());
                put("experiment.shifts", grid(shifts));
                put("experiment.x", x.to_string());
                put("experiment.alpha", alpha.to_string());
            }
            ExperimentKind::StationarityPoint {
                k,
                coordinates,
                alpha,
            } => {
                put("experiment.mode", "point".into());
                put("experiment.k", k.to_string());
                put("experiment.coordinates", coordinates.to_string());
                put("experiment.alpha", alpha.to_string());
            }
            ExperimentKind::FlipTest {
                n,
                stop_after,
                alpha,
                control,
            } => {
                put("experiment.n", n.to_string());
                put("experiment.stop_after", stop_after.to_string());
                put("experiment.alpha", alpha.to_string());
                put("experiment.control", control.to_string());
            }
        }
        put("acceptance.se", self.acceptance.se.to_string());
        if let Some(a) = self.acceptance.abs_tol {
            put("acceptance.abs_tol", a.to_string());
        }
        if let Some(r) = self.acceptance.rel_tol {
            put("acceptance.rel_tol", r.to_string());
        }
        put("run.n_rep", self.n_rep.to_string());
        put("run.seed", self.seed.to_string());
        put("run.stream_id", self.stream_id.to_string());
        put("run.ci_level", self.ci_level.to_string());
        put("run.out", self.out.display().to_string());
        if let Some(spec) = &self.spec {
            out.extend(spec.to_kv_lines());
        }
        out.sort();
        out
    }

    pub fn to_text(&self) -> String {
        self.to_kv_lines()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
