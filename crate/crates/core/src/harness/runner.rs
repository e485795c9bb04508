use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use super::config::{ExperimentConfig, ExperimentKind};
use super::stats::{normal_z, KsReport};
use crate::coupling::{post_coupling_agreement, rademacher_flip_test, AgreementReport, FlipRule};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_elementary_ratio, estimate_forward_recurrence_cdf, estimate_key_renewal,
    estimate_renewal_function, estimate_void_probability, estimate_window_mean, ExperimentReport,
    MonteCarlo, RenewalTable, REPORT_CSV_HEADER,
};
use crate::exec::Execution;
use crate::models::ProcessSpec;
use crate::rng::derive_stream_id;
use crate::stationary::{point_stationary_check, shift_invariance_check};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ACCEPTANCE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Stream offset of the peek-ahead control in a flip test.
const CONTROL_STREAM: u64 = 0x00c0_4e72;

/// Result of one experiment, before or after it is written to disk.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOutcome {
    pub passed: bool,
    pub reports: Vec<ExperimentReport>,
    /// Human-readable lines describing the outcome.
    pub summary: Vec<String>,
    /// Extra artifacts: file name and contents.
    pub artifacts: Vec<(String, String)>,
    /// Paths written by [`write_outcome`].
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_OK
        } else {
            EXIT_ACCEPTANCE
        }
    }

    pub fn report_csv(&self) -> String {
        let mut s = format!("{REPORT_CSV_HEADER}\n");
        for r in &self.reports {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn report_jsonl(&self) -> String {
        self.reports.iter().map(|r| r.json_line() + "\n").collect()
    }
}

/// Exit status for a finished or failed run.
pub fn exit_code(result: &Result<RunOutcome>) -> i32 {
    match result {
        Ok(o) => o.exit_code(),
        Err(Error::Config { .. }) => EXIT_CONFIG,
        Err(_) => EXIT_RUNTIME,
    }
}

fn spec_of(cfg: &ExperimentConfig) -> Result<&ProcessSpec> {
    cfg.spec.as_ref().ok_or_else(|| Error::Config {
        line: 0,
        msg: "missing process keys".into(),
    })
}

fn accept(cfg: &ExperimentConfig, r: &ExperimentReport) -> bool {
    r.target
        .is_none_or(|t| cfg.acceptance.accepts(r.estimate, r.std_error, t))
}

fn describe(label: &str, r: &ExperimentReport, ok: bool) -> String {
    let target = r.target.map_or("none".to_string(), |t| format!("{t}"));
    format!(
        "{label}: estimate {:.6} (se {:.6}, ci [{:.6}, {:.6}]), target {target}: {}",
        r.estimate,
        r.std_error,
        r.ci_low,
        r.ci_high,
        if ok { "ok" } else { "outside band" }
    )
}

fn ks_csv(rows: &[(String, KsReport)]) -> String {
    let mut s = String::from("label,distance,critical_value,n1,n2,reject\n");
    for (label, k) in rows {
        let _ = writeln!(
            s,
            "{label},{},{},{},{},{}",
            k.distance, k.critical_value, k.n1, k.n2, k.reject
        );
    }
    s
}

fn renewal_csv(table: &RenewalTable) -> String {
    let mut s = String::from("t,estimate,std_error,isotonic\n");
    for ((t, r), iso) in table.grid.iter().zip(&table.raw).zip(&table.isotonic) {
        let _ = writeln!(s, "{t},{},{},{iso}", r.estimate, r.std_error);
    }
    s
}

fn coupling_csv(reports: &[AgreementReport]) -> String {
    let mut s = String::from("epsilon,tau,coupling_time,capped,agreement\n");
    for a in reports {
        let r = &a.run;
        let tau = r.tau.map(|t| t.to_string()).unwrap_or_default();
        let ct = r.coupling_time.map(|t| t.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{tau},{ct},{},{}", r.epsilon, r.capped(), a.passed());
    }
    s
}

/// Runs the experiment in memory. Nothing is written.
pub fn execute(cfg: &ExperimentConfig, exec: Execution) -> Result<RunOutcome> {
    cfg.validate()?;
    let mc = MonteCarlo::new(cfg.n_rep, cfg.seed)
        .with_stream(cfg.stream_id)
        .with_level(cfg.ci_level)
        .with_exec(exec);
    let mut out = RunOutcome::default();
    let single = |out: &mut RunOutcome, label: &str, r: ExperimentReport| {
        let ok = accept(cfg, &r);
        out.summary.push(describe(label, &r, ok));
        out.reports.push(r);
        out.passed = ok;
    };
    match &cfg.kind {
        ExperimentKind::WindowMean { t, x } => {
            let r = estimate_window_mean(spec_of(cfg)?, *t, *x, &mc)?;
            single(&mut out, "window mean", r);
        }
        ExperimentKind::Elementary { t } => {
            let r = estimate_elementary_ratio(spec_of(cfg)?, *t, &mc)?;
            single(&mut out, "elementary ratio", r);
        }
        ExperimentKind::VoidProb { t, x } => {
            let r = estimate_void_probability(spec_of(cfg)?, *t, *x, &mc)?;
            single(&mut out, "void probability", r);
        }
        ExperimentKind::RecurrenceCdf { t, grid, span } => {
            let cdf = estimate_forward_recurrence_cdf(spec_of(cfg)?, *t, grid, *span, &mc)?;
            let mut csv = String::from("x,estimate,std_error,ci_low,ci_high,target\n");
            out.passed = true;
            for (x, r) in cdf.grid.iter().zip(&cdf.points) {
                let target = r.target.map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(
                    csv,
                    "{x},{},{},{},{},{target}",
                    r.estimate, r.std_error, r.ci_low, r.ci_high
                );
                out.passed &= accept(cfg, r);
            }
            let err = cdf
                .max_abs_error()
                .map_or("n/a".into(), |e| format!("{e:.6}"));
            out.summary.push(format!(
                "recurrence cdf: {} grid points, max |F_hat - F| = {err}: {}",
                cdf.grid.len(),
                if out.passed { "ok" } else { "outside band" }
            ));
            out.reports = cdf.points;
            out.artifacts.push(("grid.csv".into(), csv));
        }
        ExperimentKind::RenewalFunction { grid } => {
            let table = estimate_renewal_function(spec_of(cfg)?, grid, &mc)?;
            let shift = table.max_isotonic_shift_in_se();
            out.passed =
                shift < cfg.acceptance.se && table.raw.iter().all(|r| r.estimate.is_finite());
            out.summary.push(format!(
                "renewal function: {} grid points, largest isotonic correction {shift:.3} se: {}",
                grid.len(),
                if out.passed { "ok" } else { "too large" }
            ));
            out.artifacts.push(("grid.csv".into(), renewal_csv(&table)));
            out.reports = table.raw;
        }
        ExperimentKind::KeyRenewal { t, g } => {
            let (table, r) = estimate_key_renewal(spec_of(cfg)?, g, *t, &mc)?;
            out.artifacts.push(("grid.csv".into(), renewal_csv(&table)));
            single(&mut out, "key renewal", r);
        }
        ExperimentKind::Coupling {
            epsilon,
            steps_cap,
            k_checks,
            min_finite,
        } => {
            let spec = spec_of(cfg)?;
            let runs = mc.replicate(|rng| {
                let mut a = post_coupling_agreement(spec, *epsilon, *k_checks, *steps_cap, rng)?;
                a.run.v_path = Vec::new();
                Ok(a)
            })?;
            let finite: Vec<f64> = runs
                .iter()
                .map(|a| if a.run.capped() { 0.0 } else { 1.0 })
                .collect();
            let r = mc_report(&mc, &finite);
            let fraction = r.estimate;
            let disagreements = runs
                .iter()
                .filter(|a| !a.run.capped() && !a.passed())
                .count();
            out.passed = fraction >= *min_finite && disagreements == 0;
            out.summary.push(format!(
                "coupling: {:.4} of {} runs finite (need {min_finite}), {disagreements} post-coupling disagreements: {}",
                fraction,
                runs.len(),
                if out.passed { "ok" } else { "failed" }
            ));
            out.reports.push(r);
            out.artifacts
                .push(("coupling.csv".into(), coupling_csv(&runs)));
        }
        ExperimentKind::StationarityShift { shifts, x, alpha } => {
            let spec = spec_of(cfg)?;
            let rep = shift_invariance_check(
                spec,
                shifts,
                *x,
                cfg.n_rep,
                *alpha,
                cfg.seed,
                cfg.stream_id,
                exec,
            )?;
            let target = spec.intensity().ok().map(|l| l * x);
            let z = normal_z(cfg.ci_level);
            out.passed = !rep.reject;
            for (s, (&m, &se)) in shifts
                .iter()
                .zip(rep.mean_counts.iter().zip(&rep.std_errors))
            {
                let r = ExperimentReport {
                    estimate: m,
                    std_error: se,
                    ci_low: m - z * se,
                    ci_high: m + z * se,
                    n_rep: cfg.n_rep,
                    target,
                    seed: cfg.seed,
                    stream_id: cfg.stream_id,
                    truncation_tally: 0,
                };
                let ok = accept(cfg, &r);
                out.passed &= ok;
                out.summary
                    .push(describe(&format!("mean count at shift {s}"), &r, ok));
                out.reports.push(r);
            }
            let rows: Vec<(String, KsReport)> = shifts[1..]
                .iter()
                .zip(&rep.tests)
                .map(|(s, k)| (format!("shift_{s}"), *k))
                .collect();
            for (label, k) in &rows {
                out.summary.push(format!(
                    "ks {label} vs shift {}: distance {:.5}, critical {:.5}: {}",
                    shifts[0],
                    k.distance,
                    k.critical_value,
                    if k.reject { "reject" } else { "ok" }
                ));
            }
            out.artifacts.push(("ks.csv".into(), ks_csv(&rows)));
        }
        ExperimentKind::StationarityPoint {
            k,
            coordinates,
            alpha,
        } => {
            let rep = point_stationary_check(
                spec_of(cfg)?,
                *k,
                *coordinates,
                cfg.n_rep,
                *alpha,
                cfg.seed,
                cfg.stream_id,
                exec,
            )?;
            out.passed = !rep.reject;
            let m = rep.coordinates;
            let rows: Vec<(String, KsReport)> = rep
                .tests
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let label = if i < m {
                        format!("interarrival_{}", i + 1)
                    } else {
                        format!("cluster_size_{}", i - m + 1)
                    };
                    (label, *t)
                })
                .collect();
            out.summary.push(format!(
                "point stationarity from T_{k}: max distance {:.5}, critical {:.5}: {}",
                rep.max_distance,
                rep.critical_value,
                if rep.reject { "reject" } else { "ok" }
            ));
            out.artifacts.push(("ks.csv".into(), ks_csv(&rows)));
        }
        ExperimentKind::FlipTest {
            n,
            stop_after,
            alpha,
            control,
        } => {
            let stop = rademacher_flip_test(
                *n,
                cfg.n_rep,
                FlipRule::NthPlus(*stop_after),
                *alpha,
                cfg.seed,
                cfg.stream_id,
                exec,
            )?;
            let mut rows = vec![("stopping_time".to_string(), stop.ks)];
            out.passed = !stop.ks.reject;
            out.summary.push(format!(
                "flip at stopping time: distance {:.5}, critical {:.5}: {}",
                stop.ks.distance,
                stop.ks.critical_value,
                if stop.ks.reject {
                    "reject (unexpected)"
                } else {
                    "ok"
                }
            ));
            if *control {
                let peek = rademacher_flip_test(
                    *n,
                    cfg.n_rep,
                    FlipRule::PeekArgmax,
                    *alpha,
                    cfg.seed,
                    derive_stream_id(cfg.stream_id, CONTROL_STREAM),
                    exec,
                )?;
                out.passed &= peek.ks.reject;
                out.summary.push(format!(
                    "flip at peek-ahead control: distance {:.5}, critical {:.5}: {}",
                    peek.ks.distance,
                    peek.ks.critical_value,
                    if peek.ks.reject {
                        "reject (expected)"
                    } else {
                        "not rejected (unexpected)"
                    }
                ));
                rows.push(("peek_control".to_string(), peek.ks));
            }
            out.artifacts.push(("ks.csv".into(), ks_csv(&rows)));
        }
    }
    Ok(out)
}

fn mc_report(mc: &MonteCarlo, values: &[f64]) -> ExperimentReport {
    let key = mc.rng.key();
    ExperimentReport::from_samples(values, mc.ci_level).with_stream(key.seed, key.stream_id)
}

/// Reproducibility manifest: package version, outcome and the canonical config.
pub fn manifest(cfg: &ExperimentConfig, outcome: &RunOutcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# reproducibility manifest");
    let _ = writeln!(
        s,
        "version = {} {}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    );
    let _ = writeln!(s, "passed = {}", outcome.passed);
    s.push_str(&cfg.to_text());
    s
}

/// Writes `report.csv`, `report.jsonl`, the experiment's artifacts and `manifest.txt`
/// into `cfg.out`.
pub fn write_outcome(cfg: &ExperimentConfig, outcome: &mut RunOutcome) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    let mut files: Vec<(String, String)> = vec![
        ("report.csv".into(), outcome.report_csv()),
        ("report.jsonl".into(), outcome.report_jsonl()),
    ];
    files.extend(outcome.artifacts.iter().cloned());
    files.push(("manifest.txt".into(), manifest(cfg, outcome)));
    for (name, contents) in files {
        let path = cfg.out.join(name);
        fs::write(&path, contents)?;
        outcome.files.push(path);
    }
    Ok(())
}

/// Validates, runs and writes an experiment. Output is written only after the whole
/// experiment succeeded, so failed runs leave nothing behind.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<RunOutcome> {
    let mut outcome = execute(cfg, exec)?;
    write_outcome(cfg, &mut outcome)?;
    Ok(outcome)
}
