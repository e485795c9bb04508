//! `rcs`: run renewal cluster process experiments from flat config files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rcs_core::estimators::{read_reports_csv, read_reports_jsonl, ExperimentReport, ACCEPTANCE_SE};
use rcs_core::exec::with_threads;
use rcs_core::harness::{
    exit_code, run_experiment, ExperimentConfig, ExperimentKind, EXIT_ACCEPTANCE, EXIT_OK,
    EXIT_RUNTIME,
};
use rcs_core::kv::KvFile;
use rcs_core::models::{ProcessSpec, Simulator};
use rcs_core::{Error, Execution, RngStream};

/// `println!` that ignores a closed stdout (e.g. when piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "rcs",
    version,
    about = "Simulate renewal cluster processes and verify their limit theorems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file (`key = value` lines).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override `run.seed`.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Override `run.out`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads. Affects wall time only, never results.
    #[arg(long, value_name = "N", env = "RCS_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one realization of the configured process and write it as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Window start.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        lo: f64,
        /// Window end.
        #[arg(long, default_value_t = 100.0, allow_negative_numbers = true)]
        hi: f64,
        /// Sample the stationary version instead of the delayed one.
        #[arg(long)]
        stationary: bool,
    },
    /// Run the experiment in a config and check it against its target.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Override `run.n_rep`.
        #[arg(long, value_name = "N")]
        reps: Option<usize>,
    },
    /// Run the coupling experiment for the configured process.
    Coupling {
        #[command(flatten)]
        common: Common,
        /// Override `run.n_rep`.
        #[arg(long, value_name = "N")]
        reps: Option<usize>,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = rcs_core::coupling::DEFAULT_STEPS_CAP)]
        steps_cap: u64,
        #[arg(long, default_value_t = 100)]
        k_checks: usize,
    },
    /// Summarize a report CSV or JSONL file (or a run directory).
    Report {
        path: PathBuf,
        /// Acceptance half-width in standard errors.
        #[arg(long, default_value_t = ACCEPTANCE_SE)]
        se: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate {
            common,
            lo,
            hi,
            stationary,
        } => simulate(&common, lo, hi, stationary),
        Command::Verify { common, reps } => {
            load(&common, reps).map_or_else(fail, |cfg| run(&cfg, common.threads))
        }
        Command::Coupling {
            common,
            reps,
            epsilon,
            steps_cap,
            k_checks,
        } => coupling(&common, reps, epsilon, steps_cap, k_checks)
            .map_or_else(fail, |cfg| run(&cfg, common.threads)),
        Command::Report { path, se } => report(&path, se),
    };
    ExitCode::from(code as u8)
}

fn fail(e: Error) -> i32 {
    eprintln!("error: {e}");
    exit_code(&Err(e))
}

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    common: &Common,
    reps: Option<usize>,
) -> Result<(), Error> {
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(n) = reps {
        cfg.n_rep = n;
    }
    cfg.validate()
}

fn load(common: &Common, reps: Option<usize>) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    apply_overrides(&mut cfg, common, reps)?;
    Ok(cfg)
}

fn read_kv(path: &Path) -> Result<KvFile, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config {
        line: 0,
        msg: format!("{}: {e}", path.display()),
    })?;
    KvFile::parse(&text)
}

/// Process keys from any config; experiment, acceptance and run keys are ignored.
fn process_spec(path: &Path) -> Result<(ProcessSpec, KvFile), Error> {
    let mut kv = read_kv(path)?;
    for prefix in ["experiment.", "acceptance."] {
        kv.discard_prefix(prefix);
    }
    let spec = ProcessSpec::from_kv(&mut kv)?;
    Ok((spec, kv))
}

fn coupling(
    common: &Common,
    reps: Option<usize>,
    epsilon: f64,
    steps_cap: u64,
    k_checks: usize,
) -> Result<ExperimentConfig, Error> {
    let (spec, mut kv) = process_spec(&common.config)?;
    let mut cfg = ExperimentConfig {
        spec: Some(spec),
        kind: ExperimentKind::Coupling {
            epsilon,
            steps_cap,
            k_checks,
            min_finite: 0.99,
        },
        acceptance: Default::default(),
        n_rep: kv.take_or("run.n_rep", 1000)?,
        seed: kv.take_or("run.seed", 0)?,
        stream_id: kv.take_or("run.stream_id", 0)?,
        ci_level: kv.take_or("run.ci_level", rcs_core::estimators::DEFAULT_CI_LEVEL)?,
        out: kv.take_or("run.out", PathBuf::from("out"))?,
    };
    kv.finish()?;
    apply_overrides(&mut cfg, common, reps)?;
    Ok(cfg)
}

fn run(cfg: &ExperimentConfig, threads: Option<usize>) -> i32 {
    let result = with_threads(threads, || run_experiment(cfg, Execution::Parallel));
    match &result {
        Ok(outcome) => {
            for line in &outcome.summary {
                say!("{line}");
            }
            for f in &outcome.files {
                say!("wrote {}", f.display());
            }
            say!("{}", if outcome.passed { "PASS" } else { "FAIL" });
        }
        Err(e) => eprintln!("error: {e}"),
    }
    exit_code(&result)
}

fn simulate(common: &Common, lo: f64, hi: f64, stationary: bool) -> i32 {
    let go = || -> Result<PathBuf, Error> {
        let (spec, mut kv) = process_spec(&common.config)?;
        let seed = common.seed.map_or_else(|| kv.take_or("run.seed", 0), Ok)?;
        kv.discard_prefix("run.");
        let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        kv.finish()?;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config {
                line: 0,
                msg: format!("window ({lo}, {hi}] is not a finite interval"),
            });
        }
        let sim = Simulator::new(spec)?;
        let mut rng = RngStream::new(seed, 0);
        let sample = if stationary {
            sim.stationary_cluster_process(lo, hi, &mut rng)?
        } else {
            sim.renewal_cluster_process(lo, hi, &mut rng)?
        };
        fs::create_dir_all(&out)?;
        let path = out.join("pattern.csv");
        sample.pattern.write_csv(fs::File::create(&path)?)?;
        say!(
            "{} points in ({lo}, {hi}], {} cluster points beyond the guard band",
            sample.pattern.len(),
            sample.overflow
        );
        Ok(path)
    };
    match with_threads(common.threads, go) {
        Ok(path) => {
            say!("wrote {}", path.display());
            EXIT_OK
        }
        Err(e) => fail(e),
    }
}

fn read_reports(path: &Path) -> Result<Vec<ExperimentReport>, Error> {
    let file = if path.is_dir() {
        path.join("report.csv")
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file)?;
    if file.extension().is_some_and(|e| e == "jsonl") {
        read_reports_jsonl(text.as_bytes())
    } else {
        read_reports_csv(text.as_bytes())
    }
}

fn report(path: &Path, se: f64) -> i32 {
    let reports = match read_reports(path) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    let mut all = true;
    say!(
        "{:>4} {:>14} {:>12} {:>14} {:>8}  status",
        "row",
        "estimate",
        "std_error",
        "target",
        "n_rep"
    );
    for (i, r) in reports.iter().enumerate() {
        let status = match r.within_se(se) {
            Some(true) => "ok",
            Some(false) => {
                all = false;
                "outside band"
            }
            None => "no target",
        };
        let target = r.target.map_or("-".to_string(), |t| format!("{t:.6}"));
        say!(
            "{i:>4} {:>14.6} {:>12.6} {target:>14} {:>8}  {status}",
            r.estimate,
            r.std_error,
            r.n_rep
        );
    }
    if all {
        EXIT_OK
    } else {
        EXIT_ACCEPTANCE
    }
}
