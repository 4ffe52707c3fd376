//! Command-line front end: `run`, `replay`, `report` and `validate`.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 evaluator
//! failure, 3 numerical breakdown, 4 verification failed (replay mismatch or
//! a failing validation suite).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::engine::{
    read_records, replay, run_with_observer, write_json, RunDirWriter, RunObserver, RunState,
    StepRecord, CONFIG_FILE, MANIFEST_DIR, OBSERVATIONS_FILE,
};
use crate::error::{Error, Result};
use crate::estimator::EstimateResult;
use crate::evaluate::{EvaluatorSpec, ManifestFile};
use crate::ifweights::load_influence_csv;
use crate::regret::compute_trace;
use crate::types::{ratio_of, DomainDataset, EstimatorKind, RunConfig};
use crate::validation::{run_suite, Suite};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_EVALUATOR: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSource {
    pub name: String,
    pub influence_csv: PathBuf,
}

/// On-disk run configuration. Input paths are relative to the file's
/// directory; `output_dir` is relative to the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliConfigFile {
    pub run: RunConfig,
    pub domains: Vec<DomainSource>,
    pub evaluator: EvaluatorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl CliConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: CliConfigFile =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        let parent = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let base = fs::canonicalize(parent).map_err(|e| Error::io(parent, e))?;
        let base = base.as_path();
        for d in &mut cfg.domains {
            d.influence_csv = base.join(&d.influence_csv);
        }
        if let EvaluatorSpec::TableLookup { table_csv } = &mut cfg.evaluator {
            *table_csv = base.join(&*table_csv);
        }
        if let EvaluatorSpec::ExternalProcess(spec) = &mut cfg.evaluator {
            if spec.command.contains('/') && Path::new(&spec.command).is_relative() {
                spec.command = base.join(&spec.command).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    pub fn load_domains(&self) -> Result<Vec<DomainDataset>> {
        if self.domains.len() != self.run.n_domains {
            return Err(Error::ConfigInvalid(format!(
                "run.n_domains is {} but {} domains are listed",
                self.run.n_domains,
                self.domains.len()
            )));
        }
        self.domains
            .iter()
            .map(|d| load_influence_csv(&d.influence_csv, &d.name))
            .collect()
    }

    /// True minimum of the task, when the evaluator kind knows it.
    pub fn known_optimum(&self) -> Option<f64> {
        match &self.evaluator {
            EvaluatorSpec::SyntheticQuadratic(task) => Some(task.base_loss),
            EvaluatorSpec::SyntheticTruncexp { base_loss, .. } => Some(*base_loss),
            _ => None,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "duet",
    version,
    about = "Data-mixture search with Bayesian optimization over mixing ratios"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the optimizer and write a run directory.
    Run(RunArgs),
    /// Re-execute a finished run from its recorded feedback and verify it.
    Replay { run_dir: PathBuf },
    /// Write regret, best-loss and mixing-ratio CSVs for a run directory.
    Report {
        run_dir: PathBuf,
        /// Destination directory (default: `<run_dir>/report`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a statistical validation suite.
    Validate {
        #[arg(value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed_override: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(
        long,
        value_parser = PossibleValuesParser::new(["uniform_random", "if_driven", "remove_harmful"])
            .map(|s| s.parse::<EstimatorKind>().expect("restricted by possible values"))
    )]
    pub estimator: Option<EstimatorKind>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Suppress the per-iteration progress line.
    #[arg(long)]
    pub quiet: bool,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::EvaluatorFailure { .. } => EXIT_EVALUATOR,
        Error::NumericalBreakdown(_) | Error::SingularHessian | Error::InvalidKernel(_) => {
            EXIT_NUMERICAL
        }
        Error::InvalidLog(_) => EXIT_VERIFY,
        _ => EXIT_CONFIG,
    }
}

/// Parse arguments, dispatch, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(&args).map(|_| EXIT_OK),
        Command::Replay { run_dir } => cmd_replay(&run_dir).map(|_| EXIT_OK),
        Command::Report { run_dir, out } => cmd_report(&run_dir, out.as_deref()).map(|_| EXIT_OK),
        Command::Validate { suite, seed } => cmd_validate(suite, seed),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            exit_code(&e)
        }
    }
}

struct CliObserver {
    writer: RunDirWriter,
    quiet: bool,
}

impl RunObserver for CliObserver {
    fn on_step(&mut self, state: &RunState, outcome: &EstimateResult) -> Result<()> {
        self.writer.on_step(state, outcome)?;
        if !self.quiet {
            let rec = state.records().last().expect("non-empty history");
            eprintln!(
                "iter {:>4}  ratio {}  loss {:.6}  best {:.6}",
                rec.observation.iteration,
                rec.observation.ratio,
                rec.observation.loss,
                state.best().loss
            );
        }
        Ok(())
    }
}

/// Execute a run; returns the run directory.
pub fn cmd_run(args: &RunArgs) -> Result<PathBuf> {
    let mut cfg = CliConfigFile::load(&args.config)?;
    if let Some(seed) = args.seed_override {
        cfg.run.seed = seed;
    }
    if let Some(kind) = args.estimator {
        cfg.run.estimator_kind = kind;
    }
    if let Some(k) = args.k {
        cfg.run.sampling_size = k;
    }
    if let Some(t) = args.iterations {
        cfg.run.iterations = t;
    }
    if let Some(beta) = args.beta {
        cfg.run.beta = beta;
    }
    let out = args
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| {
            Error::ConfigInvalid("no output_dir in config and no --output-dir given".into())
        })?;
    cfg.output_dir = Some(out.clone());
    cfg.run.validate()?;
    let domains = cfg.load_domains()?;

    let mut observer = CliObserver {
        writer: RunDirWriter::create(&out, &cfg, &domains)?,
        quiet: args.quiet,
    };
    let base = args.config.parent().unwrap_or(Path::new("."));
    let evaluator = cfg.evaluator.build(&domains, base, &out)?;
    let state = run_with_observer(&cfg.run, &domains, &evaluator, &mut observer)?;
    let result = observer.writer.finish(&state)?;
    if !args.quiet {
        eprintln!(
            "best loss {:.6} at iteration {} with ratio {}",
            result.best_loss, result.best_iteration, result.best_ratio
        );
    }
    Ok(out)
}

fn load_run_dir(run_dir: &Path) -> Result<(CliConfigFile, Vec<DomainDataset>, Vec<StepRecord>)> {
    let cfg_path = run_dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let cfg: CliConfigFile =
        serde_json::from_str(&text).map_err(|e| Error::json(cfg_path.display().to_string(), e))?;
    let domains = cfg.load_domains()?;
    let records = read_records(&run_dir.join(OBSERVATIONS_FILE))?;
    if records.is_empty() {
        return Err(Error::InvalidLog("run has no observations".into()));
    }
    Ok((cfg, domains, records))
}

/// Recompute the run from its configuration with recorded feedback and
/// check that every observation matches.
pub fn cmd_replay(run_dir: &Path) -> Result<()> {
    let (cfg, domains, records) = load_run_dir(run_dir)?;
    let state = replay(&cfg.run, &domains, &records)?;
    println!(
        "replay matches: {} observations, best loss {:.6}",
        state.records().len(),
        state.best().loss
    );
    Ok(())
}

/// Write `regret.csv`, `best_loss.csv` and `mixing_ratio.csv`.
pub fn cmd_report(run_dir: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let (cfg, domains, records) = load_run_dir(run_dir)?;
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run_dir.join("report"));
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let history: Vec<_> = records.iter().map(|r| r.observation.clone()).collect();

    match compute_trace(&history, cfg.known_optimum()) {
        Ok(trace) => {
            let path = out.join("regret.csv");
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            trace.write_csv(&history, file)?;
        }
        Err(Error::UnknownOptimum) => {
            eprintln!("note: the evaluator has no known optimum; regret.csv skipped");
        }
        Err(e) => return Err(e),
    }

    let csv_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Csv { path, source }
    };
    let best_path = out.join("best_loss.csv");
    let mut w = csv::Writer::from_path(&best_path).map_err(csv_err(&best_path))?;
    w.write_record(["iteration", "loss", "best_loss"])
        .map_err(csv_err(&best_path))?;
    let mut best = f64::INFINITY;
    let mut best_rec = &records[0];
    for rec in &records {
        if rec.observation.loss < best {
            best = rec.observation.loss;
            best_rec = rec;
        }
        w.write_record([
            rec.observation.iteration.to_string(),
            rec.observation.loss.to_string(),
            best.to_string(),
        ])
        .map_err(csv_err(&best_path))?;
    }
    w.flush().map_err(|e| Error::io(&best_path, e))?;

    let manifest_path = run_dir.join(MANIFEST_DIR).join(ManifestFile::file_name(
        best_rec.observation.iteration,
        best_rec.best_index,
    ));
    let realized = fs::read_to_string(&manifest_path)
        .ok()
        .and_then(|t| serde_json::from_str::<ManifestFile>(&t).ok())
        .map(|f| ratio_of(&f.manifest));
    let ratio_path = out.join("mixing_ratio.csv");
    let mut w = csv::Writer::from_path(&ratio_path).map_err(csv_err(&ratio_path))?;
    w.write_record(["domain", "ratio", "realized_ratio"])
        .map_err(csv_err(&ratio_path))?;
    for (d, domain) in domains.iter().enumerate() {
        w.write_record([
            domain.name().to_string(),
            best_rec.observation.ratio.weights()[d].to_string(),
            realized
                .as_ref()
                .map_or(String::new(), |r| r.weights()[d].to_string()),
        ])
        .map_err(csv_err(&ratio_path))?;
    }
    w.flush().map_err(|e| Error::io(&ratio_path, e))?;
    write_json(
        &out.join("summary.json"),
        &serde_json::json!({
            "best_loss": best,
            "best_iteration": best_rec.observation.iteration,
            "observations": records.len(),
        }),
    )?;
    println!("report written to {}", out.display());
    Ok(out)
}

pub fn cmd_validate(suite: Suite, seed: u64) -> Result<i32> {
    let report = run_suite(suite, seed)?;
    println!("{report}");
    Ok(if report.passed() {
        EXIT_OK
    } else {
        EXIT_VERIFY
    })
}
