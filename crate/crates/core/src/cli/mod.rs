//! Experiment orchestration: configuration, dispatch, output and exit codes.

pub mod experiments;
pub mod goldens;
pub mod table;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
pub use table::{Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Experiment {
    /// p-convexity certificates for the function f and the body K
    Pconvex,
    /// Isotropy error and shell mass of the radial profiles (quadrature)
    Isotropy,
    /// Kolmogorov distance of projections of B_p^n to the Gaussian
    CltRate,
    /// Projections of the radial counterexample against the Gaussian and G·W
    Counterexample,
    /// Moment lemmas on B_p^n with Gaussian controls
    Lemmas,
    /// Concentration of the Euclidean norm of Gaussian vectors
    Chi,
    /// Rejection-sampled tiny body against the matching radial sampler
    ProjectionOracle,
    /// Every experiment above, in order
    All,
}

impl Experiment {
    pub const EVERY: [Experiment; 7] = [
        Experiment::Pconvex,
        Experiment::Isotropy,
        Experiment::CltRate,
        Experiment::Counterexample,
        Experiment::Lemmas,
        Experiment::Chi,
        Experiment::ProjectionOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Pconvex => "pconvex",
            Experiment::Isotropy => "isotropy",
            Experiment::CltRate => "clt-rate",
            Experiment::Counterexample => "counterexample",
            Experiment::Lemmas => "lemmas",
            Experiment::Chi => "chi",
            Experiment::ProjectionOracle => "projection-oracle",
            Experiment::All => "all",
        }
    }

    pub fn expand(self) -> Vec<Experiment> {
        match self {
            Experiment::All => Experiment::EVERY.to_vec(),
            e => vec![e],
        }
    }

    fn default_sweep(self) -> Vec<usize> {
        match self {
            Experiment::Pconvex => vec![8],
            Experiment::Isotropy => vec![25, 50, 100, 200, 400, 800],
            Experiment::CltRate | Experiment::Lemmas => vec![16, 32, 64, 128, 256],
            Experiment::Counterexample => vec![64],
            Experiment::Chi => vec![400],
            Experiment::ProjectionOracle => vec![2],
            Experiment::All => vec![],
        }
    }

    fn default_samples(self) -> usize {
        match self {
            Experiment::Chi | Experiment::ProjectionOracle => 100_000,
            Experiment::Isotropy => 0,
            _ => 1_000_000,
        }
    }

    fn is_distance(self) -> bool {
        matches!(self, Experiment::CltRate | Experiment::Counterexample | Experiment::ProjectionOracle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "nonconvex-clt", version, about = "Central limit experiments for l_p balls and a 1/2-convex counterexample")]
pub struct Args {
    #[command(subcommand)]
    pub experiment: Experiment,

    /// Dimension; repeat to give a sweep
    #[arg(long = "n", global = true)]
    pub n: Vec<usize>,

    /// Exponent of the l_p ball and of the p-convexity checks
    #[arg(long, global = true, default_value_t = 0.5)]
    pub p: f64,

    /// Override of the radius parameter a
    #[arg(long, global = true)]
    pub a: Option<f64>,

    /// Override of the cap N
    #[arg(long, global = true)]
    pub cap: Option<f64>,

    /// Samples (or trials) per point
    #[arg(long, global = true)]
    pub samples: Option<usize>,

    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Worker threads; defaults to the available parallelism
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Relative tolerance of every quadrature
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol: f64,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Output file; a directory when running `all`
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Write the first shard of raw samples to this CSV file
    #[arg(long = "dump-samples", global = true)]
    pub dump_samples: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Nonempty, strictly ascending.
    pub n_sweep: Vec<usize>,
    pub p: f64,
    pub a_override: Option<f64>,
    pub cap_override: Option<f64>,
    pub m: usize,
    pub seed: u64,
    pub threads: usize,
    pub rel_tol: f64,
    pub out_format: Format,
    pub out_path: Option<PathBuf>,
    pub dump_samples: Option<PathBuf>,
}

/// Smallest sample size accepted by the distance experiments.
pub const MIN_DISTANCE_SAMPLES: usize = 1000;

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            n_sweep: experiment.default_sweep(),
            p: 0.5,
            a_override: None,
            cap_override: None,
            m: experiment.default_samples(),
            seed: 42,
            threads: default_threads(),
            rel_tol: 1e-8,
            out_format: Format::Csv,
            out_path: None,
            dump_samples: None,
        }
    }

    pub fn from_args(experiment: Experiment, args: &Args) -> Result<Self> {
        let mut cfg = ExperimentConfig::new(experiment);
        if !args.n.is_empty() {
            cfg.n_sweep = args.n.clone();
        }
        cfg.p = args.p;
        cfg.a_override = args.a;
        cfg.cap_override = args.cap;
        if let Some(m) = args.samples {
            cfg.m = m;
        }
        cfg.seed = args.seed;
        if let Some(t) = args.threads {
            cfg.threads = t;
        }
        cfg.rel_tol = args.tol;
        cfg.out_format = args.format;
        cfg.out_path = args.out.clone();
        cfg.dump_samples = args.dump_samples.clone();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_sweep(mut self, n: &[usize]) -> Self {
        self.n_sweep = n.to_vec();
        self
    }

    pub fn with_samples(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn validate(&mut self) -> Result<()> {
        self.n_sweep.sort_unstable();
        self.n_sweep.dedup();
        if self.n_sweep.is_empty() || self.n_sweep[0] == 0 {
            return Err(Error::InvalidParameter("the n sweep must be nonempty and positive".into()));
        }
        if self.experiment.is_distance() && self.m < MIN_DISTANCE_SAMPLES {
            return Err(Error::InvalidParameter(format!(
                "{} needs at least {MIN_DISTANCE_SAMPLES} samples",
                self.experiment.name()
            )));
        }
        if self.threads == 0 {
            return Err(Error::InvalidParameter("threads must be positive".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-3) {
            return Err(Error::InvalidParameter(format!("tolerance {} must lie in (0, 1e-3]", self.rel_tol)));
        }
        Ok(())
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// One claim evaluated by an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn table(&self, experiment: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.experiment == experiment)
    }

    fn absorb(&mut self, other: Outcome) {
        self.tables.extend(other.tables);
        self.checks.extend(other.checks);
    }
}

/// Runs one experiment on the current thread pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.experiment {
        Experiment::Pconvex => experiments::run_pconvex_suite(cfg),
        Experiment::Isotropy => experiments::run_isotropy(cfg),
        Experiment::CltRate => experiments::run_clt_rate(cfg),
        Experiment::Counterexample => experiments::run_counterexample(cfg),
        Experiment::Lemmas => experiments::run_lemma_checks(cfg),
        Experiment::Chi => experiments::run_chi(cfg),
        Experiment::ProjectionOracle => experiments::run_projection_oracle(cfg),
        Experiment::All => {
            let mut all = Outcome::default();
            for e in Experiment::EVERY {
                let mut sub = cfg.clone();
                sub.experiment = e;
                sub.n_sweep = e.default_sweep();
                sub.m = e.default_samples();
                all.absorb(run_experiment(&sub)?);
            }
            Ok(all)
        }
    }
}

/// Runs the experiments named by `args` inside a pool of the requested size.
pub fn execute(args: &Args) -> Result<Outcome> {
    let configs = args
        .experiment
        .expand()
        .into_iter()
        .map(|e| ExperimentConfig::from_args(e, args))
        .collect::<Result<Vec<_>>>()?;
    let threads = configs[0].threads;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    pool.install(|| {
        let mut all = Outcome::default();
        for cfg in &configs {
            all.absorb(run_experiment(cfg)?);
        }
        Ok(all)
    })
}

/// Writes the tables to `out` (a directory when there are several) or stdout.
pub fn write_outcome(outcome: &Outcome, format: Format, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) if outcome.tables.len() > 1 => {
            fs::create_dir_all(path)?;
            for t in &outcome.tables {
                let file = path.join(format!("{}.{}", t.experiment, format.extension()));
                write_tables(std::slice::from_ref(t), format, fs::File::create(file)?)?;
            }
            Ok(())
        }
        Some(path) => write_tables(&outcome.tables, format, fs::File::create(path)?),
        None => write_tables(&outcome.tables, format, std::io::stdout().lock()),
    }
}

fn write_tables<W: Write>(tables: &[Table], format: Format, mut out: W) -> Result<()> {
    match format {
        Format::Csv => {
            for (i, t) in tables.iter().enumerate() {
                if i > 0 {
                    writeln!(out)?;
                }
                t.write_csv(&mut out)?;
            }
        }
        Format::Json => {
            let records: Vec<_> = tables.iter().flat_map(Table::json_records).collect();
            serde_json::to_writer_pretty(&mut out, &records).map_err(|e| Error::Io(e.to_string()))?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// 0 = every check passed, 1 = a check failed, 2 = usage or configuration
/// error, 3 = quadrature non-convergence.
pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(o) if o.passed() => 0,
        Ok(_) => 1,
        Err(Error::NonConvergence { .. }) => 3,
        Err(Error::InvalidParameter(_)) | Err(Error::Io(_)) => 2,
        Err(_) => 1,
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with(args: Args) -> i32 {
    let result = execute(&args);
    match &result {
        Ok(outcome) => {
            if let Err(e) = write_outcome(outcome, args.format, args.out.as_deref()) {
                eprintln!("error: {e}");
                return 2;
            }
            for c in &outcome.checks {
                let verdict = if c.passed { "PASS" } else { "FAIL" };
                eprintln!("{verdict} {}: {}", c.name, c.detail);
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    exit_code(&result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_is_sorted_and_validated() {
        let args = Args::parse_from(["x", "chi", "--n", "50", "--n", "10", "--n", "50"]);
        let cfg = ExperimentConfig::from_args(Experiment::Chi, &args).unwrap();
        assert_eq!(cfg.n_sweep, vec![10, 50]);
        assert_eq!(cfg.m, 100_000);
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn small_distance_runs_are_rejected() {
        let args = Args::parse_from(["x", "clt-rate", "--samples", "999"]);
        let r = execute(&args);
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
        assert_eq!(exit_code(&r), 2);
    }

    #[test]
    fn exit_codes() {
        let nc = Err(Error::NonConvergence { lo: 0.0, hi: 1.0, evaluations: 1, rel_error: 1.0 });
        assert_eq!(exit_code(&nc), 3);
        let mut failing = Outcome::default();
        failing.checks.push(Check::new("x", false, ""));
        assert_eq!(exit_code(&Ok(failing)), 1);
        assert_eq!(exit_code(&Ok(Outcome::default())), 0);
    }
}
