//! Command-line front end for the `cvtomo` toolkit.
//!
//! [`run`] parses the arguments, dispatches to a subcommand and maps the
//! outcome to an exit status:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | usage error or invalid argument |
//! | 3 | numerical failure (decomposition, conditioning, truncation) |
//! | 4 | a pipeline declared failure |
//! | 5 | I/O error |
//!
//! Stochastic subcommands require `--seed`. Trials run on a worker pool
//! whose size comes from `--threads`, else from the `CVTOMO_THREADS`
//! environment variable, else from rayon's default. Each trial owns a
//! ChaCha8 stream selected by its index, so the output does not depend on
//! the worker count.

mod grid;
mod simulate;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use cvtomo::bounds::bound_report_auto;
use cvtomo::fock::{self, FactoredDensity, OracleDistance, OracleOptions};
use cvtomo::gaussian::{GaussianState, StateJson};
use cvtomo::symplectic;
use cvtomo::tomography::synth_t_doped;

pub use grid::{parse_grid, GridSpec};
pub use simulate::{Fixture, Pipeline, SimulationConfig, TrialRow};

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "CVTOMO_THREADS";

/// Exit statuses of [`run`].
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const PIPELINE: i32 = 4;
    pub const IO: i32 = 5;
}

/// Failure of a subcommand, carrying its exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Core(#[from] cvtomo::Error),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("{failed} of {trials} trials failed: {first}")]
    Trials {
        failed: usize,
        trials: usize,
        first: String,
        code: i32,
    },
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Io { .. } | CliError::Json { .. } | CliError::Csv(_) => exit::IO,
            CliError::Core(e) => core_code(e),
            CliError::Trials { code, .. } => *code,
        }
    }
}

/// Exit status for a library error.
pub fn core_code(e: &cvtomo::Error) -> i32 {
    if e.is_pipeline_failure() || matches!(e, cvtomo::Error::BudgetViolated { .. }) {
        exit::PIPELINE
    } else if e.is_numerical() {
        exit::NUMERICAL
    } else {
        exit::USAGE
    }
}

#[derive(Debug, Parser)]
#[command(name = "cvtomo", version, about = "Continuous-variable state tomography toolkit")]
struct Cli {
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Williamson decomposition V = S D Sᵀ of a state file.
    Williamson { state: PathBuf },
    /// Trace-distance bounds between two Gaussian state files.
    Bounds {
        first: PathBuf,
        second: PathBuf,
        /// Also compute the exact distance in the Fock oracle.
        #[arg(long)]
        oracle: bool,
        /// Truncation budget of the oracle distance.
        #[arg(long, default_value_t = 1e-4)]
        oracle_deficit: f64,
    },
    /// Seeded Monte-Carlo runs of a tomography pipeline, one CSV row per trial.
    SimulateTomography(simulate::SimulateArgs),
    /// Sample-complexity formulas evaluated on a parameter grid, as CSV.
    BoundsTable {
        /// `key=values` pairs separated by `;`, for keys n, k, eps, delta,
        /// photons, t and kappa. Values are comma lists, inclusive integer
        /// ranges `a:b`, or `start:stop:count` linear ranges.
        #[arg(long)]
        grid: String,
    },
    /// A random t-doped state and its exact decomposition.
    Synth {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        kappa: usize,
        #[arg(long)]
        seed: u64,
        /// Total mean-energy cap of the state.
        #[arg(long, default_value_t = 4.0)]
        energy_cap: f64,
        /// Where to write the ground-truth decomposition (stdout otherwise
        /// carries both objects).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

/// Runs the command line `argv` (including the program name) and returns the
/// exit status. Errors are reported on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::SUCCESS };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Williamson { state } => williamson(&state, out),
        Command::Bounds {
            first,
            second,
            oracle,
            oracle_deficit,
        } => bounds(&first, &second, oracle, oracle_deficit, out),
        Command::SimulateTomography(args) => {
            let config = args.into_config()?;
            simulate::simulate(&config, out)
        }
        Command::BoundsTable { grid } => {
            let spec = parse_grid(&grid)?;
            with_output(out, |w| grid::write_table(&spec, w))
        }
        Command::Synth {
            n,
            t,
            kappa,
            seed,
            energy_cap,
            truth,
        } => synth(n, t, kappa, seed, energy_cap, truth.as_deref(), out),
    }
}

/// Runs `body` on a buffered writer for `path`, or on stdout.
pub(crate) fn with_output<F>(path: Option<&Path>, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|source| CliError::Io {
                context: format!("cannot create {}", p.display()),
                source,
            })?;
            let mut w = BufWriter::new(file);
            body(&mut w)?;
            w.flush().map_err(|source| CliError::Io {
                context: format!("cannot write {}", p.display()),
                source,
            })
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            body(&mut w)?;
            w.flush().map_err(|source| CliError::Io {
                context: "cannot write stdout".into(),
                source,
            })
        }
    }
}

fn write_json<S: Serialize>(w: &mut dyn Write, value: &S) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *w, value).map_err(|source| CliError::Json {
        context: "cannot serialize output".into(),
        source,
    })?;
    writeln!(w).map_err(|source| CliError::Io {
        context: "cannot write output".into(),
        source,
    })
}

/// Reads a Gaussian state in the `{"n", "mean", "cov"}` schema. States that
/// violate `V + iΩ ≥ 0` are rejected as usage errors.
pub fn read_state(path: &Path) -> Result<GaussianState<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        context: format!("cannot read {}", path.display()),
        source,
    })?;
    let json: StateJson = serde_json::from_str(&text).map_err(|source| CliError::Json {
        context: format!("malformed state file {}", path.display()),
        source,
    })?;
    let state = GaussianState::from_json(&json)?;
    GaussianState::new_valid(state.mean, state.cov, symplectic::DEFAULT_TOL).map_err(|e| match e {
        cvtomo::Error::UncertaintyViolated { .. } => {
            CliError::Usage(format!("{} is not a physical state: {e}", path.display()))
        }
        e => e.into(),
    })
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Serialize)]
struct WilliamsonOutput {
    /// Symplectic matrix `S` of `V = S D Sᵀ`, row major.
    s: Vec<Vec<f64>>,
    /// Symplectic eigenvalues, descending.
    d: Vec<f64>,
}

fn williamson(path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let state = read_state(path)?;
    let dec = symplectic::williamson(&state.cov)?;
    let output = WilliamsonOutput {
        s: rows(&dec.s),
        d: dec.d.iter().copied().collect(),
    };
    with_output(out, |w| write_json(w, &output))
}

#[derive(Serialize)]
struct BoundsOutput {
    report: cvtomo::BoundReportF64,
    /// Largest lower bound.
    lower: f64,
    /// Smallest upper bound, clipped to 1.
    upper: f64,
    oracle: Option<OracleDistance>,
}

fn bounds(
    first: &Path,
    second: &Path,
    oracle: bool,
    deficit: f64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let s1 = read_state(first)?;
    let s2 = read_state(second)?;
    let report = bound_report_auto(&s1, &s2)?;
    let clipped = report.clipped();
    let oracle = if oracle {
        let opts = OracleOptions {
            max_deficit: deficit,
            thermal_tail: OracleOptions::default().thermal_tail.min(0.1 * deficit),
            ..OracleOptions::default()
        };
        Some(fock::gaussian_trace_distance(&s1, &s2, &opts)?)
    } else {
        None
    };
    let output = BoundsOutput {
        lower: report.lower(),
        upper: clipped.upper(),
        report,
        oracle,
    };
    with_output(out, |w| write_json(w, &output))
}

/// A Fock-space state on disk: `ρ = F F†` with the columns of `F` given as
/// `[re, im]` pairs in graded basis order.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct FockStateJson {
    pub n: usize,
    pub cutoff: usize,
    pub deficit: f64,
    /// Occupation numbers of each basis vector.
    pub basis: Vec<Vec<usize>>,
    pub factor: Vec<Vec<[f64; 2]>>,
}

impl FockStateJson {
    pub fn from_factor(f: &FactoredDensity) -> Self {
        let space = &f.space;
        Self {
            n: space.n(),
            cutoff: space.cutoff(),
            deficit: f.deficit,
            basis: (0..space.dim()).map(|i| space.state(i).to_vec()).collect(),
            factor: f
                .factor
                .column_iter()
                .map(|c| c.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }
}

#[derive(Serialize)]
struct SynthOutput<'a> {
    state: &'a FockStateJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<&'a cvtomo::tomography::CompressedEstimate>,
}

fn synth(
    n: usize,
    t: usize,
    kappa: usize,
    seed: u64,
    energy_cap: f64,
    truth_path: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (state, truth) = synth_t_doped(n, t, kappa, &mut rng, energy_cap)?;
    let state = FockStateJson::from_factor(&state);
    match truth_path {
        Some(p) => {
            with_output(Some(p), |w| write_json(w, &truth))?;
            with_output(out, |w| write_json(w, &SynthOutput { state: &state, truth: None }))
        }
        None => with_output(out, |w| {
            write_json(w, &SynthOutput { state: &state, truth: Some(&truth) })
        }),
    }
}
