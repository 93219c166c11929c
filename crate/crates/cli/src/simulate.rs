//! The `simulate-tomography` subcommand: independent seeded trials of one
//! pipeline, run on a worker pool and written as one CSV row per trial.

use std::io::Write;
use std::path::Path;

use clap::{Args, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use cvtomo::fock::{self, FockSpace, OracleOptions};
use cvtomo::gaussian::GaussianState;
use cvtomo::measurement::StateSource;
use cvtomo::tomography::{
    gaussian_tomography, moment_constrained_tomography, synth_t_doped,
    t_compressible_tomography, CompressedOptions, GaussianTomographyOptions,
    MomentTomographyOptions, TomographyReport,
};

use crate::{core_code, exit, with_output, CliError, THREADS_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Pipeline {
    /// Gaussian tomography from homodyne moments.
    Gaussian,
    /// Projection onto an energy subspace followed by finite-dimensional
    /// tomography.
    Moment,
    /// t-compressible tomography of a fresh doped state per trial.
    Tcomp,
}

/// Single-mode source states of the `gaussian` and `moment` pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fixture {
    Vacuum,
    /// Thermal state with one mean photon.
    Thermal,
    /// Squeezed vacuum with `V = diag(2, 1/2)`.
    Squeezed,
    /// Coherent state with mean `(1, 1/2)`.
    Coherent,
}

impl Fixture {
    pub fn state(self) -> GaussianState<f64> {
        match self {
            Fixture::Vacuum => GaussianState::vacuum(1),
            Fixture::Thermal => GaussianState::thermal(&[1.0]).expect("valid fixture"),
            Fixture::Squeezed => GaussianState::new(
                DVector::zeros(2),
                DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5])),
            )
            .expect("valid fixture"),
            Fixture::Coherent => GaussianState::coherent(DVector::from_vec(vec![1.0, 0.5]))
                .expect("valid fixture"),
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pipeline: Pipeline,
    #[arg(long)]
    trials: usize,
    /// Copies of the state available to each trial.
    #[arg(long)]
    copies: usize,
    #[arg(long)]
    seed: u64,
    /// Target trace distance; a trial succeeds when its oracle distance is
    /// at most this value.
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Energy budget per mode (`E` for the Gaussian pipeline, `E₂` for the
    /// t-compressible one).
    #[arg(long, default_value_t = 2.0)]
    energy: f64,
    #[arg(long, value_enum, default_value_t = Fixture::Thermal)]
    fixture: Fixture,
    /// Photon-number cutoff of the Fock source in the moment pipeline.
    #[arg(long, default_value_t = 30)]
    fock_cutoff: usize,
    /// Largest projection cutoff of the moment pipeline.
    #[arg(long, default_value_t = 10)]
    max_cutoff: usize,
    /// Modes, head modes and gate locality of the doped states.
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    t: usize,
    #[arg(long, default_value_t = 2)]
    kappa: usize,
    /// Total mean-energy cap of the doped states.
    #[arg(long, default_value_t = 4.0)]
    energy_cap: f64,
    /// Worker threads; defaults to the `CVTOMO_THREADS` environment
    /// variable.
    #[arg(long)]
    threads: Option<usize>,
}

/// Fully resolved parameters of a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub pipeline: Pipeline,
    pub trials: usize,
    pub copies: usize,
    pub seed: u64,
    pub eps: f64,
    pub delta: f64,
    pub energy: f64,
    pub fixture: Fixture,
    pub fock_cutoff: usize,
    pub max_cutoff: usize,
    pub n: usize,
    pub t: usize,
    pub kappa: usize,
    pub energy_cap: f64,
    pub threads: Option<usize>,
}

impl SimulateArgs {
    pub(crate) fn into_config(self) -> Result<SimulationConfig, CliError> {
        let threads = match self.threads {
            Some(t) => Some(t),
            None => match std::env::var(THREADS_ENV) {
                Ok(v) => Some(v.trim().parse().map_err(|_| {
                    CliError::Usage(format!("{THREADS_ENV}={v:?} is not a thread count"))
                })?),
                Err(_) => None,
            },
        };
        if threads == Some(0) {
            return Err(CliError::Usage("thread count must be positive".into()));
        }
        Ok(SimulationConfig {
            pipeline: self.pipeline,
            trials: self.trials,
            copies: self.copies,
            seed: self.seed,
            eps: self.eps,
            delta: self.delta,
            energy: self.energy,
            fixture: self.fixture,
            fock_cutoff: self.fock_cutoff,
            max_cutoff: self.max_cutoff,
            n: self.n,
            t: self.t,
            kappa: self.kappa,
            energy_cap: self.energy_cap,
            threads,
        })
    }
}

/// The random stream of trial `index`: ChaCha8 keyed by the run seed, with
/// the trial index as stream number.
pub fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    /// `ok`, or the name of the error that ended the trial.
    pub status: String,
    pub report: Option<TomographyReport>,
    /// Exit status the error maps to, for failed trials.
    pub code: Option<i32>,
}

/// CSV header; each name states the quantity its column holds.
pub const TRIAL_HEADER: [&str; 15] = [
    "trial",
    "status",
    "trace_distance_estimate_vs_truth",
    "success_distance_le_eps",
    "copies_used",
    "moment_epsilon",
    "moment_copies",
    "regularizer_lambda",
    "min_eig_V_plus_iOmega",
    "projection_cutoff_m",
    "retained_fraction",
    "postselection_rate",
    "head_energy",
    "inner_copies",
    "oracle_truncation_deficit",
];

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl TrialRow {
    fn record(&self, eps: f64) -> Vec<String> {
        let (r, d) = match &self.report {
            Some(r) => (Some(r), Some(&r.diagnostics)),
            None => (None, None),
        };
        let distance = r.and_then(|r| r.achieved_distance);
        vec![
            self.trial.to_string(),
            self.status.clone(),
            opt(distance),
            distance.is_some_and(|x| x <= eps).to_string(),
            opt(r.map(|r| r.copies_used)),
            opt(d.and_then(|d| d.moment_epsilon)),
            opt(d.and_then(|d| d.moment_copies)),
            opt(d.and_then(|d| d.regularizer)),
            opt(d.and_then(|d| d.min_uncertainty_eigenvalue)),
            opt(d.and_then(|d| d.cutoff)),
            opt(d.and_then(|d| d.retained_fraction)),
            opt(d.and_then(|d| d.postselection_rate)),
            opt(d.and_then(|d| d.head_energy)),
            opt(d.and_then(|d| d.inner_copies)),
            opt(d.and_then(|d| d.oracle_deficit)),
        ]
    }
}

fn error_name(e: &cvtomo::Error) -> String {
    let debug = format!("{e:?}");
    let name = debug.split(['(', ' ', '{']).next().unwrap_or("error");
    let mut out = String::new();
    for (i, ch) in name.chars().enumerate() {
        if ch.is_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.extend(ch.to_lowercase());
        } else {
            out.push(ch);
        }
    }
    out
}

fn run_trial(config: &SimulationConfig, source: &Source, index: usize) -> TrialRow {
    let mut rng = trial_rng(config.seed, index);
    match trial(config, source, &mut rng) {
        Ok(report) => TrialRow {
            trial: index,
            status: "ok".into(),
            report: Some(report),
            code: None,
        },
        Err(e) => TrialRow {
            trial: index,
            status: error_name(&e),
            report: None,
            code: Some(core_code(&e)),
        },
    }
}

/// Source prepared once per run and cloned into each trial.
enum Source {
    Gaussian(GaussianState<f64>),
    Fock(cvtomo::fock::FockDensity),
    Doped,
}

fn prepare(config: &SimulationConfig) -> Result<Source, CliError> {
    Ok(match config.pipeline {
        Pipeline::Gaussian => Source::Gaussian(config.fixture.state()),
        Pipeline::Moment => {
            let space = FockSpace::new(1, config.fock_cutoff)?;
            let opts = OracleOptions {
                max_deficit: 1e-3,
                ..OracleOptions::default()
            };
            Source::Fock(fock::gaussian_density_matrix(&space, &config.fixture.state(), &opts)?)
        }
        Pipeline::Tcomp => Source::Doped,
    })
}

fn trial(
    config: &SimulationConfig,
    source: &Source,
    rng: &mut ChaCha8Rng,
) -> cvtomo::Result<TomographyReport> {
    match source {
        Source::Gaussian(g) => {
            let mut src = StateSource::gaussian(g.clone())?;
            let opts = GaussianTomographyOptions::budgeted(config.copies);
            gaussian_tomography(&mut src, config.eps, config.delta, config.energy, &opts, rng)
        }
        Source::Fock(rho) => {
            let photons = config.fixture.state().mean_photon_number();
            let mut src = StateSource::fock(rho.clone());
            let mut opts = MomentTomographyOptions::new(config.copies, false);
            opts.max_cutoff = Some(config.max_cutoff);
            moment_constrained_tomography(&mut src, 1, config.eps, config.delta, photons, &opts, rng)
        }
        Source::Doped => {
            let (state, _) = synth_t_doped(config.n, config.t, config.kappa, rng, config.energy_cap)?;
            let mut src = StateSource::fock_factored(state);
            let opts = CompressedOptions::new(config.copies);
            t_compressible_tomography(&mut src, config.t, config.eps, config.delta, config.energy, &opts, rng)
        }
    }
}

/// Runs every trial of `config`, in parallel, returning rows in trial order.
pub fn run_trials(config: &SimulationConfig) -> Result<Vec<TrialRow>, CliError> {
    let source = prepare(config)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|i| run_trial(config, &source, i))
            .collect()
    }))
}

/// Writes the trial table for `rows`.
pub fn write_rows(rows: &[TrialRow], eps: f64, w: &mut dyn Write) -> Result<(), CliError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(TRIAL_HEADER)?;
    for row in rows {
        csv.write_record(row.record(eps))?;
    }
    csv.flush().map_err(|source| CliError::Io {
        context: "cannot write trial table".into(),
        source,
    })
}

/// Runs the trials, writes the table, and reports failed trials through the
/// exit status (the most severe failure wins).
pub(crate) fn simulate(config: &SimulationConfig, out: Option<&Path>) -> Result<(), CliError> {
    let rows = run_trials(config)?;
    with_output(out, |w| write_rows(&rows, config.eps, w))?;
    let failed: Vec<&TrialRow> = rows.iter().filter(|r| r.code.is_some()).collect();
    if let Some(first) = failed.first() {
        let code = failed
            .iter()
            .filter_map(|r| r.code)
            .max_by_key(|&c| match c {
                exit::NUMERICAL => 2,
                exit::PIPELINE => 1,
                _ => 0,
            })
            .unwrap_or(exit::PIPELINE);
        return Err(CliError::Trials {
            failed: failed.len(),
            trials: rows.len(),
            first: format!("trial {}: {}", first.trial, first.status),
            code,
        });
    }
    Ok(())
}
