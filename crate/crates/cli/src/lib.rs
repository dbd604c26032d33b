//! Driver behind the `modelprobe` binary.
//!
//! A run is described by one TOML [`spec::ProbeSpec`]. `probe` trains the models,
//! samples the probe distribution and writes four files: the samples, a JSON
//! report, long-format plot data and a manifest that reruns the exact same job.

pub mod error;
pub mod oracle;
pub mod output;
pub mod pipeline;
pub mod spec;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use modelprobe::math::column_moments;
use modelprobe::predictors::Predictor;
use modelprobe::sampler::ProbeReport;

pub use error::{CliError, Result};
use output::OutputGuard;
use pipeline::RunOutcome;
use spec::{DataSource, ModelSpec, ProbeSpec};

/// Environment variable holding the log filter, e.g. `info` or `modelprobe=debug`.
pub const LOG_ENV: &str = "MODELPROBE_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "modelprobe",
    version,
    about = "Probe trained models by sampling their input space"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset as CSV.
    GenData {
        /// circles | credit | wine | housing | xor | gaussian-regression
        #[arg(long)]
        generator: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the spec's models and write them with a manifest that loads them back.
    Train {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a spec end to end.
    Probe {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute report statistics from a samples CSV.
    Report {
        #[arg(long)]
        samples: PathBuf,
        /// Adds scenario statistics using the spec's data and models.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check MALA against the closed-form linear-regression posterior.
    VerifyOracle {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        d: usize,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, default_value_t = 50_000)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData {
            generator,
            n,
            seed,
            out,
        } => gen_data(&generator, n, seed, &out),
        Command::Train { spec, out } => train(&spec, &out).map(|_| ()),
        Command::Probe { spec, out } => {
            let outcome = probe(&spec, &out)?;
            println!(
                "{} samples, acceptance {:.3}",
                outcome.report.len(),
                outcome.report.acceptance_rate
            );
            for (k, v) in &outcome.report.stats {
                println!("{k} = {v}");
            }
            Ok(())
        }
        Command::Report { samples, spec, out } => {
            let report = report(&samples, spec.as_deref())?;
            let json = report.to_json().map_err(CliError::output)?;
            match out {
                Some(p) => {
                    let mut g = OutputGuard::new(p.parent().unwrap_or(Path::new(".")))?;
                    g.write(p, json.as_bytes())?;
                    g.commit();
                }
                None => println!("{json}"),
            }
            Ok(())
        }
        Command::VerifyOracle { n, d, tau, steps, seed } => {
            let cfg = oracle::OracleConfig {
                n,
                d,
                tau,
                n_steps: steps,
                seed,
                ..Default::default()
            };
            let o = oracle::verify(&cfg)?;
            println!(
                "mean-error: {:.3} standard errors (tolerance {})",
                o.mean_error, cfg.mean_tol
            );
            println!(
                "covariance-error: {:.4} relative Frobenius (tolerance {})",
                o.cov_error, cfg.cov_tol
            );
            println!("acceptance: {:.3}", o.acceptance_rate);
            if o.passed {
                Ok(())
            } else {
                Err(CliError::Oracle(format!(
                    "mean-error {:.3}, covariance-error {:.4}",
                    o.mean_error, o.cov_error
                )))
            }
        }
    }
}

pub fn gen_data(generator: &str, n: Option<usize>, seed: u64, out: &Path) -> Result<()> {
    let seed = Some(seed);
    let source = match generator {
        "circles" => DataSource::Circles {
            n_per_class: n.unwrap_or(200),
            r_inner: 1.0,
            r_outer: 2.0,
            noise_sd: 0.1,
            seed,
        },
        "credit" => DataSource::Credit {
            n: n.unwrap_or(2000),
            seed,
        },
        "wine" => DataSource::Wine {
            n_per_class: n.unwrap_or(60),
            seed,
        },
        "housing" => DataSource::Housing {
            n: n.unwrap_or(500),
            seed,
        },
        "xor" => DataSource::Xor {
            n: n.unwrap_or(400),
            noise_sd: 0.1,
            seed,
        },
        "gaussian-regression" => DataSource::GaussianRegression {
            n: n.unwrap_or(2000),
            d: 4,
            noise_sd: 0.5,
            seed,
        },
        other => return Err(CliError::Config(format!("unknown generator `{other}`"))),
    };
    let data = pipeline::load_data(&source)?;
    let mut bytes = Vec::new();
    modelprobe::datasets::write_csv(&data, &mut bytes).map_err(CliError::output)?;
    let mut g = OutputGuard::new(out.parent().unwrap_or(Path::new(".")))?;
    g.write(out.to_path_buf(), &bytes)?;
    g.commit();
    Ok(())
}

/// Trains every model section, writes `model-<i>.json` and a manifest that loads them.
pub fn train(spec_path: &Path, out: &Path) -> Result<ProbeSpec> {
    let mut spec = ProbeSpec::load(spec_path)?;
    spec.validate()?;
    spec.resolve();
    let prepared = pipeline::prepare(&spec)?;
    let models = pipeline::train_models(&spec, &prepared)?;
    let mut guard = OutputGuard::new(out)?;
    let dir = std::fs::canonicalize(out).map_err(CliError::output)?;
    for (i, m) in models.iter().enumerate() {
        let path = dir.join(format!("model-{i}.json"));
        guard.write(path.clone(), m.to_json().map_err(CliError::output)?.as_bytes())?;
        spec.models[i] = ModelSpec::Saved { path };
    }
    guard.write(dir.join(&spec.output.manifest), spec.to_toml_string()?.as_bytes())?;
    guard.commit();
    Ok(spec)
}

/// Full run from a spec file; outputs land in `out`.
pub fn probe(spec_path: &Path, out: &Path) -> Result<RunOutcome> {
    let mut spec = ProbeSpec::load(spec_path)?;
    run_spec(&mut spec, out)
}

pub fn run_spec(spec: &mut ProbeSpec, out: &Path) -> Result<RunOutcome> {
    let outcome = pipeline::execute(spec, None)?;
    output::write_run(&outcome, out)?;
    Ok(outcome)
}

/// Report over a samples CSV. An empty file gives an empty report.
pub fn report(samples_path: &Path, spec_path: Option<&Path>) -> Result<ProbeReport> {
    let text = std::fs::read_to_string(samples_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", samples_path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let dim = rdr.headers().map_err(CliError::config)?.len();
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(CliError::config)?;
        let row = rec
            .iter()
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| CliError::Config(format!("bad sample value: {e}")))?;
        samples.push(row);
    }
    let (mean, std) = column_moments(&samples, dim);
    let mut report = ProbeReport {
        samples: Vec::new(),
        energies: Vec::new(),
        accepted: 0,
        proposed: 0,
        acceptance_rate: 0.0,
        mean,
        std,
        n_chains: 0,
        stats: Default::default(),
    };
    report.stats.insert("n_samples".into(), samples.len() as f64);
    if let Some(p) = spec_path {
        let mut spec = ProbeSpec::load(p)?;
        spec.validate()?;
        spec.resolve();
        let prepared = pipeline::prepare(&spec)?;
        if dim != prepared.data.dim() && !samples.is_empty() {
            return Err(CliError::Config(format!(
                "samples have {dim} columns, data has {}",
                prepared.data.dim()
            )));
        }
        let models: Vec<Predictor> = pipeline::train_models(&spec, &prepared)?;
        let model_units: Vec<Vec<f64>> = samples.iter().map(|x| prepared.to_model(x)).collect();
        report
            .stats
            .extend(pipeline::scenario_stats(&spec, &prepared, &models, &model_units)?);
    }
    report.samples = samples;
    Ok(report)
}
