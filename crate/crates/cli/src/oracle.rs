//! Closed-form linear-regression posterior versus MALA on the same energy.

use modelprobe::analytic_lr::{lr_data_energy, lr_data_posterior, LrSummary};
use modelprobe::datasets::gaussian_regression;
use modelprobe::math::derive_seed;
use modelprobe::sampler::{run_chains, ChainConfig};
use modelprobe::types::Temperature;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub n: usize,
    pub d: usize,
    pub tau: f64,
    /// Target output relative to the mean prediction.
    pub shift: f64,
    pub step_size: f64,
    pub n_steps: usize,
    pub chains: usize,
    pub seed: u64,
    /// Largest allowed |MC mean - exact mean| in standard errors.
    pub mean_tol: f64,
    /// Largest allowed relative Frobenius error of the covariance.
    pub cov_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            d: 4,
            tau: 0.5,
            shift: 2.0,
            step_size: 0.5,
            n_steps: 50_000,
            chains: 4,
            seed: 1,
            mean_tol: 3.0,
            cov_tol: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    /// Worst coordinate, in Monte-Carlo standard errors.
    pub mean_error: f64,
    pub cov_error: f64,
    pub acceptance_rate: f64,
    pub passed: bool,
}

pub fn verify(cfg: &OracleConfig) -> Result<OracleOutcome> {
    let tau = Temperature::new(cfg.tau).map_err(CliError::config)?;
    let data = gaussian_regression(cfg.n, cfg.d, 0.5, derive_seed(cfg.seed, 0));
    let summary = LrSummary::fit(&data).map_err(|e| CliError::training("lr summary", e))?;
    let w = summary.mean_yhat + cfg.shift;
    let exact = lr_data_posterior(&data, w, tau).map_err(|e| CliError::training("closed form", e))?;
    let g = lr_data_energy(&data, w, tau).map_err(|e| CliError::training("energy", e))?;
    let chain =
        ChainConfig::new(cfg.tau, cfg.step_size, cfg.n_steps, derive_seed(cfg.seed, 99)).map_err(CliError::config)?;
    let starts = vec![data.feature_mean(); cfg.chains.max(1)];
    let report = run_chains(&starts, &g, &chain).map_err(|e| CliError::sampling("chains", e))?;
    if report.is_empty() {
        return Err(CliError::sampling("chains", "no samples retained"));
    }
    let mean_error = (0..cfg.d)
        .map(|j| (report.mean[j] - exact.mean[j]).abs() / report.batch_means_se(j, 50))
        .fold(0.0, f64::max);
    let cov_error = rel_frobenius(&covariance(&report.samples), &exact.covariance());
    let passed = mean_error <= cfg.mean_tol && cov_error <= cfg.cov_tol;
    Ok(OracleOutcome {
        mean_error,
        cov_error,
        acceptance_rate: report.acceptance_rate,
        passed,
    })
}

pub(crate) fn covariance(samples: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = samples[0].len();
    let n = samples.len() as f64;
    let (mean, _) = modelprobe::math::column_moments(samples, d);
    let mut c = vec![vec![0.0; d]; d];
    for s in samples {
        for i in 0..d {
            for j in 0..d {
                c[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]) / (n - 1.0);
            }
        }
    }
    c
}

pub(crate) fn rel_frobenius(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            num += (x - y) * (x - y);
            den += y * y;
        }
    }
    (num / den).sqrt()
}
