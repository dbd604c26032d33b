//! Closed-form Gibbs posteriors for linear regression under squared loss.
//!
//! With `theta = (xi, b)` (intercept last) and design matrix `D = [X 1]`, the Gibbs
//! posterior over parameters is Gaussian with mean `theta_hat` (OLS) and precision
//! `D'D / (N tau)`. Averaging the squared error `|z'theta - w|^2`, `z = (f, 1)`, over
//! that posterior gives a quadratic energy on inputs whose Gibbs density is again
//! Gaussian, with precision `P = tau A^-1 + xi xi'` where `A = X'X/N - xbar xbar'`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, ProbeError, Result};
use crate::math::standard_normal_vec;
use crate::predictors::fit_linear_regression;
use crate::predictors::linear::design_matrix;
use crate::probing::{quadratic_g, Energy, ProbeFunction};
use crate::types::{Dataset, Temperature};

/// Tolerance for agreement between the direct and Sherman-Morrison routes.
const ROUTE_TOLERANCE: f64 = 1e-8;
const JITTER: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceTag {
    Parameter,
    Data,
}

/// Gaussian stored by mean and precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub precision: Vec<Vec<f64>>,
    pub space: SpaceTag,
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl GaussianPosterior {
    /// Checks symmetry (1e-10) and positive definiteness.
    pub fn new(mean: Vec<f64>, precision: Vec<Vec<f64>>, space: SpaceTag) -> Result<Self> {
        let d = mean.len();
        check_dim(d, precision.len())?;
        for row in &precision {
            check_dim(d, row.len())?;
        }
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (precision[i][j], precision[j][i]);
                if (a - b).abs() > 1e-10 * a.abs().max(b.abs()).max(1.0) {
                    return Err(ProbeError::Precondition("precision is not symmetric".into()));
                }
            }
        }
        if to_matrix(&precision).cholesky().is_none() {
            return Err(ProbeError::Singular("precision is not positive definite".into()));
        }
        Ok(Self { mean, precision, space })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let chol = to_matrix(&self.precision).cholesky().expect("checked at construction");
        to_rows(&chol.inverse())
    }

    pub fn std(&self) -> Vec<f64> {
        let c = self.covariance();
        (0..self.dim()).map(|i| c[i][i].sqrt()).collect()
    }

    /// One exact draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let chol = to_matrix(&self.precision).cholesky().expect("checked at construction");
        // precision = L L'; x = mean + L'^-1 z has covariance (L L')^-1
        let z = DVector::from_vec(standard_normal_vec(rng, self.dim()));
        let v = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("Cholesky factor is nonsingular");
        self.mean.iter().zip(v.iter()).map(|(m, e)| m + e).collect()
    }
}

/// Sample statistics that appear in the closed forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSummary {
    pub n: usize,
    pub xbar: Vec<f64>,
    /// `X'X/N - xbar xbar'`
    pub a: Vec<Vec<f64>>,
    pub xi_hat: Vec<f64>,
    pub b_hat: f64,
    /// `Cov(X, y_hat)`, population normalization.
    pub cov_xy: Vec<f64>,
    pub var_yhat: f64,
    pub mean_yhat: f64,
}

impl LrSummary {
    pub fn fit(data: &Dataset) -> Result<Self> {
        let model = fit_linear_regression(data)?;
        let n = data.len();
        let d = data.dim();
        let nf = n as f64;
        let xs = data.features();
        let yhat: Vec<f64> = xs.iter().map(|x| model.predict(x)).collect();
        let xbar: Vec<f64> = (0..d).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / nf).collect();
        let mean_yhat = yhat.iter().sum::<f64>() / nf;
        let mut a = vec![vec![0.0; d]; d];
        let mut cov_xy = vec![0.0; d];
        for (x, y) in xs.iter().zip(&yhat) {
            for i in 0..d {
                cov_xy[i] += (x[i] - xbar[i]) * (y - mean_yhat) / nf;
                for j in 0..d {
                    a[i][j] += (x[i] - xbar[i]) * (x[j] - xbar[j]) / nf;
                }
            }
        }
        let var_yhat = yhat.iter().map(|y| (y - mean_yhat).powi(2)).sum::<f64>() / nf;
        Ok(Self {
            n,
            xbar,
            a,
            xi_hat: model.weights,
            b_hat: model.intercept,
            cov_xy,
            var_yhat,
            mean_yhat,
        })
    }

    /// `theta_hat = (xi_hat, b_hat)`.
    pub fn theta_hat(&self) -> Vec<f64> {
        let mut t = self.xi_hat.clone();
        t.push(self.b_hat);
        t
    }
}

fn param_precision(data: &Dataset, tau: Temperature) -> DMatrix<f64> {
    let d = design_matrix(data);
    (d.transpose() * &d) / (data.len() as f64 * tau.get())
}

/// Gibbs posterior over `theta = (xi, b)`.
pub fn lr_parameter_posterior(data: &Dataset, tau: Temperature) -> Result<GaussianPosterior> {
    let summary = LrSummary::fit(data)?;
    GaussianPosterior::new(
        summary.theta_hat(),
        to_rows(&param_precision(data, tau)),
        SpaceTag::Parameter,
    )
}

/// Energy over parameters whose Gibbs density at temperature `tau` is
/// [`lr_parameter_posterior`]: `|D theta - y|^2 / (2N)`.
pub fn lr_parameter_energy(data: &Dataset) -> Result<ProbeFunction> {
    let d = design_matrix(data);
    let y = DVector::from_vec(data.labels()?);
    let n = data.len() as f64;
    Ok(ProbeFunction::custom(Arc::new(ParamEnergy {
        gram: d.transpose() * &d / n,
        dty: d.transpose() * &y / n,
        yty: y.dot(&y) / n,
    })))
}

struct ParamEnergy {
    gram: DMatrix<f64>,
    dty: DVector<f64>,
    yty: f64,
}

impl Energy for ParamEnergy {
    fn dim(&self) -> usize {
        self.dty.len()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let t = DVector::from_column_slice(theta);
        0.5 * (t.dot(&(&self.gram * &t)) - 2.0 * t.dot(&self.dty) + self.yty)
    }

    fn gradient(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let t = DVector::from_column_slice(theta);
        Some((&self.gram * &t - &self.dty).iter().copied().collect())
    }
}

fn data_posterior(summary: &LrSummary, w: f64, tau: Temperature, a: DMatrix<f64>) -> Result<GaussianPosterior> {
    let t = tau.get();
    let d = summary.xbar.len();
    let a_inv = a.clone().cholesky().map(|c| c.inverse()).ok_or_else(|| {
        ProbeError::Singular("feature covariance A is singular; retry with jitter (adds 1e-8 I)".into())
    })?;
    let xi = DVector::from_column_slice(&summary.xi_hat);
    let xbar = DVector::from_column_slice(&summary.xbar);
    let precision = &a_inv * t + &xi * xi.transpose();

    let shift = (w - summary.mean_yhat) / (t + summary.var_yhat);
    let mean: Vec<f64> = (0..d).map(|j| summary.xbar[j] + summary.cov_xy[j] * shift).collect();

    // second route: invert P by Sherman-Morrison and solve the stationarity condition
    let a_tau = &a / t;
    let a_xi = &a_tau * &xi;
    let cov = &a_tau - &a_xi * a_xi.transpose() / (1.0 + xi.dot(&a_xi));
    let rhs = &a_inv * &xbar * t + &xi * (w - summary.b_hat);
    let mean_sm = &cov * rhs;
    let scale = 1.0 + mean.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut discrepancy = mean
        .iter()
        .zip(mean_sm.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale;
    let identity = &precision * &cov - DMatrix::<f64>::identity(d, d);
    discrepancy = discrepancy.max(identity.amax());
    if !(discrepancy <= ROUTE_TOLERANCE) {
        return Err(ProbeError::AlgebraMismatch { discrepancy });
    }
    GaussianPosterior::new(mean, to_rows(&precision), SpaceTag::Data)
}

/// Gibbs density over inputs for target output `w`: `N(f_hat, P^-1)` with
/// `f_hat = xbar + Cov(X, y_hat) / (tau + Var(y_hat)) * (w - mean(y_hat))`.
pub fn lr_data_posterior(data: &Dataset, w: f64, tau: Temperature) -> Result<GaussianPosterior> {
    let summary = LrSummary::fit(data)?;
    let a = to_matrix(&summary.a);
    data_posterior(&summary, w, tau, a)
}

/// As [`lr_data_posterior`], with `1e-8 I` added to `A`.
pub fn lr_data_posterior_with_jitter(data: &Dataset, w: f64, tau: Temperature) -> Result<GaussianPosterior> {
    let summary = LrSummary::fit(data)?;
    let d = summary.xbar.len();
    log::warn!("adding {JITTER:e} I to the feature covariance");
    let a = to_matrix(&summary.a) + DMatrix::<f64>::identity(d, d) * JITTER;
    data_posterior(&summary, w, tau, a)
}

/// `G(f) = (tau/2) E_theta |z'theta - w|^2` with `z = (f, 1)`, so that
/// `exp(-G/tau)` is exactly the [`lr_data_posterior`] Gaussian.
pub fn lr_data_energy(data: &Dataset, w: f64, tau: Temperature) -> Result<ProbeFunction> {
    let summary = LrSummary::fit(data)?;
    let cov = param_precision(data, tau)
        .cholesky()
        .ok_or_else(|| ProbeError::Singular("design matrix is rank deficient".into()))?
        .inverse();
    let theta = summary.theta_hat();
    let th = DVector::from_column_slice(&theta);
    let m2 = &th * th.transpose() + cov;
    Ok(quadratic_g(to_rows(&m2), theta, w, tau.get() / 2.0))
}
