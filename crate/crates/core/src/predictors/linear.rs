use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};
use crate::math::dot;
use crate::types::{Dataset, ParamSegment, ParamVector};

/// `y = weights · x + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.intercept
    }
}

pub(crate) fn affine_params(weights: &[f64], intercept: f64) -> Result<ParamVector> {
    let mut theta = weights.to_vec();
    theta.push(intercept);
    ParamVector::new(
        theta,
        vec![
            ParamSegment {
                name: "weights".into(),
                len: weights.len(),
            },
            ParamSegment {
                name: "intercept".into(),
                len: 1,
            },
        ],
    )
}

/// Design matrix `[X 1]` with the constant column last.
pub(crate) fn design_matrix(data: &Dataset) -> DMatrix<f64> {
    let d = data.dim();
    DMatrix::from_fn(data.len(), d + 1, |i, j| {
        if j < d {
            data.points()[i].features[j]
        } else {
            1.0
        }
    })
}

/// Ordinary least squares with an intercept.
pub fn fit_linear_regression(data: &Dataset) -> Result<LinearModel> {
    let d = data.dim();
    let y = DVector::from_vec(data.labels()?);
    if data.len() < d + 1 {
        return Err(ProbeError::Singular(format!(
            "{} points cannot determine {} coefficients",
            data.len(),
            d + 1
        )));
    }
    let design = design_matrix(data);
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * 1e-12) {
        return Err(ProbeError::Singular(format!(
            "design matrix is rank deficient (condition {:.3e})",
            smax / smin
        )));
    }
    let theta = svd.solve(&y, 0.0).map_err(|e| ProbeError::Singular(e.to_string()))?;
    Ok(LinearModel {
        weights: theta.as_slice()[..d].to_vec(),
        intercept: theta[d],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;
    use crate::types::{DataPoint, Task};
    use rand::Rng;

    fn ds(xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Dataset {
        let d = xs[0].len();
        let pts = xs
            .into_iter()
            .zip(ys)
            .map(|(x, y)| DataPoint::new(x, Some(y)))
            .collect();
        Dataset::new(pts, (0..d).map(|i| format!("f{i}")).collect(), Task::Regression).unwrap()
    }

    /// Gaussian elimination with partial pivoting on the normal equations.
    fn normal_equations_oracle(xs: &[Vec<f64>], ys: &[f64]) -> Vec<f64> {
        let p = xs[0].len() + 1;
        let row = |x: &Vec<f64>| {
            let mut r = x.clone();
            r.push(1.0);
            r
        };
        let mut a = vec![vec![0.0; p + 1]; p];
        for (x, y) in xs.iter().zip(ys) {
            let r = row(x);
            for i in 0..p {
                for j in 0..p {
                    a[i][j] += r[i] * r[j];
                }
                a[i][p] += r[i] * y;
            }
        }
        for c in 0..p {
            let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            for r in 0..p {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..=p {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        (0..p).map(|i| a[i][p] / a[i][i]).collect()
    }

    #[test]
    fn exact_line_is_interpolated() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.3 - 1.0]).collect();
        let ys = xs.iter().map(|x| 2.0 * x[0] + 1.0).collect();
        let m = fit_linear_regression(&ds(xs, ys)).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-10);
        assert!((m.intercept - 1.0).abs() < 1e-10);
    }

    #[test]
    fn too_few_points_is_singular() {
        let xs = vec![vec![1.0, 2.0], vec![3.0, 5.0]];
        let err = fit_linear_regression(&ds(xs, vec![1.0, 2.0])).unwrap_err();
        assert!(matches!(err, ProbeError::Singular(_)));
    }

    #[test]
    fn collinear_features_are_singular() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let ys = (0..10).map(|i| i as f64).collect();
        assert!(matches!(
            fit_linear_regression(&ds(xs, ys)),
            Err(ProbeError::Singular(_))
        ));
    }

    #[test]
    fn matches_normal_equations_and_residuals_are_orthogonal() {
        let mut rng = math::rng_from_seed(42);
        let xs: Vec<Vec<f64>> = (0..200).map(|_| math::standard_normal_vec(&mut rng, 5)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| x[0] - 2.0 * x[3] + 0.5 + rng.random::<f64>())
            .collect();
        let data = ds(xs.clone(), ys.clone());
        let m = fit_linear_regression(&data).unwrap();
        let oracle = normal_equations_oracle(&xs, &ys);
        for j in 0..5 {
            assert!((m.weights[j] - oracle[j]).abs() < 1e-9);
        }
        assert!((m.intercept - oracle[5]).abs() < 1e-9);

        let design = design_matrix(&data);
        let resid: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - m.predict(x)).collect();
        for c in 0..6 {
            let s: f64 = (0..200).map(|i| design[(i, c)] * resid[i]).sum();
            assert!(s.abs() < 1e-8, "column {c}: {s}");
        }
    }
}
