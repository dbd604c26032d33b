use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};
use crate::math::{dot, log_sum_exp, sigmoid};
use crate::types::{Dataset, Task};

/// Binary logistic regression; class 1 has logit `weights · x + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub l2: f64,
    /// Norm of the regularized objective's gradient at the returned parameters.
    pub grad_norm: f64,
}

impl LogisticModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.intercept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub l2: f64,
    pub steps: usize,
    pub lr: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            steps: 2000,
            lr: 0.5,
        }
    }
}

/// Mean negative log-likelihood plus `l2/2 * |w|^2`, and its gradient.
fn objective(xs: &[Vec<f64>], ys: &[f64], w: &[f64], b: f64, l2: f64) -> (f64, Vec<f64>, f64) {
    let n = xs.len() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = dot(w, x) + b;
        loss += log_sum_exp(&[0.0, z]) - y * z;
        let r = sigmoid(z) - y;
        crate::math::axpy(&mut gw, r / n, x);
        gb += r / n;
    }
    loss /= n;
    loss += 0.5 * l2 * dot(w, w);
    crate::math::axpy(&mut gw, l2, w);
    (loss, gw, gb)
}

/// Full-batch proximal gradient descent; the L2 term is applied in closed form so
/// arbitrarily strong regularization stays stable.
pub fn fit_logistic_regression(data: &Dataset, cfg: &LogisticConfig) -> Result<LogisticModel> {
    if data.task() != (Task::Classification { n_classes: 2 }) {
        return Err(ProbeError::Arity("logistic regression needs binary labels".into()));
    }
    if cfg.l2 < 0.0 || cfg.lr <= 0.0 {
        return Err(ProbeError::Spec("l2 must be >= 0 and lr > 0".into()));
    }
    let xs = data.features();
    let ys = data.labels()?;
    let n = xs.len() as f64;
    let d = data.dim();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for step in 0..cfg.steps {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (x, &y) in xs.iter().zip(&ys) {
            let r = sigmoid(dot(&w, x) + b) - y;
            crate::math::axpy(&mut gw, r / n, x);
            gb += r / n;
        }
        let shrink = 1.0 / (1.0 + cfg.lr * cfg.l2);
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj = (*wj - cfg.lr * g) * shrink;
        }
        b -= cfg.lr * gb;
        if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(ProbeError::Diverged { step, loss: f64::NAN });
        }
    }
    let (_, gw, gb) = objective(&xs, &ys, &w, b, cfg.l2);
    let grad_norm = (dot(&gw, &gw) + gb * gb).sqrt();
    Ok(LogisticModel {
        weights: w,
        intercept: b,
        l2: cfg.l2,
        grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets;
    use crate::predictors::Predictor;
    use crate::types::DataPoint;

    #[test]
    fn separable_blobs_are_learned() {
        let data = datasets::gaussian_blobs(&[vec![-2.0, -2.0], vec![2.0, 2.0]], 100, 0.6, 3);
        let m = fit_logistic_regression(
            &data,
            &LogisticConfig {
                l2: 0.1,
                steps: 500,
                lr: 0.5,
            },
        )
        .unwrap();
        let p: Predictor = m.into();
        let acc = data
            .points()
            .iter()
            .filter(|pt| p.predict(&pt.features).unwrap() == pt.label.unwrap())
            .count() as f64
            / data.len() as f64;
        assert!(acc >= 0.99, "accuracy {acc}");
    }

    #[test]
    fn objective_decreases_from_start() {
        let data = datasets::gaussian_blobs(&[vec![-1.0, 0.0], vec![1.0, 0.5]], 80, 1.0, 9);
        let xs = data.features();
        let ys = data.labels().unwrap();
        let mut last = objective(&xs, &ys, &[0.0, 0.0], 0.0, 0.01).0;
        for steps in [10, 50, 200, 1000] {
            let m = fit_logistic_regression(
                &data,
                &LogisticConfig {
                    l2: 0.01,
                    steps,
                    lr: 0.5,
                },
            )
            .unwrap();
            let now = objective(&xs, &ys, &m.weights, m.intercept, 0.01).0;
            assert!(now <= last + 1e-12);
            last = now;
        }
        let m = fit_logistic_regression(
            &data,
            &LogisticConfig {
                l2: 0.01,
                steps: 5000,
                lr: 0.5,
            },
        )
        .unwrap();
        assert!(m.grad_norm < 1e-6, "grad norm {}", m.grad_norm);
    }

    #[test]
    fn constant_labels_give_intercept_model() {
        let pts = (0..20)
            .map(|i| DataPoint::new(vec![i as f64 / 10.0, (i % 3) as f64], Some(1.0)))
            .collect();
        let data = Dataset::new(pts, vec!["a".into(), "b".into()], Task::Classification { n_classes: 2 }).unwrap();
        let p: Predictor = fit_logistic_regression(&data, &LogisticConfig::default())
            .unwrap()
            .into();
        for pt in data.points() {
            assert!(p.predict_proba(&pt.features).unwrap()[1] > 0.5);
        }
    }

    #[test]
    fn huge_l2_crushes_coefficients() {
        let data = datasets::gaussian_blobs(&[vec![-2.0, -2.0], vec![2.0, 2.0]], 50, 0.6, 1);
        let m = fit_logistic_regression(
            &data,
            &LogisticConfig {
                l2: 1e6,
                steps: 500,
                lr: 0.5,
            },
        )
        .unwrap();
        assert!(dot(&m.weights, &m.weights).sqrt() < 1e-2);
    }

    #[test]
    fn non_binary_labels_rejected() {
        let data = datasets::gaussian_blobs(&[vec![0.0, 0.0], vec![3.0, 0.0], vec![0.0, 3.0]], 10, 0.5, 1);
        assert!(matches!(
            fit_logistic_regression(&data, &LogisticConfig::default()),
            Err(ProbeError::Arity(_))
        ));
    }
}
