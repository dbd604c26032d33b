use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};
use crate::math::{axpy, dot, sq_dist};
use crate::types::{Dataset, ParamSegment, ParamVector, Task};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Kernel {
    /// `exp(-gamma |u - v|^2)`
    Rbf { gamma: f64 },
    /// `(u . v + coef)^degree`
    Poly { degree: u32, coef: f64 },
}

impl Kernel {
    pub fn cubic() -> Self {
        Kernel::Poly { degree: 3, coef: 1.0 }
    }

    pub fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf { gamma } => (-gamma * sq_dist(u, v)).exp(),
            Kernel::Poly { degree, coef } => (dot(u, v) + coef).powi(degree as i32),
        }
    }

    /// Gradient of `k(sv, x)` with respect to `x`, accumulated as `out += scale * grad`.
    fn accumulate_grad(&self, sv: &[f64], x: &[f64], scale: f64, out: &mut [f64]) {
        match *self {
            Kernel::Rbf { gamma } => {
                let k = (-gamma * sq_dist(sv, x)).exp();
                let c = -2.0 * gamma * k * scale;
                for j in 0..x.len() {
                    out[j] += c * (x[j] - sv[j]);
                }
            }
            Kernel::Poly { degree, coef } => {
                if degree == 0 {
                    return;
                }
                let c = scale * degree as f64 * (dot(sv, x) + coef).powi(degree as i32 - 1);
                axpy(out, c, sv);
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Rbf { gamma } if gamma > 0.0 => Ok(()),
            Kernel::Poly { degree, .. } if degree >= 1 => Ok(()),
            _ => Err(ProbeError::Spec(format!("invalid kernel {self:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub kernel: Kernel,
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-3
}

fn default_max_iter() -> usize {
    1_000_000
}

impl SvmConfig {
    pub fn new(kernel: Kernel, c: f64) -> Self {
        Self {
            kernel,
            c,
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

/// Binary kernel SVM: `f(x) = sum_i coef_i k(sv_i, x) + bias`, with `coef_i = alpha_i y_i`.
/// Class 1 corresponds to `y = +1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSvm {
    pub kernel: Kernel,
    pub n_features: usize,
    pub support_vectors: Vec<Vec<f64>>,
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub max_kkt_violation: f64,
}

impl KernelSvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, a)| a * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }

    pub fn decision_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for (sv, a) in self.support_vectors.iter().zip(&self.dual_coef) {
            self.kernel.accumulate_grad(sv, x, *a, &mut g);
        }
        g
    }

    pub(crate) fn params(&self) -> Result<ParamVector> {
        let mut theta = self.dual_coef.clone();
        theta.push(self.bias);
        ParamVector::new(
            theta,
            vec![
                ParamSegment {
                    name: "dual_coef".into(),
                    len: self.dual_coef.len(),
                },
                ParamSegment {
                    name: "bias".into(),
                    len: 1,
                },
            ],
        )
    }

    pub(crate) fn with_flat(&self, theta: &[f64]) -> KernelSvm {
        let n = self.dual_coef.len();
        KernelSvm {
            dual_coef: theta[..n].to_vec(),
            bias: theta[n],
            ..self.clone()
        }
    }
}

/// Sequential minimal optimization with second-order working-set selection.
pub fn fit_kernel_svm(data: &Dataset, cfg: &SvmConfig) -> Result<KernelSvm> {
    if data.task() != (Task::Classification { n_classes: 2 }) {
        return Err(ProbeError::Arity("kernel SVM needs binary labels".into()));
    }
    if !(cfg.c > 0.0) {
        return Err(ProbeError::Precondition(format!("C must be positive, got {}", cfg.c)));
    }
    cfg.kernel.validate()?;
    let xs = data.features();
    let y: Vec<f64> = data
        .class_labels()?
        .into_iter()
        .map(|l| if l == 1 { 1.0 } else { -1.0 })
        .collect();
    let n = xs.len();
    let c = cfg.c;
    let kmat: Vec<f64> = (0..n * n).map(|t| cfg.kernel.eval(&xs[t / n], &xs[t % n])).collect();
    let k = |i: usize, j: usize| kmat[i * n + j];
    const TAU: f64 = 1e-12;

    let mut alpha = vec![0.0; n];
    // gradient of the dual objective 1/2 a'Qa - e'a
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut violation;
    loop {
        // i: maximal violating index in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            if up && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i_sel = Some(t);
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        if let Some(i) = i_sel {
            for t in 0..n {
                let low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
                if !low {
                    continue;
                }
                let v = y[t] * grad[t];
                gmax2 = gmax2.max(v);
                let diff = gmax + v;
                if diff > 0.0 {
                    let quad = k(i, i) + k(t, t) - 2.0 * k(i, t);
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        violation = (gmax + gmax2).max(0.0);
        let (i, j) = match (i_sel, j_sel) {
            (Some(i), Some(j)) if violation >= cfg.tol => (i, j),
            _ => break,
        };
        if iterations >= cfg.max_iter {
            return Err(ProbeError::Convergence {
                max_violation: violation,
                iterations,
            });
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * k(i, j);
        if y[i] != y[j] {
            let quad = (k(i, i) + k(j, j) + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (k(i, i) + k(j, j) - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k(i, t) * di + y[j] * k(j, t) * dj);
        }
    }

    // offset from free vectors, else the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };

    let mut support_vectors = Vec::new();
    let mut dual_coef = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.push(xs[t].clone());
            dual_coef.push(alpha[t] * y[t]);
        }
    }
    Ok(KernelSvm {
        kernel: cfg.kernel,
        n_features: data.dim(),
        support_vectors,
        dual_coef,
        bias: -rho,
        c,
        max_kkt_violation: violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets;
    use crate::math;
    use crate::predictors::Predictor;
    use rand::Rng;

    fn accuracy(p: &Predictor, data: &Dataset) -> f64 {
        data.points()
            .iter()
            .filter(|pt| p.predict(&pt.features).unwrap() == pt.label.unwrap())
            .count() as f64
            / data.len() as f64
    }

    #[test]
    fn rbf_separates_concentric_circles() {
        let data = datasets::concentric_circles(100, 1.0, 2.0, 0.1, 7).unwrap();
        let m = fit_kernel_svm(&data, &SvmConfig::new(Kernel::Rbf { gamma: 1.0 }, 1.0)).unwrap();
        assert!(m.max_kkt_violation < 1e-3);
        for a in &m.dual_coef {
            assert!(a.abs() <= 1.0 + 1e-12);
        }
        let acc = accuracy(&m.into(), &data);
        assert!(acc >= 0.98, "accuracy {acc}");
    }

    #[test]
    fn cubic_kernel_separates_concentric_circles() {
        let data = datasets::concentric_circles(100, 1.0, 2.0, 0.1, 7).unwrap();
        let m = fit_kernel_svm(&data, &SvmConfig::new(Kernel::cubic(), 1.0)).unwrap();
        assert!(accuracy(&m.into(), &data) >= 0.98);
    }

    #[test]
    fn nonpositive_c_rejected() {
        let data = datasets::concentric_circles(10, 1.0, 2.0, 0.1, 7).unwrap();
        let err = fit_kernel_svm(&data, &SvmConfig::new(Kernel::Rbf { gamma: 1.0 }, 0.0));
        assert!(matches!(err, Err(ProbeError::Precondition(_))));
    }

    #[test]
    fn iteration_cap_reports_violation() {
        let data = datasets::concentric_circles(50, 1.0, 2.0, 0.1, 7).unwrap();
        let mut cfg = SvmConfig::new(Kernel::Rbf { gamma: 1.0 }, 10.0);
        cfg.max_iter = 2;
        match fit_kernel_svm(&data, &cfg) {
            Err(ProbeError::Convergence { max_violation, .. }) => assert!(max_violation > 1e-3),
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn decision_gradient_matches_finite_differences() {
        let data = datasets::concentric_circles(60, 1.0, 2.0, 0.1, 7).unwrap();
        let mut rng = math::rng_from_seed(11);
        for kernel in [Kernel::Rbf { gamma: 1.0 }, Kernel::cubic()] {
            let m = fit_kernel_svm(&data, &SvmConfig::new(kernel, 1.0)).unwrap();
            for _ in 0..10 {
                let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.5..2.5)).collect();
                let g = m.decision_gradient(&x);
                for j in 0..2 {
                    let h = 1e-5;
                    let mut xp = x.clone();
                    xp[j] += h;
                    let mut xm = x.clone();
                    xm[j] -= h;
                    let fd = (m.decision(&xp) - m.decision(&xm)) / (2.0 * h);
                    assert!(
                        (fd - g[j]).abs() <= 1e-5 * fd.abs().max(1.0),
                        "{kernel:?}: {fd} vs {}",
                        g[j]
                    );
                }
            }
        }
    }
}
