#![allow(dead_code)]

use modelprobe::math::{rng_from_seed, standard_normal_vec};
use modelprobe::predictors::{DenseLayer, LinearModel, LogisticModel, Mlp, MlpHead, Predictor};

/// MLP with tanh-friendly random weights, scaled by `1/sqrt(fan_in)`.
pub fn random_mlp(widths: &[usize], head: MlpHead, seed: u64) -> Predictor {
    let mut rng = rng_from_seed(seed);
    let layers = widths
        .windows(2)
        .map(|w| {
            let scale = 1.5 / (w[0] as f64).sqrt();
            DenseLayer {
                inputs: w[0],
                outputs: w[1],
                weights: standard_normal_vec(&mut rng, w[0] * w[1])
                    .into_iter()
                    .map(|v| v * scale)
                    .collect(),
                bias: standard_normal_vec(&mut rng, w[1])
                    .into_iter()
                    .map(|v| 0.3 * v)
                    .collect(),
            }
        })
        .collect();
    Mlp {
        layers,
        head,
        dropout: 0.0,
    }
    .into()
}

pub fn logistic(w: Vec<f64>, b: f64) -> Predictor {
    LogisticModel {
        weights: w,
        intercept: b,
        l2: 0.0,
        grad_norm: 0.0,
    }
    .into()
}

pub fn linear(w: Vec<f64>, b: f64) -> Predictor {
    LinearModel {
        weights: w,
        intercept: b,
    }
    .into()
}

/// Central differences with step `h`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

/// Central differences at `h = 1e-5`, retried at `1e-7` before giving up. A ReLU
/// kink closer to `x` than the step breaks the first estimate while the
/// analytic gradient is still right.
pub fn fd_check(f: impl Fn(&[f64]) -> f64, x: &[f64], exact: &[f64], tol: f64) -> Result<(), Vec<f64>> {
    let fd = fd_gradient(&f, x, 1e-5);
    if close_rel(exact, &fd, tol) || close_rel(exact, &fd_gradient(&f, x, 1e-7), tol) {
        Ok(())
    } else {
        Err(fd)
    }
}

/// Relative agreement with a unit floor on the scale.
pub fn close_rel(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = a.iter().chain(b).fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

pub fn frobenius(m: &[Vec<f64>]) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn sample_covariance(samples: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let mean: Vec<f64> = (0..d).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n).collect();
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

/// `|a - b|_F / |b|_F`
pub fn rel_frobenius(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let diff: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x - y).collect())
        .collect();
    frobenius(&diff) / frobenius(b)
}

/// `0.5 (x - mu)' L (x - mu)`, target `N(mu, tau L^-1)`.
pub struct Quadratic {
    pub mu: Vec<f64>,
    pub lambda: Vec<Vec<f64>>,
}

impl modelprobe::probing::Energy for Quadratic {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let g = self.gradient(x).unwrap();
        0.5 * x
            .iter()
            .zip(&self.mu)
            .zip(&g)
            .map(|((a, m), gi)| (a - m) * gi)
            .sum::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(
            self.lambda
                .iter()
                .map(|row| row.iter().zip(x).zip(&self.mu).map(|((l, a), m)| l * (a - m)).sum())
                .collect(),
        )
    }
}

pub fn quadratic(mu: Vec<f64>, lambda: Vec<Vec<f64>>) -> modelprobe::probing::ProbeFunction {
    modelprobe::probing::ProbeFunction::custom(std::sync::Arc::new(Quadratic { mu, lambda }))
}

pub fn identity(d: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Energy defined by a closure, without gradient.
pub struct Flat<F>(pub usize, pub F);

impl<F: Fn(&[f64]) -> f64 + Send + Sync> modelprobe::probing::Energy for Flat<F> {
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.1)(x)
    }
    fn gradient(&self, _: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Energy with a closure-supplied exact gradient.
pub struct Smooth<F, G>(pub usize, pub F, pub G);

impl<F, G> modelprobe::probing::Energy for Smooth<F, G>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.1)(x)
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some((self.2)(x))
    }
}

/// Total-variation distance between a 1D sample histogram and the density
/// `exp(-g(x)/tau)` integrated by the midpoint rule on the same bins.
pub fn tv_to_gibbs(samples: &[f64], g: impl Fn(f64) -> f64, tau: f64, lo: f64, hi: f64, bins: usize) -> f64 {
    let width = (hi - lo) / bins as f64;
    let sub = 200;
    let mut target: Vec<f64> = (0..bins)
        .map(|b| {
            (0..sub)
                .map(|s| {
                    let x = lo + width * (b as f64 + (s as f64 + 0.5) / sub as f64);
                    (-g(x) / tau).exp()
                })
                .sum::<f64>()
        })
        .collect();
    let z: f64 = target.iter().sum();
    target.iter_mut().for_each(|t| *t /= z);
    let mut hist = vec![0.0; bins];
    for s in samples {
        let b = ((s - lo) / width).floor();
        if b >= 0.0 && (b as usize) < bins {
            hist[b as usize] += 1.0;
        }
    }
    let n = samples.len() as f64;
    0.5 * hist.iter().zip(&target).map(|(h, t)| (h / n - t).abs()).sum::<f64>()
        + 0.5 * (n - hist.iter().sum::<f64>()) / n
}
