use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};
use crate::math::{self, log_sum_exp, softmax};
use crate::types::{Dataset, ParamSegment, ParamVector, Task};

/// Layer widths after the input, ending with the output width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    /// Train-time only.
    #[serde(default)]
    pub dropout: f64,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, dropout: f64) -> Result<Self> {
        let s = Self { layer_widths, dropout };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(ProbeError::Spec(
                "an MLP needs at least one hidden layer before the output".into(),
            ));
        }
        if self.layer_widths.contains(&0) {
            return Err(ProbeError::Spec("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ProbeError::Spec("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Exponential decay: `initial * decay_rate^(step / decay_steps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay_rate: f64,
    pub decay_steps: usize,
    #[serde(default)]
    pub staircase: bool,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            initial: lr,
            decay_rate: 1.0,
            decay_steps: 1,
            staircase: false,
        }
    }

    pub fn at(&self, step: usize) -> f64 {
        let mut p = step as f64 / self.decay_steps.max(1) as f64;
        if self.staircase {
            p = p.floor();
        }
        self.initial * self.decay_rate.powf(p)
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial: 0.1,
            decay_rate: 0.9,
            decay_steps: 100,
            staircase: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        Self {
            steps: 10_000,
            batch_size: 128,
            schedule: LrSchedule::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum MlpHead {
    Classification { n_classes: usize },
    Regression,
}

/// Dense layer, `weights` stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                math::dot(row, x) + self.bias[o]
            })
            .collect()
    }

    /// `W^T delta`
    fn back(&self, delta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.inputs];
        for (o, d) in delta.iter().enumerate() {
            if *d != 0.0 {
                math::axpy(&mut g, *d, &self.weights[o * self.inputs..(o + 1) * self.inputs]);
            }
        }
        g
    }
}

/// ReLU network; dropout is never applied at inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    pub head: MlpHead,
    pub dropout: f64,
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|a| *a = a.max(0.0));
}

impl Mlp {
    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    /// Output scores (logits or the regression value).
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.apply(&h);
            if l < last {
                relu(&mut h);
            }
        }
        h
    }

    /// Outputs and the full output-by-input Jacobian by reverse-mode passes.
    pub fn forward_with_jacobian(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let a = layer.apply(&h);
            h = a.clone();
            if l < last {
                relu(&mut h);
            }
            pre.push(a);
        }
        let out = h;
        let jac = (0..out.len())
            .map(|k| {
                let mut delta = vec![0.0; out.len()];
                delta[k] = 1.0;
                for l in (0..self.layers.len()).rev() {
                    let mut g = self.layers[l].back(&delta);
                    if l > 0 {
                        for (gi, a) in g.iter_mut().zip(&pre[l - 1]) {
                            if *a <= 0.0 {
                                *gi = 0.0;
                            }
                        }
                    }
                    delta = g;
                }
                delta
            })
            .collect();
        (out, jac)
    }

    fn layout(&self) -> Vec<ParamSegment> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    ParamSegment {
                        name: format!("layer{i}.weight"),
                        len: l.weights.len(),
                    },
                    ParamSegment {
                        name: format!("layer{i}.bias"),
                        len: l.bias.len(),
                    },
                ]
            })
            .collect()
    }

    fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub(crate) fn params(&self) -> Result<ParamVector> {
        ParamVector::new(self.flat(), self.layout())
    }

    pub(crate) fn with_flat(&self, theta: &[f64]) -> Mlp {
        let mut out = self.clone();
        let mut at = 0;
        for l in &mut out.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&theta[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&theta[at..at + nb]);
            at += nb;
        }
        out
    }

    /// Loss on one example and accumulation of its parameter gradient into `grad`.
    fn backprop_example<R: Rng>(&self, x: &[f64], y: f64, grad: &mut [f64], rng: &mut R) -> f64 {
        let last = self.layers.len() - 1;
        let keep = 1.0 - self.dropout;
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut masks: Vec<Vec<f64>> = Vec::with_capacity(last);
        let mut h = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            inputs.push(h.clone());
            let mut a = layer.apply(&h);
            if l < last {
                // inverted dropout folded into the activation derivative
                let mask: Vec<f64> = a
                    .iter()
                    .map(|&v| {
                        if v <= 0.0 || (self.dropout > 0.0 && rng.random::<f64>() >= keep) {
                            0.0
                        } else {
                            1.0 / keep
                        }
                    })
                    .collect();
                a.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                masks.push(mask);
            }
            h = a;
        }
        let (loss, mut delta) = match self.head {
            MlpHead::Classification { .. } => {
                let k = y as usize;
                let loss = log_sum_exp(&h) - h[k];
                let mut d = softmax(&h);
                d[k] -= 1.0;
                (loss, d)
            }
            MlpHead::Regression => {
                let r = h[0] - y;
                (0.5 * r * r, vec![r])
            }
        };
        // parameter offsets per layer
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for l in &self.layers {
            offsets.push(at);
            at += l.weights.len() + l.bias.len();
        }
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let off = offsets[l];
            let input = &inputs[l];
            for (o, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    math::axpy(
                        &mut grad[off + o * layer.inputs..off + (o + 1) * layer.inputs],
                        *d,
                        input,
                    );
                    grad[off + layer.weights.len() + o] += d;
                }
            }
            if l > 0 {
                let mut g = layer.back(&delta);
                g.iter_mut().zip(&masks[l - 1]).for_each(|(v, m)| *v *= m);
                delta = g;
            }
        }
        loss
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            theta[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Mini-batch Adam on cross-entropy (classification) or half squared error (regression).
pub fn fit_mlp(data: &Dataset, spec: &MlpSpec, cfg: &MlpTrainConfig) -> Result<Mlp> {
    spec.validate()?;
    let out_width = *spec.layer_widths.last().unwrap();
    let head = match data.task() {
        Task::Classification { n_classes } => {
            if out_width != n_classes {
                return Err(ProbeError::Arity(format!(
                    "output width {out_width} does not match {n_classes} classes"
                )));
            }
            MlpHead::Classification { n_classes }
        }
        Task::Regression => {
            if out_width != 1 {
                return Err(ProbeError::Arity("regression MLP needs output width 1".into()));
            }
            MlpHead::Regression
        }
    };
    if data.is_empty() || cfg.batch_size == 0 {
        return Err(ProbeError::Spec("empty dataset or zero batch size".into()));
    }
    let mut rng = math::rng_from_seed(cfg.seed);
    let mut fan_in = data.dim();
    let mut layers = Vec::new();
    for &w in &spec.layer_widths {
        let scale = (2.0 / fan_in as f64).sqrt();
        layers.push(DenseLayer {
            inputs: fan_in,
            outputs: w,
            weights: (0..w * fan_in)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            bias: vec![0.0; w],
        });
        fan_in = w;
    }
    let mut model = Mlp {
        layers,
        head,
        dropout: spec.dropout,
    };
    let xs = data.features();
    let ys = data.labels()?;
    let mut theta = model.flat();
    let mut adam = Adam::new(theta.len());
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut cursor = order.len();
    let batch = cfg.batch_size.min(xs.len());
    let mut grad = vec![0.0; theta.len()];
    for step in 0..cfg.steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for _ in 0..batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let i = order[cursor];
            cursor += 1;
            loss += model.backprop_example(&xs[i], ys[i], &mut grad, &mut rng);
        }
        loss /= batch as f64;
        if !loss.is_finite() {
            return Err(ProbeError::Diverged { step, loss });
        }
        grad.iter_mut().for_each(|g| *g /= batch as f64);
        adam.step(&mut theta, &grad, cfg.schedule.at(step));
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(ProbeError::Diverged { step, loss });
        }
        model = model.with_flat(&theta);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets;
    use crate::predictors::{GradientTarget, Predictor};

    fn xor_model() -> (Dataset, Predictor) {
        let data = datasets::xor(400, 0.1, 3);
        let m = fit_mlp(
            &data,
            &MlpSpec::new(vec![8, 8, 2], 0.0).unwrap(),
            &MlpTrainConfig {
                steps: 5000,
                batch_size: 64,
                schedule: LrSchedule {
                    initial: 0.01,
                    decay_rate: 0.5,
                    decay_steps: 2000,
                    staircase: false,
                },
                seed: 1,
            },
        )
        .unwrap();
        (data, m.into())
    }

    #[test]
    fn learns_xor() {
        let (data, p) = xor_model();
        let correct = data
            .points()
            .iter()
            .filter(|pt| p.predict(&pt.features).unwrap() == pt.label.unwrap())
            .count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn zero_hidden_layers_rejected() {
        assert!(matches!(MlpSpec::new(vec![2], 0.0), Err(ProbeError::Spec(_))));
    }

    #[test]
    fn logit_gradient_matches_finite_differences() {
        let (_, p) = xor_model();
        let mut rng = math::rng_from_seed(5);
        for _ in 0..10 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.5..1.5)).collect();
            let g = p.input_gradient(&x, GradientTarget::Logit(0)).unwrap();
            for j in 0..2 {
                let h = 1e-5;
                let mut xp = x.clone();
                xp[j] += h;
                let mut xm = x.clone();
                xm[j] -= h;
                let fd = (p.logits(&xp).unwrap()[0] - p.logits(&xm).unwrap()[0]) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-4 * fd.abs().max(1.0), "{fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let data = datasets::xor(100, 0.1, 3);
        let err = fit_mlp(
            &data,
            &MlpSpec::new(vec![8, 2], 0.0).unwrap(),
            &MlpTrainConfig {
                steps: 200,
                batch_size: 16,
                schedule: LrSchedule::constant(1e300),
                seed: 0,
            },
        )
        .unwrap_err();
        assert!(matches!(err, ProbeError::Diverged { .. }), "{err:?}");
    }

    #[test]
    fn dropout_is_inference_free() {
        let data = datasets::xor(100, 0.1, 3);
        let m = fit_mlp(
            &data,
            &MlpSpec::new(vec![16, 2], 0.2).unwrap(),
            &MlpTrainConfig {
                steps: 50,
                batch_size: 16,
                schedule: LrSchedule::constant(0.01),
                seed: 0,
            },
        )
        .unwrap();
        let x = [0.3, -0.7];
        assert_eq!(m.forward(&x), m.forward(&x));
    }

    #[test]
    fn schedule_decays() {
        let s = LrSchedule::default();
        assert_eq!(s.at(0), 0.1);
        assert!((s.at(100) - 0.09).abs() < 1e-15);
        let st = LrSchedule { staircase: true, ..s };
        assert_eq!(st.at(99), 0.1);
    }
}
