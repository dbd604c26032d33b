//! Probing energies `G(x)`: weighted sums of terms built from trained predictors.
//!
//! Every term reports its value and, when its primary predictor is differentiable,
//! an exact input gradient. Terms over tree models evaluate everywhere but carry no
//! gradient; chains over them use smoothed gradients.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, ProbeError, Result};
use crate::latent::LatentMap;
use crate::math::{axpy, log_sum_exp, softmax};
use crate::predictors::Predictor;
use crate::types::ParamVector;

/// Smallest probability used inside logarithms of tree outputs.
const PROBA_FLOOR: f64 = 1e-12;

/// User-supplied energy, for custom terms.
pub trait Energy: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// `None` when the energy has no usable gradient.
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>>;
}

/// Whether a probe can supply exact gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    Exact,
    Smoothed,
}

/// Soft locality penalty `lambda * sum_i w_i |x_i - a_i|^r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regularizer {
    anchor: Vec<f64>,
    lambda: f64,
    r: f64,
    weights: Option<Vec<f64>>,
}

impl Regularizer {
    pub fn new(anchor: Vec<f64>, lambda: f64, r: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !(r >= 1.0) {
            return Err(ProbeError::Precondition(format!(
                "regularizer needs lambda >= 0 and r >= 1, got lambda = {lambda}, r = {r}"
            )));
        }
        Ok(Self {
            anchor,
            lambda,
            r,
            weights: None,
        })
    }

    /// Per-feature weights; a weight of zero frees that feature.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        check_dim(self.anchor.len(), weights.len())?;
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(ProbeError::Precondition("feature weights must be nonnegative".into()));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.lambda
            * x.iter()
                .zip(&self.anchor)
                .enumerate()
                .map(|(i, (v, a))| self.weight(i) * (v - a).abs().powf(self.r))
                .sum::<f64>()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.anchor)
            .enumerate()
            .map(|(i, (v, a))| {
                let d = v - a;
                if d == 0.0 {
                    0.0
                } else {
                    self.lambda * self.weight(i) * self.r * d.abs().powf(self.r - 1.0) * d.signum()
                }
            })
            .collect()
    }
}

/// Gaussian perturbations of a trained parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEnsemble {
    pub center: ParamVector,
    pub sigma_theta: f64,
    pub seed: u64,
    pub members: Vec<ParamVector>,
}

impl ParamEnsemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Instantiates every member on the structure of `family`.
    pub fn predictors(&self, family: &Predictor) -> Result<Vec<Predictor>> {
        if self.members.is_empty() {
            return Err(ProbeError::Precondition("parameter ensemble is empty".into()));
        }
        self.members.iter().map(|m| family.with_params(m)).collect()
    }
}

/// Target of a label loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossTarget {
    Class(usize),
    Value(f64),
}

/// How the comparison model's prediction enters `1 - y_hat(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMode {
    /// Probability complement.
    Soft,
    /// Complement of the hard label; locally constant in `x`.
    Hard,
    /// Soft when the comparison model is differentiable, hard otherwise.
    Auto,
}

/// Output used by the norm form of a risky probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type", content = "class")]
pub enum RiskyOutput {
    Decision,
    Proba(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum RiskyMode {
    /// `|f(x) - alpha|^r`
    Norm { alpha: f64, r: f64, output: RiskyOutput },
    /// Negative Shannon entropy of the class probabilities.
    Entropy,
}

#[derive(Clone)]
enum TermKind {
    LabelLoss {
        models: Arc<Vec<Predictor>>,
        target: LossTarget,
    },
    Contrast {
        primaries: Arc<Vec<Predictor>>,
        reference: Arc<Predictor>,
        hard: bool,
    },
    ExpDeviation {
        primaries: Arc<Vec<Predictor>>,
        reference: Arc<Predictor>,
        sigma: f64,
    },
    RiskyNorm {
        model: Arc<Predictor>,
        alpha: f64,
        r: f64,
        output: RiskyOutput,
    },
    RiskyEntropy {
        model: Arc<Predictor>,
    },
    CertaintyPin {
        model: Arc<Predictor>,
        class: usize,
    },
    Regularizer(Regularizer),
    Quadratic {
        second_moment: Vec<Vec<f64>>,
        theta: Vec<f64>,
        target: f64,
        scale: f64,
    },
    Pushforward {
        inner: Arc<ProbeFunction>,
        map: LatentMap,
    },
    Custom(Arc<dyn Energy>),
}

impl TermKind {
    fn name(&self) -> &'static str {
        match self {
            TermKind::LabelLoss { .. } => "label-loss",
            TermKind::Contrast { .. } => "contrast",
            TermKind::ExpDeviation { .. } => "exp-deviation",
            TermKind::RiskyNorm { .. } => "risky-norm",
            TermKind::RiskyEntropy { .. } => "risky-entropy",
            TermKind::CertaintyPin { .. } => "certainty-pin",
            TermKind::Regularizer(_) => "regularizer",
            TermKind::Quadratic { .. } => "quadratic",
            TermKind::Pushforward { .. } => "pushforward",
            TermKind::Custom(_) => "custom",
        }
    }

    fn differentiable(&self) -> bool {
        match self {
            TermKind::LabelLoss { models, .. } => models.iter().all(Predictor::is_differentiable),
            TermKind::Contrast { primaries, .. } | TermKind::ExpDeviation { primaries, .. } => {
                primaries.iter().all(Predictor::is_differentiable)
            }
            TermKind::RiskyNorm { model, .. }
            | TermKind::RiskyEntropy { model }
            | TermKind::CertaintyPin { model, .. } => model.is_differentiable(),
            TermKind::Regularizer(_) | TermKind::Quadratic { .. } => true,
            TermKind::Pushforward { inner, .. } => inner.is_differentiable(),
            TermKind::Custom(e) => e.gradient(&vec![0.0; e.dim()]).is_some(),
        }
    }

    /// Value and, when `want_grad`, the gradient. Predictor errors cannot occur here
    /// because dimensions and arities were validated at construction.
    fn eval(&self, x: &[f64], want_grad: bool) -> (f64, Option<Vec<f64>>) {
        let want_grad = want_grad && self.differentiable();
        match self {
            TermKind::LabelLoss { models, target } => {
                average(models, x, want_grad, |m, x, g| label_loss(m, x, *target, g))
            }
            TermKind::Contrast {
                primaries,
                reference,
                hard,
            } => average(primaries, x, want_grad, |m, x, g| {
                binary_contrast(m, reference, *hard, x, g)
            }),
            TermKind::ExpDeviation {
                primaries,
                reference,
                sigma,
            } => average(primaries, x, want_grad, |m, x, g| {
                exp_deviation(m, reference, *sigma, x, g)
            }),
            TermKind::RiskyNorm {
                model,
                alpha,
                r,
                output,
            } => risky_norm(model, *alpha, *r, *output, x, want_grad),
            TermKind::RiskyEntropy { model } => risky_entropy(model, x, want_grad),
            TermKind::CertaintyPin { model, class } => certainty_pin(model, *class, x, want_grad),
            TermKind::Regularizer(reg) => (reg.value(x), want_grad.then(|| reg.gradient(x))),
            TermKind::Quadratic {
                second_moment,
                theta,
                target,
                scale,
            } => {
                let mut z = x.to_vec();
                z.push(1.0);
                let mz: Vec<f64> = second_moment.iter().map(|row| crate::math::dot(row, &z)).collect();
                let v = crate::math::dot(&z, &mz) - 2.0 * target * crate::math::dot(&z, theta) + target * target;
                let g = want_grad.then(|| {
                    (0..x.len())
                        .map(|j| 2.0 * scale * (mz[j] - target * theta[j]))
                        .collect()
                });
                (scale * v, g)
            }
            TermKind::Pushforward { inner, map } => {
                let y = map.apply(x);
                let v = inner.evaluate(&y);
                let g = if want_grad {
                    inner.gradient(&y).ok().map(|gy| map.pullback(x, &gy))
                } else {
                    None
                };
                (v, g)
            }
            TermKind::Custom(e) => (e.value(x), if want_grad { e.gradient(x) } else { None }),
        }
    }
}

fn average<F>(models: &[Predictor], x: &[f64], want_grad: bool, f: F) -> (f64, Option<Vec<f64>>)
where
    F: Fn(&Predictor, &[f64], bool) -> (f64, Option<Vec<f64>>),
{
    let m = models.len() as f64;
    let mut value = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; x.len()]);
    for model in models {
        let (v, g) = f(model, x, want_grad);
        value += v / m;
        if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
            axpy(acc, 1.0 / m, &g);
        }
    }
    (value, grad)
}

/// Cross-entropy `-sum_k t_k log p_k(x)` and its gradient with the target held fixed.
fn cross_entropy(model: &Predictor, target: &[f64], x: &[f64], want_grad: bool) -> (f64, Option<Vec<f64>>) {
    if want_grad {
        let (s, js) = model.logits_with_jacobian(x).expect("validated classifier");
        let p = softmax(&s);
        let lse = log_sum_exp(&s);
        let v = target.iter().zip(&s).map(|(t, sk)| t * (lse - sk)).sum();
        let mut g = vec![0.0; x.len()];
        for k in 0..s.len() {
            axpy(&mut g, p[k] - target[k], &js[k]);
        }
        (v, Some(g))
    } else if model.is_differentiable() {
        let s = model.logits(x).expect("validated classifier");
        let lse = log_sum_exp(&s);
        (target.iter().zip(&s).map(|(t, sk)| t * (lse - sk)).sum(), None)
    } else {
        let p = model.predict_proba(x).expect("validated classifier");
        (
            target
                .iter()
                .zip(&p)
                .map(|(t, pk)| if *t == 0.0 { 0.0 } else { -t * pk.max(PROBA_FLOOR).ln() })
                .sum(),
            None,
        )
    }
}

fn one_hot(k: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

fn label_loss(model: &Predictor, x: &[f64], target: LossTarget, want_grad: bool) -> (f64, Option<Vec<f64>>) {
    match target {
        LossTarget::Class(k) => {
            let n = model.n_classes().expect("validated classifier");
            cross_entropy(model, &one_hot(k, n), x, want_grad)
        }
        LossTarget::Value(y) => {
            if want_grad {
                let (v, g) = model.value_with_gradient(x).expect("validated regressor");
                let r = v - y;
                (r * r, Some(g.into_iter().map(|gi| 2.0 * r * gi).collect()))
            } else {
                let r = model.value(x).expect("validated regressor") - y;
                (r * r, None)
            }
        }
    }
}

/// `CE(primary(x), 1 - reference(x))` for binary classifiers. With a soft target from a
/// differentiable reference, the reference's dependence on `x` is differentiated too.
fn binary_contrast(
    primary: &Predictor,
    reference: &Predictor,
    hard: bool,
    x: &[f64],
    want_grad: bool,
) -> (f64, Option<Vec<f64>>) {
    let soft_grad = want_grad && !hard && reference.is_differentiable();
    let (q, dq) = if soft_grad {
        let (p, j) = reference.proba_with_jacobian(x).expect("validated classifier");
        (p[1], Some(j[1].clone()))
    } else {
        (reference.predict_proba(x).expect("validated classifier")[1], None)
    };
    let t1 = if hard {
        if q > 0.5 {
            0.0
        } else {
            1.0
        }
    } else {
        1.0 - q
    };
    let (v, g) = cross_entropy(primary, &[1.0 - t1, t1], x, want_grad);
    let g = match (g, dq) {
        (Some(mut g), Some(dq)) => {
            // d/dq of -[q log p0 + (1-q) log p1] = log p1 - log p0 = s1 - s0
            let s = primary.logits(x).expect("validated classifier");
            axpy(&mut g, s[1] - s[0], &dq);
            Some(g)
        }
        (g, _) => g,
    };
    (v, g)
}

/// Regression value, or class probabilities, with optional Jacobian.
fn output_vector(model: &Predictor, x: &[f64], want_grad: bool) -> (Vec<f64>, Option<Vec<Vec<f64>>>) {
    if model.is_classifier() {
        if want_grad && model.is_differentiable() {
            let (p, j) = model.proba_with_jacobian(x).expect("validated classifier");
            (p, Some(j))
        } else {
            (model.predict_proba(x).expect("validated classifier"), None)
        }
    } else if want_grad {
        let (v, g) = model.value_with_gradient(x).expect("validated regressor");
        (vec![v], Some(vec![g]))
    } else {
        (vec![model.value(x).expect("validated regressor")], None)
    }
}

/// `exp(-|y_primary(x) - y_reference(x)|^2 / sigma^2)`
fn exp_deviation(
    primary: &Predictor,
    reference: &Predictor,
    sigma: f64,
    x: &[f64],
    want_grad: bool,
) -> (f64, Option<Vec<f64>>) {
    let (ya, ja) = output_vector(primary, x, want_grad);
    let (yb, jb) = output_vector(reference, x, want_grad);
    let diff: Vec<f64> = ya.iter().zip(&yb).map(|(a, b)| a - b).collect();
    let s2 = sigma * sigma;
    let v = (-crate::math::dot(&diff, &diff) / s2).exp();
    let g = ja.map(|ja| {
        let mut g = vec![0.0; x.len()];
        for k in 0..diff.len() {
            axpy(&mut g, -2.0 * v * diff[k] / s2, &ja[k]);
            if let Some(jb) = &jb {
                axpy(&mut g, 2.0 * v * diff[k] / s2, &jb[k]);
            }
        }
        g
    });
    (v, g)
}

fn risky_norm(
    model: &Predictor,
    alpha: f64,
    r: f64,
    output: RiskyOutput,
    x: &[f64],
    want_grad: bool,
) -> (f64, Option<Vec<f64>>) {
    let (f, df) = match output {
        RiskyOutput::Decision => {
            let f = model.decision_value(x).expect("validated model");
            let df = want_grad.then(|| {
                model
                    .input_gradient(x, crate::predictors::GradientTarget::Decision)
                    .expect("validated model")
            });
            (f, df)
        }
        RiskyOutput::Proba(k) => {
            if want_grad {
                let (p, mut j) = model.proba_with_jacobian(x).expect("validated classifier");
                (p[k], Some(j.swap_remove(k)))
            } else {
                (model.predict_proba(x).expect("validated classifier")[k], None)
            }
        }
    };
    let d = f - alpha;
    let v = d.abs().powf(r);
    let g = df.map(|df| {
        let c = if d == 0.0 {
            0.0
        } else {
            r * d.abs().powf(r - 1.0) * d.signum()
        };
        df.into_iter().map(|v| c * v).collect()
    });
    (v, g)
}

fn risky_entropy(model: &Predictor, x: &[f64], want_grad: bool) -> (f64, Option<Vec<f64>>) {
    if model.is_differentiable() {
        let (s, js) = if want_grad {
            let (s, j) = model.logits_with_jacobian(x).expect("validated classifier");
            (s, Some(j))
        } else {
            (model.logits(x).expect("validated classifier"), None)
        };
        let lse = log_sum_exp(&s);
        let logq: Vec<f64> = s.iter().map(|v| v - lse).collect();
        let q: Vec<f64> = logq.iter().map(|l| l.exp()).collect();
        let neg_h: f64 = q.iter().zip(&logq).map(|(q, l)| q * l).sum();
        let g = js.map(|js| {
            let mut g = vec![0.0; x.len()];
            for j in 0..s.len() {
                axpy(&mut g, q[j] * (logq[j] - neg_h), &js[j]);
            }
            g
        });
        (neg_h, g)
    } else {
        let q = model.predict_proba(x).expect("validated classifier");
        (q.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum(), None)
    }
}

fn certainty_pin(model: &Predictor, class: usize, x: &[f64], want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let (p, j) = output_vector(model, x, want_grad);
    let e = one_hot(class, p.len());
    let diff: Vec<f64> = p.iter().zip(&e).map(|(a, b)| a - b).collect();
    let v = crate::math::dot(&diff, &diff);
    let g = j.map(|j| {
        let mut g = vec![0.0; x.len()];
        for k in 0..diff.len() {
            axpy(&mut g, 2.0 * diff[k], &j[k]);
        }
        g
    });
    (v, g)
}

#[derive(Clone)]
struct Term {
    weight: f64,
    kind: TermKind,
}

/// A composable probing energy over a `dim`-dimensional input space.
#[derive(Clone)]
pub struct ProbeFunction {
    dim: usize,
    terms: Vec<Term>,
}

impl fmt::Debug for ProbeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProbeFunction")
            .field("dim", &self.dim)
            .field(
                "terms",
                &self
                    .terms
                    .iter()
                    .map(|t| format!("{}*{}", t.weight, t.kind.name()))
                    .collect::<Vec<_>>(),
            )
            .finish()
    }
}

impl ProbeFunction {
    fn single(dim: usize, kind: TermKind) -> Self {
        Self {
            dim,
            terms: vec![Term { weight: 1.0, kind }],
        }
    }

    /// Wraps an arbitrary energy.
    pub fn custom(energy: Arc<dyn Energy>) -> Self {
        Self::single(energy.dim(), TermKind::Custom(energy))
    }

    pub fn from_regularizer(reg: Regularizer) -> Self {
        Self::single(reg.anchor.len(), TermKind::Regularizer(reg))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn term_names(&self) -> Vec<&'static str> {
        self.terms.iter().map(|t| t.kind.name()).collect()
    }

    /// Sum of the two energies.
    pub fn plus(mut self, other: ProbeFunction) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        self.terms.extend(other.terms);
        Ok(self)
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.terms.iter_mut().for_each(|t| t.weight *= factor);
        self
    }

    pub fn with_regularizer(self, reg: Option<Regularizer>) -> Result<Self> {
        match reg {
            None => Ok(self),
            Some(r) => {
                check_dim(self.dim, r.anchor.len())?;
                self.plus(Self::from_regularizer(r))
            }
        }
    }

    pub fn is_differentiable(&self) -> bool {
        self.terms.iter().all(|t| t.kind.differentiable())
    }

    pub fn gradient_mode(&self) -> GradientMode {
        if self.is_differentiable() {
            GradientMode::Exact
        } else {
            GradientMode::Smoothed
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.terms.iter().map(|t| t.weight * t.kind.eval(x, false).0).sum()
    }

    /// Weighted value of each term, in insertion order.
    pub fn term_values(&self, x: &[f64]) -> Vec<f64> {
        self.terms.iter().map(|t| t.weight * t.kind.eval(x, false).0).collect()
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.value_and_gradient(x).map(|(_, g)| g)
    }

    pub fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.dim, x.len())?;
        if let Some(t) = self.terms.iter().find(|t| !t.kind.differentiable()) {
            return Err(ProbeError::NotDifferentiable(format!(
                "term `{}` is locally constant",
                t.kind.name()
            )));
        }
        let mut value = 0.0;
        let mut grad = vec![0.0; self.dim];
        for t in &self.terms {
            let (v, g) = t.kind.eval(x, true);
            value += t.weight * v;
            axpy(&mut grad, t.weight, &g.expect("differentiable term"));
        }
        Ok((value, grad))
    }
}

fn check_input(p: &Predictor, dim: usize) -> Result<()> {
    check_dim(dim, p.input_dim())
}

fn loss_target(p: &Predictor, y_prime: f64) -> Result<LossTarget> {
    match p.n_classes() {
        Some(n) => {
            if y_prime < 0.0 || y_prime.fract() != 0.0 || y_prime as usize >= n {
                Err(ProbeError::Arity(format!("label {y_prime} outside 0..{n}")))
            } else {
                Ok(LossTarget::Class(y_prime as usize))
            }
        }
        None => Ok(LossTarget::Value(y_prime)),
    }
}

/// `l(y(x), y') + R(x)`: cross-entropy for classifiers, squared error for regressors.
pub fn fixed_label_g(p: &Predictor, y_prime: f64, reg: Option<Regularizer>) -> Result<ProbeFunction> {
    let target = loss_target(p, y_prime)?;
    ProbeFunction::single(
        p.input_dim(),
        TermKind::LabelLoss {
            models: Arc::new(vec![p.clone()]),
            target,
        },
    )
    .with_regularizer(reg)
}

/// Monte-Carlo average of the fixed-label loss over a parameter ensemble.
pub fn ensemble_fixed_label_g(
    ensemble: &ParamEnsemble,
    family: &Predictor,
    y_prime: f64,
    reg: Option<Regularizer>,
) -> Result<ProbeFunction> {
    let target = loss_target(family, y_prime)?;
    let models = ensemble.predictors(family)?;
    ProbeFunction::single(
        family.input_dim(),
        TermKind::LabelLoss {
            models: Arc::new(models),
            target,
        },
    )
    .with_regularizer(reg)
}

fn binary(p: &Predictor) -> Result<()> {
    if p.n_classes() == Some(2) {
        Ok(())
    } else {
        Err(ProbeError::Arity(format!("{:?} is not a binary classifier", p.kind())))
    }
}

fn resolve_mode(mode: TargetMode, reference: &Predictor) -> bool {
    match mode {
        TargetMode::Soft => false,
        TargetMode::Hard => true,
        TargetMode::Auto => !reference.is_differentiable(),
    }
}

/// Samples where `p1` disagrees with `p2`: `CE(p1(x), 1 - p2(x)) + R(x)`.
/// Two regressors use the exponential form with unit yardstick.
pub fn contrast_g(p1: &Predictor, p2: &Predictor, mode: TargetMode, reg: Option<Regularizer>) -> Result<ProbeFunction> {
    check_input(p2, p1.input_dim())?;
    if !p1.is_classifier() && !p2.is_classifier() {
        return regression_contrast_g(p1, p2, 1.0, reg);
    }
    binary(p1)
        .and_then(|_| binary(p2))
        .map_err(|_| ProbeError::Arity("contrast needs two binary classifiers or two regressors".into()))?;
    ProbeFunction::single(
        p1.input_dim(),
        TermKind::Contrast {
            primaries: Arc::new(vec![p1.clone()]),
            reference: Arc::new(p2.clone()),
            hard: resolve_mode(mode, p2),
        },
    )
    .with_regularizer(reg)
}

/// `exp(-|y1(x) - y2(x)|^2 / sigma^2) + R(x)`; low where the models diverge.
/// Classifiers compare probability vectors.
pub fn regression_contrast_g(
    p1: &Predictor,
    p2: &Predictor,
    sigma: f64,
    reg: Option<Regularizer>,
) -> Result<ProbeFunction> {
    if !(sigma > 0.0) {
        return Err(ProbeError::Precondition(format!("sigma must be positive, got {sigma}")));
    }
    check_input(p2, p1.input_dim())?;
    if p1.output_arity() != p2.output_arity() || p1.is_classifier() != p2.is_classifier() {
        return Err(ProbeError::Arity("models have different output arity".into()));
    }
    ProbeFunction::single(
        p1.input_dim(),
        TermKind::ExpDeviation {
            primaries: Arc::new(vec![p1.clone()]),
            reference: Arc::new(p2.clone()),
            sigma,
        },
    )
    .with_regularizer(reg)
}

/// Samples near the decision boundary: `|f(x) - alpha|^r` or negative entropy.
pub fn risky_g(p: &Predictor, mode: RiskyMode, reg: Option<Regularizer>) -> Result<ProbeFunction> {
    let kind = match mode {
        RiskyMode::Norm { alpha, r, output } => {
            if !(r >= 1.0) {
                return Err(ProbeError::Precondition(format!("norm order must be >= 1, got {r}")));
            }
            match output {
                RiskyOutput::Decision => {
                    if p.n_classes().is_some_and(|n| n != 2) {
                        return Err(ProbeError::Arity(
                            "decision value needs a binary or regression model".into(),
                        ));
                    }
                }
                RiskyOutput::Proba(k) => p.check_class(k)?,
            }
            TermKind::RiskyNorm {
                model: Arc::new(p.clone()),
                alpha,
                r,
                output,
            }
        }
        RiskyMode::Entropy => {
            if p.n_classes().is_none_or(|n| n < 2) {
                return Err(ProbeError::Arity("entropy needs class probabilities".into()));
            }
            TermKind::RiskyEntropy {
                model: Arc::new(p.clone()),
            }
        }
    };
    ProbeFunction::single(p.input_dim(), kind).with_regularizer(reg)
}

/// Samples whose label flips under parameter perturbation:
/// `(1/M) sum_m CE(y_m(x), 1 - y_star(x)) + R(x)`.
pub fn param_sensitive_g(
    ensemble: &ParamEnsemble,
    p_star: &Predictor,
    mode: TargetMode,
    reg: Option<Regularizer>,
) -> Result<ProbeFunction> {
    binary(p_star)?;
    let members = ensemble.predictors(p_star)?;
    ProbeFunction::single(
        p_star.input_dim(),
        TermKind::Contrast {
            primaries: Arc::new(members),
            reference: Arc::new(p_star.clone()),
            hard: resolve_mode(mode, p_star),
        },
    )
    .with_regularizer(reg)
}

/// `(1/M) sum_m exp(-(y_m(x) - y_star(x))^2 / sigma^2) + R(x)` for regressors.
pub fn regression_sensitive_g(
    ensemble: &ParamEnsemble,
    p_star: &Predictor,
    sigma: f64,
    reg: Option<Regularizer>,
) -> Result<ProbeFunction> {
    if !(sigma > 0.0) {
        return Err(ProbeError::Precondition(format!("sigma must be positive, got {sigma}")));
    }
    if p_star.is_classifier() {
        return Err(ProbeError::Arity("regression sensitivity needs a regressor".into()));
    }
    let members = ensemble.predictors(p_star)?;
    ProbeFunction::single(
        p_star.input_dim(),
        TermKind::ExpDeviation {
            primaries: Arc::new(members),
            reference: Arc::new(p_star.clone()),
            sigma,
        },
    )
    .with_regularizer(reg)
}

/// `weight * |proba(x) - onehot(target)|^2`
pub fn certainty_pin_g(pin_model: &Predictor, target_class: usize, weight: f64) -> Result<ProbeFunction> {
    pin_model.check_class(target_class)?;
    Ok(ProbeFunction::single(
        pin_model.input_dim(),
        TermKind::CertaintyPin {
            model: Arc::new(pin_model.clone()),
            class: target_class,
        },
    )
    .scaled(weight))
}

/// Quadratic `scale * (z' M z - 2 w z' theta + w^2)` with `z = (x, 1)`.
pub(crate) fn quadratic_g(second_moment: Vec<Vec<f64>>, theta: Vec<f64>, target: f64, scale: f64) -> ProbeFunction {
    ProbeFunction::single(
        theta.len() - 1,
        TermKind::Quadratic {
            second_moment,
            theta,
            target,
            scale,
        },
    )
}

pub(crate) fn pushforward(inner: Arc<ProbeFunction>, map: LatentMap) -> ProbeFunction {
    ProbeFunction::single(map.input_dim(), TermKind::Pushforward { inner, map })
}
