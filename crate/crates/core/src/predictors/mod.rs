//! Desk-scale trainable models behind one prediction interface.
//!
//! Differentiable classifiers expose raw class scores ("logits") whose softmax gives
//! the class probabilities; binary linear/kernel models use the scores `(0, f(x))`.
//! Regressors expose a scalar value. Input gradients are analytic.

pub(crate) mod linear;
mod logistic;
mod mlp;
mod svm;
mod tree;

pub use linear::{fit_linear_regression, LinearModel};
pub use logistic::{fit_logistic_regression, LogisticConfig, LogisticModel};
pub use mlp::{fit_mlp, DenseLayer, LrSchedule, Mlp, MlpHead, MlpSpec, MlpTrainConfig};
pub use svm::{fit_kernel_svm, Kernel, KernelSvm, SvmConfig};
pub use tree::{fit_forest, fit_tree, DecisionTree, RandomForest, TreeNode};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, ProbeError, Result};
use crate::math::{argmax, softmax};
use crate::types::ParamVector;

pub const MODEL_FORMAT: &str = "modelprobe-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LinearRegression,
    LogisticRegression,
    Mlp,
    KernelSvm,
    DecisionTree,
    RandomForest,
}

/// Which scalar output an input gradient is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientTarget {
    /// Regression output.
    Value,
    /// Binary decision value (logit, margin, or regression output).
    Decision,
    /// Raw score of one class.
    Logit(usize),
    /// Probability of one class.
    Proba(usize),
}

/// A trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Predictor {
    LinearRegression(LinearModel),
    LogisticRegression(LogisticModel),
    Mlp(Mlp),
    KernelSvm(KernelSvm),
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
}

macro_rules! impl_from {
    ($($t:ty => $v:ident),*) => {$(
        impl From<$t> for Predictor {
            fn from(m: $t) -> Self {
                Predictor::$v(m)
            }
        }
    )*};
}
impl_from!(
    LinearModel => LinearRegression,
    LogisticModel => LogisticRegression,
    Mlp => Mlp,
    KernelSvm => KernelSvm,
    DecisionTree => DecisionTree,
    RandomForest => RandomForest
);

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    model: Predictor,
}

impl Predictor {
    pub fn kind(&self) -> ModelKind {
        match self {
            Predictor::LinearRegression(_) => ModelKind::LinearRegression,
            Predictor::LogisticRegression(_) => ModelKind::LogisticRegression,
            Predictor::Mlp(_) => ModelKind::Mlp,
            Predictor::KernelSvm(_) => ModelKind::KernelSvm,
            Predictor::DecisionTree(_) => ModelKind::DecisionTree,
            Predictor::RandomForest(_) => ModelKind::RandomForest,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Predictor::LinearRegression(m) => m.weights.len(),
            Predictor::LogisticRegression(m) => m.weights.len(),
            Predictor::Mlp(m) => m.input_dim(),
            Predictor::KernelSvm(m) => m.n_features,
            Predictor::DecisionTree(m) => m.n_features,
            Predictor::RandomForest(m) => m.n_features,
        }
    }

    /// Number of classes, or `None` for regressors.
    pub fn n_classes(&self) -> Option<usize> {
        match self {
            Predictor::LinearRegression(_) => None,
            Predictor::LogisticRegression(_) | Predictor::KernelSvm(_) => Some(2),
            Predictor::Mlp(m) => match m.head {
                MlpHead::Classification { n_classes } => Some(n_classes),
                MlpHead::Regression => None,
            },
            Predictor::DecisionTree(m) => Some(m.n_classes),
            Predictor::RandomForest(m) => Some(m.n_classes),
        }
    }

    pub fn is_classifier(&self) -> bool {
        self.n_classes().is_some()
    }

    pub fn output_arity(&self) -> usize {
        self.n_classes().unwrap_or(1)
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self, Predictor::DecisionTree(_) | Predictor::RandomForest(_))
    }

    /// Regression value, or the predicted class index as a float.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if self.is_classifier() {
            Ok(self.predict_class(x)? as f64)
        } else {
            self.value(x)
        }
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        match self {
            Predictor::DecisionTree(m) => Ok(m.proba(x).to_vec()),
            Predictor::RandomForest(m) => Ok(m.proba(x)),
            _ if self.is_classifier() => Ok(softmax(&self.logits(x)?)),
            _ => Err(ProbeError::Arity("regressors have no class probabilities".into())),
        }
    }

    /// Regression output.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.input_dim(), x.len())?;
        match self {
            Predictor::LinearRegression(m) => Ok(m.predict(x)),
            Predictor::Mlp(m) if m.head == MlpHead::Regression => Ok(m.forward(x)[0]),
            _ => Err(ProbeError::Arity(format!("{:?} is not a regressor", self.kind()))),
        }
    }

    /// Scalar decision value: the logit/margin for binary classifiers, the output for regressors,
    /// and `p1 - p0` for binary trees.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.input_dim(), x.len())?;
        match self {
            Predictor::LinearRegression(_) => self.value(x),
            Predictor::LogisticRegression(m) => Ok(m.decision(x)),
            Predictor::KernelSvm(m) => Ok(m.decision(x)),
            Predictor::Mlp(m) => match m.head {
                MlpHead::Regression => Ok(m.forward(x)[0]),
                MlpHead::Classification { n_classes: 2 } => {
                    let s = m.forward(x);
                    Ok(s[1] - s[0])
                }
                MlpHead::Classification { .. } => Err(ProbeError::Arity(
                    "decision value needs a binary or regression model".into(),
                )),
            },
            Predictor::DecisionTree(_) | Predictor::RandomForest(_) => {
                let p = self.predict_proba(x)?;
                if p.len() != 2 {
                    return Err(ProbeError::Arity(
                        "decision value needs a binary or regression model".into(),
                    ));
                }
                Ok(p[1] - p[0])
            }
        }
    }

    /// Class scores whose softmax is `predict_proba`.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        match self {
            Predictor::LogisticRegression(m) => Ok(vec![0.0, m.decision(x)]),
            Predictor::KernelSvm(m) => Ok(vec![0.0, m.decision(x)]),
            Predictor::Mlp(m) if self.is_classifier() => Ok(m.forward(x)),
            Predictor::DecisionTree(_) | Predictor::RandomForest(_) => {
                Err(ProbeError::NotDifferentiable("tree models have no class scores".into()))
            }
            _ => Err(ProbeError::Arity("regressors have no class scores".into())),
        }
    }

    /// Class scores and their Jacobian (one row per class).
    pub fn logits_with_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        check_dim(self.input_dim(), x.len())?;
        match self {
            Predictor::LogisticRegression(m) => {
                Ok((vec![0.0, m.decision(x)], vec![vec![0.0; x.len()], m.weights.clone()]))
            }
            Predictor::KernelSvm(m) => Ok((
                vec![0.0, m.decision(x)],
                vec![vec![0.0; x.len()], m.decision_gradient(x)],
            )),
            Predictor::Mlp(m) if self.is_classifier() => Ok(m.forward_with_jacobian(x)),
            Predictor::DecisionTree(_) | Predictor::RandomForest(_) => Err(ProbeError::NotDifferentiable(
                "tree models have no input gradient".into(),
            )),
            _ => Err(ProbeError::Arity("regressors have no class scores".into())),
        }
    }

    /// Regression output and its input gradient.
    pub fn value_with_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.input_dim(), x.len())?;
        match self {
            Predictor::LinearRegression(m) => Ok((m.predict(x), m.weights.clone())),
            Predictor::Mlp(m) if m.head == MlpHead::Regression => {
                let (v, mut j) = m.forward_with_jacobian(x);
                Ok((v[0], j.swap_remove(0)))
            }
            _ => Err(ProbeError::Arity(format!("{:?} is not a regressor", self.kind()))),
        }
    }

    /// Class probabilities and their Jacobian.
    pub fn proba_with_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let (s, js) = self.logits_with_jacobian(x)?;
        let p = softmax(&s);
        let d = x.len();
        // dp_k = p_k (ds_k - sum_j p_j ds_j)
        let mut mean_grad = vec![0.0; d];
        for (pj, gj) in p.iter().zip(&js) {
            crate::math::axpy(&mut mean_grad, *pj, gj);
        }
        let jac = p
            .iter()
            .zip(&js)
            .map(|(pk, gk)| gk.iter().zip(&mean_grad).map(|(a, b)| pk * (a - b)).collect())
            .collect();
        Ok((p, jac))
    }

    /// Exact input gradient of the selected output.
    pub fn input_gradient(&self, x: &[f64], target: GradientTarget) -> Result<Vec<f64>> {
        if !self.is_differentiable() {
            return Err(ProbeError::NotDifferentiable(format!(
                "{:?} is piecewise constant; use smoothed gradients",
                self.kind()
            )));
        }
        match target {
            GradientTarget::Value => Ok(self.value_with_gradient(x)?.1),
            GradientTarget::Decision => {
                if !self.is_classifier() {
                    return Ok(self.value_with_gradient(x)?.1);
                }
                let (_, j) = self.logits_with_jacobian(x)?;
                if j.len() != 2 {
                    return Err(ProbeError::Arity(
                        "decision value needs a binary or regression model".into(),
                    ));
                }
                Ok(j[1].iter().zip(&j[0]).map(|(a, b)| a - b).collect())
            }
            GradientTarget::Logit(k) => {
                let (_, mut j) = self.logits_with_jacobian(x)?;
                self.check_class(k)?;
                Ok(j.swap_remove(k))
            }
            GradientTarget::Proba(k) => {
                let (_, mut j) = self.proba_with_jacobian(x)?;
                self.check_class(k)?;
                Ok(j.swap_remove(k))
            }
        }
    }

    pub fn check_class(&self, k: usize) -> Result<()> {
        match self.n_classes() {
            Some(n) if k < n => Ok(()),
            Some(n) => Err(ProbeError::Arity(format!("class {k} outside 0..{n}"))),
            None => Err(ProbeError::Arity("regressor has no classes".into())),
        }
    }

    /// Flat trainable parameters (tree models have none).
    pub fn params(&self) -> Result<ParamVector> {
        match self {
            Predictor::LinearRegression(m) => linear::affine_params(&m.weights, m.intercept),
            Predictor::LogisticRegression(m) => linear::affine_params(&m.weights, m.intercept),
            Predictor::Mlp(m) => m.params(),
            Predictor::KernelSvm(m) => m.params(),
            Predictor::DecisionTree(_) | Predictor::RandomForest(_) => {
                Err(ProbeError::Precondition("tree models are not parameterized".into()))
            }
        }
    }

    /// Same structure with parameters replaced.
    pub fn with_params(&self, params: &ParamVector) -> Result<Predictor> {
        let own = self.params()?;
        if own.layout() != params.layout() {
            return Err(ProbeError::Dimension {
                expected: own.len(),
                got: params.len(),
            });
        }
        let theta = params.theta();
        Ok(match self {
            Predictor::LinearRegression(_) => {
                let (w, b) = theta.split_at(theta.len() - 1);
                Predictor::LinearRegression(LinearModel {
                    weights: w.to_vec(),
                    intercept: b[0],
                })
            }
            Predictor::LogisticRegression(m) => {
                let (w, b) = theta.split_at(theta.len() - 1);
                Predictor::LogisticRegression(LogisticModel {
                    weights: w.to_vec(),
                    intercept: b[0],
                    ..m.clone()
                })
            }
            Predictor::Mlp(m) => Predictor::Mlp(m.with_flat(theta)),
            Predictor::KernelSvm(m) => Predictor::KernelSvm(m.with_flat(theta)),
            Predictor::DecisionTree(_) | Predictor::RandomForest(_) => unreachable!(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_FORMAT_VERSION {
            return Err(ProbeError::Format(format!(
                "expected {MODEL_FORMAT} v{MODEL_FORMAT_VERSION}, found {} v{}",
                doc.format, doc.version
            )));
        }
        Ok(doc.model)
    }
}
