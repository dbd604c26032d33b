//! Shared numeric and dataset types.

use serde::{Deserialize, Serialize};

use crate::encoding::EncodingMap;
use crate::error::{ProbeError, Result};
use crate::math;

/// Sampling temperature; always strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau.is_finite() {
            Ok(Self(tau))
        } else {
            Err(ProbeError::Precondition(format!(
                "temperature must be positive and finite, got {tau}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Temperature {
    type Error = ProbeError;
    fn try_from(tau: f64) -> Result<Self> {
        Self::new(tau)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

/// One labeled (or unlabeled) observation in model units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub features: Vec<f64>,
    /// Regression target, or class index stored as an integral float.
    pub label: Option<f64>,
}

impl DataPoint {
    pub fn new(features: Vec<f64>, label: Option<f64>) -> Self {
        Self { features, label }
    }

    pub fn class(&self) -> Option<usize> {
        self.label.map(|l| l as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum Task {
    Regression,
    Classification { n_classes: usize },
}

impl Task {
    pub fn n_classes(self) -> Option<usize> {
        match self {
            Task::Regression => None,
            Task::Classification { n_classes } => Some(n_classes),
        }
    }
}

/// Closed interval for one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo <= hi {
            Ok(Self { lo, hi })
        } else {
            Err(ProbeError::Precondition(format!("bounds [{lo}, {hi}] are inverted")))
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

/// In-memory dataset with a single declared feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    points: Vec<DataPoint>,
    feature_names: Vec<String>,
    encoding: EncodingMap,
    bounds: Option<Vec<Bounds>>,
    task: Task,
}

impl Dataset {
    pub fn new(points: Vec<DataPoint>, feature_names: Vec<String>, task: Task) -> Result<Self> {
        let encoding = EncodingMap::numeric(&feature_names);
        Self::with_encoding(points, feature_names, encoding, task)
    }

    pub fn with_encoding(
        points: Vec<DataPoint>,
        feature_names: Vec<String>,
        encoding: EncodingMap,
        task: Task,
    ) -> Result<Self> {
        let d = feature_names.len();
        if encoding.dim() != d {
            return Err(ProbeError::Dimension {
                expected: d,
                got: encoding.dim(),
            });
        }
        for p in &points {
            crate::error::check_dim(d, p.features.len())?;
            if let (Task::Classification { n_classes }, Some(l)) = (task, p.label) {
                if l < 0.0 || l.fract() != 0.0 || l as usize >= n_classes {
                    return Err(ProbeError::Arity(format!("label {l} outside 0..{n_classes}")));
                }
            }
        }
        Ok(Self {
            points,
            feature_names,
            encoding,
            bounds: None,
            task,
        })
    }

    /// Attaches per-feature bounds; every stored point must respect them.
    pub fn with_bounds(mut self, bounds: Vec<Bounds>) -> Result<Self> {
        crate::error::check_dim(self.dim(), bounds.len())?;
        for (i, p) in self.points.iter().enumerate() {
            for (j, b) in bounds.iter().enumerate() {
                if !b.contains(p.features[j]) {
                    return Err(ProbeError::Precondition(format!(
                        "point {i} violates bounds on feature `{}`",
                        self.feature_names[j]
                    )));
                }
            }
        }
        self.bounds = Some(bounds);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn encoding(&self) -> &EncodingMap {
        &self.encoding
    }

    pub fn bounds(&self) -> Option<&[Bounds]> {
        self.bounds.as_deref()
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.features.clone()).collect()
    }

    pub fn labels(&self) -> Result<Vec<f64>> {
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                p.label
                    .ok_or_else(|| ProbeError::Precondition(format!("point {i} has no label")))
            })
            .collect()
    }

    pub fn class_labels(&self) -> Result<Vec<usize>> {
        if self.task.n_classes().is_none() {
            return Err(ProbeError::Arity("dataset is not a classification task".into()));
        }
        Ok(self.labels()?.into_iter().map(|l| l as usize).collect())
    }

    pub fn feature_mean(&self) -> Vec<f64> {
        math::column_moments(&self.features(), self.dim()).0
    }

    /// Per-feature [min, max] over the stored points.
    pub fn observed_bounds(&self) -> Vec<Bounds> {
        (0..self.dim())
            .map(|j| {
                let (lo, hi) = self
                    .points
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                        (lo.min(p.features[j]), hi.max(p.features[j]))
                    });
                Bounds { lo, hi }
            })
            .collect()
    }

    /// Points whose class label equals `class`.
    pub fn filter_class(&self, class: usize) -> Vec<&DataPoint> {
        self.points.iter().filter(|p| p.class() == Some(class)).collect()
    }

    /// Index of the stored point closest (Euclidean) to `x`.
    pub fn nearest(&self, x: &[f64]) -> Option<usize> {
        self.points
            .iter()
            .enumerate()
            .min_by(|a, b| math::sq_dist(&a.1.features, x).total_cmp(&math::sq_dist(&b.1.features, x)))
            .map(|(i, _)| i)
    }

    /// Deterministic shuffled split; `fraction` of points go to the first set.
    pub fn split(&self, fraction: f64, seed: u64) -> (Dataset, Dataset) {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut math::rng_from_seed(seed));
        let cut = ((self.len() as f64) * fraction).round() as usize;
        let take = |ids: &[usize]| Dataset {
            points: ids.iter().map(|&i| self.points[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            encoding: self.encoding.clone(),
            bounds: self.bounds.clone(),
            task: self.task,
        };
        (take(&idx[..cut]), take(&idx[cut..]))
    }

    /// Z-scores every feature, returning the transformed dataset and the scaler.
    pub fn standardized(&self) -> (Dataset, Scaler) {
        let scaler = Scaler::fit(self);
        let points = self
            .points
            .iter()
            .map(|p| DataPoint::new(scaler.transform(&p.features), p.label))
            .collect();
        let bounds = self.bounds.as_ref().map(|bs| {
            bs.iter()
                .enumerate()
                .map(|(j, b)| Bounds {
                    lo: (b.lo - scaler.mean[j]) / scaler.scale[j],
                    hi: (b.hi - scaler.mean[j]) / scaler.scale[j],
                })
                .collect()
        });
        let ds = Dataset {
            points,
            feature_names: self.feature_names.clone(),
            encoding: self.encoding.clone(),
            bounds,
            task: self.task,
        };
        (ds, scaler)
    }
}

/// Affine per-feature standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn fit(data: &Dataset) -> Self {
        let (mean, std) = math::column_moments(&data.features(), data.dim());
        let scale = std.into_iter().map(|s| if s > 0.0 { s } else { 1.0 }).collect();
        Self { mean, scale }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// Named block of a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSegment {
    pub name: String,
    pub len: usize,
}

/// Flat model parameters plus the block layout that maps them onto a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    theta: Vec<f64>,
    layout: Vec<ParamSegment>,
}

impl ParamVector {
    pub fn new(theta: Vec<f64>, layout: Vec<ParamSegment>) -> Result<Self> {
        let total: usize = layout.iter().map(|s| s.len).sum();
        if total != theta.len() {
            return Err(ProbeError::Dimension {
                expected: total,
                got: theta.len(),
            });
        }
        Ok(Self { theta, layout })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn layout(&self) -> &[ParamSegment] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Same layout, new values.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(theta, self.layout.clone())
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        let mut start = 0;
        for s in &self.layout {
            if s.name == name {
                return Some(&self.theta[start..start + s.len]);
            }
            start += s.len;
        }
        None
    }
}
