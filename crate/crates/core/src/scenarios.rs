//! Population statistics for generated samples, and chain start points.

use crate::error::{ProbeError, Result};
use crate::predictors::Predictor;
use crate::types::Dataset;

/// Fraction of samples where the two classifiers predict different classes.
pub fn disagreement_rate(samples: &[Vec<f64>], p1: &Predictor, p2: &Predictor) -> Result<f64> {
    rate(samples, |x| Ok(p1.predict_class(x)? != p2.predict_class(x)?))
}

/// Fraction of (sample, member) pairs where an ensemble member's class differs from
/// the center model's.
pub fn flip_rate(samples: &[Vec<f64>], members: &[Predictor], center: &Predictor) -> Result<f64> {
    if members.is_empty() {
        return Err(ProbeError::Precondition("no ensemble members".into()));
    }
    let per_sample = samples
        .iter()
        .map(|x| {
            let c = center.predict_class(x)?;
            let flips = members
                .iter()
                .map(|m| m.predict_class(x).map(|k| (k != c) as usize))
                .sum::<Result<usize>>()?;
            Ok(flips as f64 / members.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean(&per_sample))
}

/// Mean and population standard deviation of the probability of `class`.
pub fn proba_moments(samples: &[Vec<f64>], p: &Predictor, class: usize) -> Result<(f64, f64)> {
    p.check_class(class)?;
    let q = samples
        .iter()
        .map(|x| Ok(p.predict_proba(x)?[class]))
        .collect::<Result<Vec<f64>>>()?;
    let m = mean(&q);
    let var = if q.is_empty() {
        0.0
    } else {
        q.iter().map(|v| (v - m).powi(2)).sum::<f64>() / q.len() as f64
    };
    Ok((m, var.sqrt()))
}

/// Training point nearest the anchor when there is one, else the feature mean.
pub fn default_start(data: &Dataset, anchor: Option<&[f64]>) -> Vec<f64> {
    match anchor.and_then(|a| data.nearest(a)) {
        Some(i) => data.points()[i].features.clone(),
        None => data.feature_mean(),
    }
}

/// Point on the segment from the feature mean to the nearest training point where
/// `model` gives `class` probability one, just past the first grid step that is
/// pinned. Keeps pin probes from starting deep inside a class cluster.
pub fn pinned_start(data: &Dataset, model: &Predictor, class: usize) -> Result<Vec<f64>> {
    model.check_class(class)?;
    let pinned = |x: &[f64]| -> Result<bool> { Ok(model.predict_proba(x)?[class] >= 1.0) };
    let center = data.feature_mean();
    if pinned(&center)? {
        return Ok(center);
    }
    let mut best: Option<(f64, &[f64])> = None;
    for p in data.points() {
        if pinned(&p.features)? {
            let d = crate::math::sq_dist(&center, &p.features);
            if best.is_none_or(|(b, _)| d < b) {
                best = Some((d, &p.features));
            }
        }
    }
    let (_, target) =
        best.ok_or_else(|| ProbeError::Precondition(format!("no training point has class {class} pinned")))?;
    const STEPS: usize = 64;
    let at = |t: f64| -> Vec<f64> { center.iter().zip(target).map(|(c, x)| c + t * (x - c)).collect() };
    for i in 1..=STEPS {
        let x = at((i as f64 + 1.0).min(STEPS as f64) / STEPS as f64);
        if pinned(&at(i as f64 / STEPS as f64))? && pinned(&x)? {
            return Ok(x);
        }
    }
    Ok(target.to_vec())
}

fn rate(samples: &[Vec<f64>], f: impl Fn(&[f64]) -> Result<bool>) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let hits = samples
        .iter()
        .map(|x| f(x).map(|b| b as usize))
        .sum::<Result<usize>>()?;
    Ok(hits as f64 / samples.len() as f64)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::LogisticModel;

    fn logistic(w: f64, b: f64) -> Predictor {
        LogisticModel {
            weights: vec![w],
            intercept: b,
            l2: 0.0,
            grad_norm: 0.0,
        }
        .into()
    }

    #[test]
    fn rates_by_hand() {
        let samples = vec![vec![-1.0], vec![0.5], vec![2.0]];
        // boundaries at 0 and 1: only x = 0.5 lies between
        let r = disagreement_rate(&samples, &logistic(1.0, 0.0), &logistic(1.0, -1.0)).unwrap();
        assert!((r - 1.0 / 3.0).abs() < 1e-15);
        let f = flip_rate(
            &samples,
            &[logistic(1.0, 0.0), logistic(1.0, -1.0)],
            &logistic(1.0, 0.0),
        )
        .unwrap();
        assert!((f - 1.0 / 6.0).abs() < 1e-15);
        let (m, s) = proba_moments(&[vec![0.0], vec![0.0]], &logistic(1.0, 0.0), 1).unwrap();
        assert_eq!((m, s), (0.5, 0.0));
    }

    #[test]
    fn pinned_start_stops_just_past_the_boundary() {
        use crate::predictors::{DecisionTree, TreeNode};
        use crate::types::{DataPoint, Task};
        let points = (0..=10)
            .map(|i| DataPoint::new(vec![i as f64], Some((i > 8) as u8 as f64)))
            .collect();
        let data = Dataset::new(points, vec!["x".into()], Task::Classification { n_classes: 2 }).unwrap();
        let stump = |threshold| -> Predictor {
            DecisionTree {
                n_features: 1,
                n_classes: 2,
                nodes: vec![
                    TreeNode::Split {
                        feature: 0,
                        threshold,
                        left: 1,
                        right: 2,
                    },
                    TreeNode::Leaf { proba: vec![0.5, 0.5] },
                    TreeNode::Leaf { proba: vec![0.0, 1.0] },
                ],
            }
            .into()
        };
        // mean 5, nearest pinned point 9; grid of 4/64 first crosses 8 at 5 + 49/16
        let x = pinned_start(&data, &stump(8.0), 1).unwrap();
        assert!((x[0] - (5.0 + 4.0 * 50.0 / 64.0)).abs() < 1e-12, "{x:?}");
        assert_eq!(pinned_start(&data, &stump(2.0), 1).unwrap(), vec![5.0]);
        assert!(pinned_start(&data, &stump(8.0), 0).is_err());
    }
}
