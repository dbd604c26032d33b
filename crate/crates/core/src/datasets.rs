//! Deterministic synthetic datasets: toy geometries and stand-ins for the tabular
//! credit, wine and housing problems.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ProbeError, Result};
use crate::math::rng_from_seed;
use crate::types::{DataPoint, Dataset, Task};

fn names(prefix: &str, d: usize) -> Vec<String> {
    (0..d).map(|i| format!("{prefix}{i}")).collect()
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Two rings around the origin: class 0 at `r_inner`, class 1 at `r_outer`.
/// Noise is added to the radius; angles are uniform.
pub fn concentric_circles(n_per_class: usize, r_inner: f64, r_outer: f64, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if !(0.0 < r_inner && r_inner < r_outer) || !(noise_sd >= 0.0) {
        return Err(ProbeError::Precondition(format!(
            "need 0 < r_inner < r_outer and noise >= 0, got ({r_inner}, {r_outer}, {noise_sd})"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut pts = Vec::with_capacity(2 * n_per_class);
    for (class, r) in [(0.0, r_inner), (1.0, r_outer)] {
        for _ in 0..n_per_class {
            let angle = rng.random_range(0.0..2.0 * PI);
            let radius = r + noise_sd * normal(&mut rng);
            pts.push(DataPoint::new(
                vec![radius * angle.cos(), radius * angle.sin()],
                Some(class),
            ));
        }
    }
    Dataset::new(pts, vec!["x".into(), "y".into()], Task::Classification { n_classes: 2 })
}

/// Isotropic Gaussian clusters, one class per center.
pub fn gaussian_blobs(centers: &[Vec<f64>], n_per_class: usize, sd: f64, seed: u64) -> Dataset {
    let d = centers[0].len();
    let mut rng = rng_from_seed(seed);
    let pts = centers
        .iter()
        .enumerate()
        .flat_map(|(k, c)| {
            (0..n_per_class)
                .map(|_| {
                    let x = c.iter().map(|m| m + sd * normal(&mut rng)).collect();
                    DataPoint::new(x, Some(k as f64))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Dataset::new(
        pts,
        names("x", d),
        Task::Classification {
            n_classes: centers.len(),
        },
    )
    .expect("blob centers share one dimension")
}

/// Four clusters at `(±1, ±1)`; the label is 1 when the coordinates' signs differ.
pub fn xor(n: usize, noise_sd: f64, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let pts = (0..n)
        .map(|i| {
            let (sx, sy) = match i % 4 {
                0 => (1.0, 1.0),
                1 => (-1.0, -1.0),
                2 => (1.0, -1.0),
                _ => (-1.0, 1.0),
            };
            let label = if sx * sy < 0.0 { 1.0 } else { 0.0 };
            DataPoint::new(
                vec![sx + noise_sd * normal(&mut rng), sy + noise_sd * normal(&mut rng)],
                Some(label),
            )
        })
        .collect();
    Dataset::new(pts, vec!["x".into(), "y".into()], Task::Classification { n_classes: 2 }).expect("fixed dimension")
}

pub const CREDIT_FEATURES: [&str; 8] = [
    "external_risk_estimate",
    "months_since_oldest_trade",
    "average_months_in_file",
    "num_satisfactory_trades",
    "percent_trades_never_delinquent",
    "net_fraction_revolving_burden",
    "num_inquiries_last_6m",
    "percent_installment_trades",
];

/// Credit-risk stand-in: a two-component applicant mixture driven by a latent
/// creditworthiness score. Label 1 ("bad") has a logit decreasing in that score.
pub fn synthetic_credit(n: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        // established vs thin-file applicants
        let established = rng.random::<f64>() < 0.6;
        let shift = if established { 0.4 } else { -0.6 };
        let u = shift + normal(&mut rng);
        let mut e = || normal(&mut rng);
        let x = vec![
            (72.0 + 8.0 * u + 4.0 * e()).clamp(30.0, 100.0),
            (200.0 + 60.0 * u + if established { 60.0 } else { -40.0 } + 60.0 * e()).clamp(2.0, 600.0),
            (78.0 + 15.0 * u + 18.0 * e()).clamp(4.0, 300.0),
            (21.0 + 5.0 * u + 8.0 * e()).clamp(0.0, 80.0),
            (92.0 + 5.0 * u + 5.0 * e()).clamp(0.0, 100.0),
            (35.0 - 15.0 * u + 18.0 * e()).clamp(0.0, 150.0),
            (1.5 - 1.0 * u + 1.2 * e()).clamp(0.0, 20.0),
            (34.0 + 3.0 * u + 15.0 * e()).clamp(0.0, 100.0),
        ];
        let logit = -0.2 - 1.6 * u;
        let bad = rng.random::<f64>() < crate::math::sigmoid(logit);
        pts.push(DataPoint::new(x, Some(if bad { 1.0 } else { 0.0 })));
    }
    Dataset::new(
        pts,
        CREDIT_FEATURES.iter().map(|s| s.to_string()).collect(),
        Task::Classification { n_classes: 2 },
    )
    .expect("fixed dimension")
}

pub const WINE_FEATURES: [&str; 13] = [
    "alcohol",
    "malic_acid",
    "ash",
    "alcalinity_of_ash",
    "magnesium",
    "total_phenols",
    "flavanoids",
    "nonflavanoid_phenols",
    "proanthocyanins",
    "color_intensity",
    "hue",
    "od280_od315",
    "proline",
];

/// Index of `color_intensity` in [`WINE_FEATURES`].
pub const WINE_COLOR_INTENSITY: usize = 9;

// per-class (mean, sd) loosely following the classic three-cultivar wine data.
// Color intensity is tightened so that it alone isolates class 1; a shallow
// tree then routes every class-1 prediction through a color split.
const WINE_STATS: [[(f64, f64); 13]; 3] = [
    [
        (13.74, 0.46),
        (2.01, 0.69),
        (2.46, 0.23),
        (17.04, 2.55),
        (106.3, 10.5),
        (2.84, 0.34),
        (2.98, 0.40),
        (0.29, 0.07),
        (1.90, 0.41),
        (5.30, 0.90),
        (1.06, 0.12),
        (3.16, 0.36),
        (1116.0, 221.0),
    ],
    [
        (12.28, 0.54),
        (1.93, 1.02),
        (2.24, 0.32),
        (20.24, 3.35),
        (94.5, 16.8),
        (2.26, 0.55),
        (2.08, 0.70),
        (0.36, 0.12),
        (1.63, 0.60),
        (2.60, 0.45),
        (1.06, 0.20),
        (2.79, 0.50),
        (520.0, 158.0),
    ],
    [
        (13.15, 0.53),
        (3.33, 1.09),
        (2.44, 0.18),
        (21.42, 2.26),
        (99.3, 10.9),
        (1.68, 0.36),
        (0.78, 0.29),
        (0.45, 0.12),
        (1.15, 0.41),
        (7.40, 1.60),
        (0.68, 0.11),
        (1.68, 0.27),
        (630.0, 115.0),
    ],
];

/// 13-feature, 3-class wine stand-in with class-conditional Gaussian features.
pub fn synthetic_wine(n_per_class: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let mut pts = Vec::with_capacity(3 * n_per_class);
    for (k, stats) in WINE_STATS.iter().enumerate() {
        for _ in 0..n_per_class {
            let x = stats
                .iter()
                .map(|(m, s)| (m + s * normal(&mut rng)).max(0.01))
                .collect();
            pts.push(DataPoint::new(x, Some(k as f64)));
        }
    }
    Dataset::new(
        pts,
        WINE_FEATURES.iter().map(|s| s.to_string()).collect(),
        Task::Classification { n_classes: 3 },
    )
    .expect("fixed dimension")
}

pub const HOUSING_FEATURES: [&str; 5] = ["area", "bedrooms", "bathrooms", "stories", "parking"];

/// House-price stand-in with a saturating area effect and an interaction term,
/// so linear and nonlinear regressors disagree away from the bulk of the data.
pub fn synthetic_housing(n: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let pts = (0..n)
        .map(|_| {
            let area = (5000.0 + 2000.0 * normal(&mut rng)).clamp(1500.0, 16000.0);
            let bedrooms = rng.random_range(1..=5) as f64;
            let bathrooms = rng.random_range(1..=3) as f64;
            let stories = rng.random_range(1..=4) as f64;
            let parking = rng.random_range(0..=3) as f64;
            let price = 4.0
                + 3.0 * (area / 6000.0).tanh()
                + 0.3 * bedrooms
                + 0.8 * bathrooms
                + 0.25 * stories * bathrooms
                + 0.2 * parking
                + 0.3 * normal(&mut rng);
            DataPoint::new(vec![area, bedrooms, bathrooms, stories, parking], Some(price))
        })
        .collect();
    Dataset::new(
        pts,
        HOUSING_FEATURES.iter().map(|s| s.to_string()).collect(),
        Task::Regression,
    )
    .expect("fixed dimension")
}

/// Standard-normal features with a noisy linear response.
pub fn gaussian_regression(n: usize, d: usize, noise_sd: f64, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let beta: Vec<f64> = (0..d).map(|j| 1.0 - 0.4 * j as f64).collect();
    let pts = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
            let y = crate::math::dot(&beta, &x) + 0.5 + noise_sd * normal(&mut rng);
            DataPoint::new(x, Some(y))
        })
        .collect();
    Dataset::new(pts, names("x", d), Task::Regression).expect("fixed dimension")
}

/// Writes features plus a trailing `label` column as CSV.
pub fn write_csv<W: std::io::Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = data.feature_names().to_vec();
    header.push("label".into());
    w.write_record(&header)?;
    for p in data.points() {
        let mut row: Vec<String> = p.features.iter().map(|v| format!("{v}")).collect();
        row.push(p.label.map(|l| format!("{l}")).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::{fit_logistic_regression, LogisticConfig, Predictor};

    #[test]
    fn noiseless_circles_have_exact_radius() {
        let d = concentric_circles(50, 1.0, 2.0, 0.0, 3).unwrap();
        for p in d.points() {
            let r = crate::math::norm(&p.features);
            let want = if p.label == Some(0.0) { 1.0 } else { 2.0 };
            assert!((r - want).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_radii_rejected() {
        assert!(concentric_circles(5, 2.0, 1.0, 0.1, 0).is_err());
        assert!(concentric_circles(5, 0.0, 1.0, 0.1, 0).is_err());
        assert!(concentric_circles(5, 1.0, 2.0, -0.1, 0).is_err());
    }

    #[test]
    fn generators_are_seed_deterministic() {
        assert_eq!(
            concentric_circles(20, 1.0, 2.0, 0.1, 7).unwrap(),
            concentric_circles(20, 1.0, 2.0, 0.1, 7).unwrap()
        );
        assert_eq!(synthetic_credit(50, 1), synthetic_credit(50, 1));
        assert_ne!(synthetic_credit(50, 1), synthetic_credit(50, 2));
        assert_eq!(synthetic_wine(5, 3), synthetic_wine(5, 3));
        assert_eq!(xor(40, 0.2, 3), xor(40, 0.2, 3));
        assert_eq!(synthetic_housing(30, 4), synthetic_housing(30, 4));
    }

    fn auc(scores: &[f64], labels: &[usize]) -> f64 {
        let pos: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == 1)
            .map(|(s, _)| *s)
            .collect();
        let neg: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == 0)
            .map(|(s, _)| *s)
            .collect();
        let mut wins = 0.0;
        for p in &pos {
            for n in &neg {
                wins += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        wins / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn synthetic_credit_carries_signal() {
        let (data, _) = synthetic_credit(5000, 1).standardized();
        let m: Predictor = fit_logistic_regression(&data, &LogisticConfig::default())
            .unwrap()
            .into();
        let scores: Vec<f64> = data
            .points()
            .iter()
            .map(|p| m.decision_value(&p.features).unwrap())
            .collect();
        let a = auc(&scores, &data.class_labels().unwrap());
        assert!(a >= 0.75, "AUC {a}");
    }

    #[test]
    fn identical_blobs_carry_no_signal() {
        let train = gaussian_blobs(&[vec![0.0, 0.0], vec![0.0, 0.0]], 500, 1.0, 1);
        let test = gaussian_blobs(&[vec![0.0, 0.0], vec![0.0, 0.0]], 500, 1.0, 2);
        let m: Predictor = fit_logistic_regression(&train, &LogisticConfig::default())
            .unwrap()
            .into();
        let acc = test
            .points()
            .iter()
            .filter(|p| m.predict(&p.features).unwrap() == p.label.unwrap())
            .count() as f64
            / test.len() as f64;
        assert!((acc - 0.5).abs() <= 0.05, "accuracy {acc}");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let d = xor(4, 0.0, 0);
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().next().unwrap(), "x,y,label");
        assert_eq!(s.lines().count(), 5);
    }
}
