mod common;

use common::*;
use modelprobe::datasets::concentric_circles;
use modelprobe::latent::{pushforward_probe, LatentMap};
use modelprobe::predictors::{
    fit_kernel_svm, DecisionTree, GradientTarget, Kernel, MlpHead, Predictor, SvmConfig, TreeNode,
};
use modelprobe::probing::*;
use modelprobe::sampler::draw_param_ensemble;
use modelprobe::types::Temperature;
use proptest::prelude::*;
use std::sync::OnceLock;

const DIM: usize = 2;

struct Zoo {
    logistic: Predictor,
    mlp2: Predictor,
    mlp3: Predictor,
    mlp_reg: Predictor,
    linear: Predictor,
    svm_rbf: Predictor,
    svm_poly: Predictor,
    stump: Predictor,
}

fn zoo() -> &'static Zoo {
    static ZOO: OnceLock<Zoo> = OnceLock::new();
    ZOO.get_or_init(|| {
        let circles = concentric_circles(40, 1.0, 2.0, 0.1, 3).unwrap();
        Zoo {
            logistic: logistic(vec![1.2, -0.7], 0.3),
            mlp2: random_mlp(&[DIM, 6, 5, 2], MlpHead::Classification { n_classes: 2 }, 1),
            mlp3: random_mlp(&[DIM, 7, 3], MlpHead::Classification { n_classes: 3 }, 2),
            mlp_reg: random_mlp(&[DIM, 6, 1], MlpHead::Regression, 3),
            linear: linear(vec![0.4, 1.1], -0.2),
            svm_rbf: fit_kernel_svm(&circles, &SvmConfig::new(Kernel::Rbf { gamma: 1.0 }, 1.0))
                .unwrap()
                .into(),
            svm_poly: fit_kernel_svm(&circles, &SvmConfig::new(Kernel::cubic(), 1.0))
                .unwrap()
                .into(),
            stump: DecisionTree {
                n_features: DIM,
                n_classes: 2,
                nodes: vec![
                    TreeNode::Split {
                        feature: 0,
                        threshold: 0.1,
                        left: 1,
                        right: 2,
                    },
                    TreeNode::Leaf { proba: vec![0.8, 0.2] },
                    TreeNode::Leaf { proba: vec![0.3, 0.7] },
                ],
            }
            .into(),
        }
    })
}

fn probes() -> &'static Vec<(&'static str, ProbeFunction)> {
    static PROBES: OnceLock<Vec<(&'static str, ProbeFunction)>> = OnceLock::new();
    PROBES.get_or_init(|| {
        let z = zoo();
        let reg = || Some(Regularizer::new(vec![0.3, -0.4], 0.2, 2.0).unwrap());
        let reg15 = || {
            Some(
                Regularizer::new(vec![5.0, 5.0], 0.5, 1.5)
                    .unwrap()
                    .with_weights(vec![1.0, 0.3])
                    .unwrap(),
            )
        };
        let ens_cls = draw_param_ensemble(&z.mlp2, 0.2, 6, 7).unwrap();
        let ens_reg = draw_param_ensemble(&z.mlp_reg, 0.2, 6, 8).unwrap();
        let ens_log = draw_param_ensemble(&z.logistic, 0.3, 5, 9).unwrap();
        let data = modelprobe::datasets::gaussian_regression(100, DIM, 0.3, 4);
        let quad = modelprobe::analytic_lr::lr_data_energy(&data, 1.0, Temperature::new(0.5).unwrap()).unwrap();
        let phi = LatentMap::affine(
            vec![vec![0.8, -0.3], vec![0.2, 1.1], vec![0.5, 0.5]],
            vec![0.0, 0.1, -0.1],
        )
        .unwrap()
        .then_tanh()
        .then_affine(vec![vec![1.0, -0.5, 0.3], vec![0.4, 0.9, -1.2]], vec![0.2, 0.0])
        .unwrap();
        let inner = fixed_label_g(&z.mlp3, 2.0, reg()).unwrap();
        let norm = |output| RiskyMode::Norm {
            alpha: 0.3,
            r: 2.0,
            output,
        };
        vec![
            ("fixed-logistic", fixed_label_g(&z.logistic, 1.0, reg()).unwrap()),
            ("fixed-mlp3", fixed_label_g(&z.mlp3, 1.0, reg15()).unwrap()),
            ("fixed-mlp-reg", fixed_label_g(&z.mlp_reg, 0.7, reg()).unwrap()),
            ("fixed-linear", fixed_label_g(&z.linear, -1.0, None).unwrap()),
            ("fixed-svm", fixed_label_g(&z.svm_rbf, 0.0, reg()).unwrap()),
            (
                "ensemble-fixed",
                ensemble_fixed_label_g(&ens_cls, &z.mlp2, 1.0, reg()).unwrap(),
            ),
            (
                "contrast-soft",
                contrast_g(&z.logistic, &z.mlp2, TargetMode::Soft, reg()).unwrap(),
            ),
            (
                "contrast-hard",
                contrast_g(&z.mlp2, &z.logistic, TargetMode::Hard, None).unwrap(),
            ),
            (
                "contrast-svms",
                contrast_g(&z.svm_rbf, &z.svm_poly, TargetMode::Soft, None).unwrap(),
            ),
            (
                "contrast-tree-ref",
                contrast_g(&z.mlp2, &z.stump, TargetMode::Auto, None).unwrap(),
            ),
            (
                "exp-regressors",
                regression_contrast_g(&z.mlp_reg, &z.linear, 0.8, reg()).unwrap(),
            ),
            (
                "exp-multiclass",
                regression_contrast_g(
                    &z.mlp3,
                    &random_mlp(&[DIM, 4, 3], MlpHead::Classification { n_classes: 3 }, 11),
                    0.5,
                    None,
                )
                .unwrap(),
            ),
            (
                "risky-decision",
                risky_g(&z.svm_poly, norm(RiskyOutput::Decision), None).unwrap(),
            ),
            (
                "risky-proba",
                risky_g(&z.mlp3, norm(RiskyOutput::Proba(1)), reg()).unwrap(),
            ),
            (
                "risky-regressor",
                risky_g(
                    &z.mlp_reg,
                    RiskyMode::Norm {
                        alpha: 0.1,
                        r: 3.0,
                        output: RiskyOutput::Decision,
                    },
                    None,
                )
                .unwrap(),
            ),
            ("risky-entropy", risky_g(&z.mlp3, RiskyMode::Entropy, None).unwrap()),
            (
                "param-sensitive",
                param_sensitive_g(&ens_cls, &z.mlp2, TargetMode::Soft, reg()).unwrap(),
            ),
            (
                "param-sensitive-logistic",
                param_sensitive_g(&ens_log, &z.logistic, TargetMode::Soft, None).unwrap(),
            ),
            (
                "regression-sensitive",
                regression_sensitive_g(&ens_reg, &z.mlp_reg, 0.3, None).unwrap(),
            ),
            ("certainty-pin", certainty_pin_g(&z.mlp3, 0, 2.5).unwrap()),
            (
                "entropy-plus-pin",
                risky_g(&z.mlp3, RiskyMode::Entropy, None)
                    .unwrap()
                    .plus(certainty_pin_g(&z.mlp3, 2, 0.7).unwrap())
                    .unwrap(),
            ),
            ("lr-data-energy", quad),
            ("pushforward", pushforward_probe(&inner, &phi).unwrap()),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, DIM)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn probe_gradients_match_finite_differences(x in point()) {
        for (name, g) in probes() {
            prop_assert_eq!(g.gradient_mode(), GradientMode::Exact, "{}", name);
            let exact = g.gradient(&x).unwrap();
            let checked = fd_check(|y| g.evaluate(y), &x, &exact, 1e-4);
            prop_assert!(checked.is_ok(), "{}: {:?} vs {:?}", name, exact, checked);
        }
    }

    #[test]
    fn additivity_of_terms(x in point()) {
        for (name, g) in probes() {
            let total: f64 = g.term_values(&x).iter().sum();
            prop_assert!((total - g.evaluate(&x)).abs() <= 1e-12 * total.abs().max(1.0), "{}", name);
            prop_assert!(g.evaluate(&x).is_finite());
        }
    }

    #[test]
    fn predictor_gradients_match_finite_differences(x in point()) {
        let z = zoo();
        for (p, target) in [
            (&z.logistic, GradientTarget::Proba(1)),
            (&z.mlp2, GradientTarget::Decision),
            (&z.mlp3, GradientTarget::Logit(2)),
            (&z.mlp3, GradientTarget::Proba(0)),
            (&z.mlp_reg, GradientTarget::Value),
            (&z.linear, GradientTarget::Value),
            (&z.svm_rbf, GradientTarget::Decision),
            (&z.svm_poly, GradientTarget::Proba(1)),
        ] {
            let exact = p.input_gradient(&x, target).unwrap();
            let f = |y: &[f64]| match target {
                GradientTarget::Value => p.value(y).unwrap(),
                GradientTarget::Decision => p.decision_value(y).unwrap(),
                GradientTarget::Logit(k) => p.logits(y).unwrap()[k],
                GradientTarget::Proba(k) => p.predict_proba(y).unwrap()[k],
            };
            let checked = fd_check(f, &x, &exact, 1e-4);
            prop_assert!(checked.is_ok(), "{:?} {:?}: {:?} vs {:?}", p.kind(), target, exact, checked);
        }
    }

    #[test]
    fn regularizer_symmetry_and_scaling(x in point(), c in 0.1f64..10.0, r in 1.0f64..4.0) {
        let anchor = vec![0.5, -1.0];
        let reg = Regularizer::new(anchor.clone(), 0.7, r).unwrap();
        let mirrored: Vec<f64> = x.iter().zip(&anchor).map(|(v, a)| 2.0 * a - v).collect();
        prop_assert!((reg.value(&x) - reg.value(&mirrored)).abs() <= 1e-12 * reg.value(&x).max(1.0));
        let scaled = Regularizer::new(anchor, 0.7 * c, r).unwrap();
        prop_assert!((scaled.value(&x) - c * reg.value(&x)).abs() <= 1e-12 * scaled.value(&x).max(1.0));
    }
}

#[test]
fn tree_probe_needs_smoothing() {
    let z = zoo();
    let g = risky_g(&z.stump, RiskyMode::Entropy, None).unwrap();
    assert_eq!(g.gradient_mode(), GradientMode::Smoothed);
    let g = contrast_g(&z.stump, &z.logistic, TargetMode::Soft, None).unwrap();
    assert_eq!(g.gradient_mode(), GradientMode::Smoothed);
    assert!(g.evaluate(&[0.0, 0.0]).is_finite());
}

#[test]
fn ensemble_value_is_member_average() {
    let z = zoo();
    let ens = draw_param_ensemble(&z.mlp2, 0.3, 9, 21).unwrap();
    let g = ensemble_fixed_label_g(&ens, &z.mlp2, 0.0, None).unwrap();
    let x = [0.4, -1.3];
    let by_hand: f64 = ens
        .members
        .iter()
        .map(|m| -z.mlp2.with_params(m).unwrap().predict_proba(&x).unwrap()[0].ln())
        .sum::<f64>()
        / 9.0;
    assert!((g.evaluate(&x) - by_hand).abs() < 1e-12);
}
