mod common;

use common::*;
use modelprobe::latent::{pushforward_probe, LatentMap};
use modelprobe::probing::{ProbeFunction, Regularizer};
use modelprobe::sampler::{run_chains, ChainConfig};
use proptest::prelude::*;

fn decoder() -> LatentMap {
    LatentMap::affine(
        vec![vec![0.9, -0.4], vec![0.3, 0.8], vec![-0.5, 0.6]],
        vec![0.2, -0.1, 0.0],
    )
    .unwrap()
    .then_tanh()
    .then_affine(
        vec![vec![1.2, -0.7, 0.4], vec![0.1, 0.9, 1.1], vec![-0.6, 0.3, 0.8]],
        vec![0.0, 0.5, -0.5],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn chain_rule_matches_finite_differences(z in prop::collection::vec(-2.5f64..2.5, 2)) {
        let g = quadratic(vec![0.3, -0.2, 0.5], vec![vec![2.0, 0.3, 0.0], vec![0.3, 1.0, -0.2], vec![0.0, -0.2, 1.5]]);
        let h = pushforward_probe(&g, &decoder()).unwrap();
        let exact = h.gradient(&z).unwrap();
        let fd = fd_gradient(|v| h.evaluate(v), &z, 1e-5);
        prop_assert!(close_rel(&exact, &fd, 1e-4), "{:?} vs {:?}", exact, fd);
    }
}

#[test]
fn affine_pushforward_of_quadratic() {
    // G = 0.5 |x - c|^2, phi(z) = M z + b: H has precision M'M, mode solving M'M z = M'(c - b)
    let m = vec![vec![1.0, 0.5], vec![-0.3, 1.2]];
    let b = vec![0.4, -0.2];
    let c = vec![1.0, 2.0];
    let phi = LatentMap::affine(m.clone(), b.clone()).unwrap();
    let g = quadratic(c.clone(), identity(2));
    let h = pushforward_probe(&g, &phi).unwrap();
    // solve the 2x2 system by Cramer's rule
    let mtm = [
        [
            m[0][0] * m[0][0] + m[1][0] * m[1][0],
            m[0][0] * m[0][1] + m[1][0] * m[1][1],
        ],
        [
            m[0][1] * m[0][0] + m[1][1] * m[1][0],
            m[0][1] * m[0][1] + m[1][1] * m[1][1],
        ],
    ];
    let r = [c[0] - b[0], c[1] - b[1]];
    let rhs = [m[0][0] * r[0] + m[1][0] * r[1], m[0][1] * r[0] + m[1][1] * r[1]];
    let det = mtm[0][0] * mtm[1][1] - mtm[0][1] * mtm[1][0];
    let z_star = [
        (rhs[0] * mtm[1][1] - mtm[0][1] * rhs[1]) / det,
        (mtm[0][0] * rhs[1] - rhs[0] * mtm[1][0]) / det,
    ];
    assert!(h.gradient(&z_star).unwrap().iter().all(|v| v.abs() < 1e-12));
    let cfg = ChainConfig::new(0.5, 0.2, 30_000, 12).unwrap();
    let rep = run_chains(&vec![vec![0.0, 0.0]; 4], &h, &cfg).unwrap();
    // pushing the latent mean through an affine map gives the data-space mean, here c
    let pushed: Vec<f64> = phi.apply(&rep.mean);
    for j in 0..2 {
        let se = rep.batch_means_se(j, 40);
        assert!((rep.mean[j] - z_star[j]).abs() <= 3.0 * se, "latent coordinate {j}");
        assert!((pushed[j] - c[j]).abs() < 0.1);
    }
}

#[test]
fn plane_embedding_keeps_samples_on_plane() {
    // z -> (z1, z2, 0) plus a fixed offset; target point sits off the plane
    let phi = LatentMap::affine(
        vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]],
        vec![0.5, -0.5, 1.0],
    )
    .unwrap();
    let target = vec![2.0, 1.0, 4.0];
    let g = ProbeFunction::from_regularizer(Regularizer::new(target.clone(), 1.0, 2.0).unwrap());
    let h = pushforward_probe(&g, &phi).unwrap();
    let cfg = ChainConfig::new(0.05, 0.1, 20_000, 3).unwrap();
    let rep = run_chains(&vec![vec![0.0, 0.0]; 2], &h, &cfg).unwrap();
    let pushed: Vec<Vec<f64>> = rep.samples.iter().map(|z| phi.apply(z)).collect();
    assert!(pushed.iter().all(|x| (x[2] - 1.0).abs() < 1e-10));
    let n = pushed.len() as f64;
    let mean: Vec<f64> = (0..3).map(|j| pushed.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    // orthogonal projection of the target onto the plane x3 = 1
    assert!((mean[0] - 2.0).abs() < 0.05 && (mean[1] - 1.0).abs() < 0.05, "{mean:?}");
}
