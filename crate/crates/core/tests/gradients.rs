mod common;

use camworld::losses::{grad_and_curvature, grad_loss_total, loss_total, LossWeights};
use common::{grad_case, worst_relative_error, GradCase};

#[test]
fn gradient_matches_central_differences() {
    for seed in 0..20 {
        let c = grad_case(seed);
        let b = loss_total(&c.spec, &c.params, &c.targets, &c.camera, &c.weights).unwrap();
        assert!(b.l2d > 0.0 && b.l3d > 0.0 && b.lv > 0.0 && b.lmix > 0.0);
        let e = worst_relative_error(&c, 1e-5);
        assert!(e < 1e-4, "seed {seed}: relative error {e:e}");
    }
}

#[test]
fn each_term_alone_matches_central_differences() {
    let base = grad_case(99);
    let only = |l2d, l3d, lv, lmix| LossWeights {
        l2d,
        l3d,
        lv,
        lmix,
        ..base.weights
    };
    for w in [only(1.0, 0.0, 0.0, 0.0), only(0.0, 1.0, 0.0, 0.0), only(0.0, 0.0, 1.0, 0.0), only(0.0, 0.0, 0.0, 1.0)] {
        let c = GradCase { weights: w, ..grad_case(99) };
        let e = worst_relative_error(&c, 1e-5);
        assert!(e < 1e-4, "{w:?}: {e:e}");
    }
}

#[test]
fn gauss_newton_gradient_agrees_and_curvature_is_psd() {
    for seed in 0..5 {
        let c = grad_case(seed);
        let (_, g) = grad_loss_total(&c.spec, &c.params, &c.targets, &c.camera, &c.weights).unwrap();
        let (_, g2, h) = grad_and_curvature(&c.spec, &c.params, &c.targets, &c.camera, &c.weights).unwrap();
        assert_eq!(g, g2);
        assert!((&h - h.transpose()).amax() < 1e-9 * h.amax());
        let eig = h.clone().symmetric_eigen();
        assert!(eig.eigenvalues.min() > -1e-9 * h.amax());
    }
}
