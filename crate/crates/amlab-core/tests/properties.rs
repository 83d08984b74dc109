//! Property tests for the algebraic invariants the modules promise.

use proptest::prelude::*;

use amlab_core::loss::{loss_forward_backward, Batch, ClassifierHead, LossConfig, LossVariant};
use amlab_core::margin::{am_boundary, cosine_to_angular_margin, psi_a_softmax, psi_am};
use amlab_core::metrics::{cosine_similarity, roc, vr_at_far};
use amlab_core::numeric::{stable_logsumexp, Matrix};

fn finite_vec(len: usize, range: f64) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-range..range, len..=len)
}

proptest! {
    // logsumexp(v + k) == logsumexp(v) + k for any scalar shift.
    #[test]
    fn logsumexp_shift_identity(
        v in proptest::collection::vec(-100.0f64..100.0, 1..12),
        k in -500.0f64..500.0,
    ) {
        let base = stable_logsumexp(&v).unwrap();
        let shifted: Vec<f64> = v.iter().map(|x| x + k).collect();
        let moved = stable_logsumexp(&shifted).unwrap();
        prop_assert!((moved - (base + k)).abs() < 1e-12 * (1.0 + base.abs() + k.abs()));
    }

    // (A B) C == A (B C) within 1e-9 elementwise on small triples.
    #[test]
    fn matmul_associativity(
        a in finite_vec(6, 3.0),
        b in finite_vec(6, 3.0),
        c in finite_vec(6, 3.0),
    ) {
        let a = Matrix::from_vec(2, 3, a).unwrap();
        let b = Matrix::from_vec(3, 2, b).unwrap();
        let c = Matrix::from_vec(2, 3, c).unwrap();
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right).unwrap() < 1e-9);
    }

    // The piecewise transform is continuous at every branch boundary.
    #[test]
    fn psi_a_softmax_branch_continuity(m in 1u32..6, k in 1u32..6, lambda in 0.0f64..20.0) {
        prop_assume!(k < m);
        let boundary = k as f64 * core::f64::consts::PI / m as f64;
        let left = psi_a_softmax(boundary - 1e-9, m, lambda).unwrap();
        let right = psi_a_softmax(boundary + 1e-9, m, lambda).unwrap();
        prop_assert!((left - right).abs() < 1e-7);
    }

    // The additive transform never rises above the cosine, with
    // equality exactly at m = 0.
    #[test]
    fn psi_am_dominated_by_cosine(x in -1.0f64..1.0, m in 0.0f64..0.99) {
        let shifted = psi_am(x, m).unwrap();
        prop_assert!(shifted <= x);
        if m == 0.0 {
            prop_assert_eq!(shifted, x);
        } else {
            prop_assert!(shifted < x);
        }
    }

    // The equivalent angular margin grows with the cosine margin.
    #[test]
    fn angular_margin_increases_with_m(theta_deg in 1.0f64..90.0) {
        let theta = theta_deg.to_radians();
        let mut prev = -1.0;
        for i in 0..8 {
            let m = 0.05 + i as f64 * 0.05;
            let margin = cosine_to_angular_margin(theta, m).unwrap();
            prop_assert!(margin > prev);
            prev = margin;
        }
    }

    // Both boundary equations and the weight-difference identity hold
    // whenever the margin admits a boundary.
    #[test]
    fn am_boundary_equations(
        t1 in 0.0f64..core::f64::consts::TAU,
        t2 in 0.0f64..core::f64::consts::TAU,
        m in 0.0f64..0.6,
    ) {
        let w1 = [t1.cos(), t1.sin()];
        let w2 = [t2.cos(), t2.sin()];
        if let Ok(geom) = am_boundary(w1, w2, m) {
            let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
            prop_assert!((dot(w1, geom.p1) - m - dot(w2, geom.p1)).abs() < 1e-10);
            prop_assert!((dot(w2, geom.p2) - m - dot(w1, geom.p2)).abs() < 1e-10);
            prop_assert!(((dot(w1, geom.p1) - dot(w2, geom.p1)) - m).abs() < 1e-10);
            prop_assert!(geom.margin_width_rad >= 0.0);
        }
    }

    // Cosine similarity ignores positive rescaling of either side.
    #[test]
    fn cosine_scale_invariance(
        v in finite_vec(4, 5.0),
        w in finite_vec(4, 5.0),
        c in 0.01f64..100.0,
    ) {
        let vn: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let wn: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(vn > 1e-6 && wn > 1e-6);
        let base = cosine_similarity(&v, &w).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        prop_assert!((cosine_similarity(&scaled, &w).unwrap() - base).abs() < 1e-9);
    }

    // ROC operating points are monotone and the verification rate read
    // off them never decreases as the FAR budget loosens.
    #[test]
    fn roc_and_vr_monotonicity(
        genuine in proptest::collection::vec(-1.0f64..1.0, 1..8),
        impostor in proptest::collection::vec(-1.0f64..1.0, 1..8),
    ) {
        let curve = roc(&genuine, &impostor).unwrap();
        for pair in curve.points().windows(2) {
            prop_assert!(pair[0].threshold < pair[1].threshold);
            prop_assert!(pair[0].far >= pair[1].far);
            prop_assert!(pair[0].vr >= pair[1].vr);
        }
        let mut prev = -1.0;
        for i in 0..=10 {
            let v = vr_at_far(&curve, i as f64 / 10.0);
            prop_assert!(v >= prev);
            prev = v;
        }
    }

    // With feature normalization the loss ignores per-sample positive
    // rescaling of the inputs.
    #[test]
    fn normalized_loss_ignores_feature_scale(
        raw in finite_vec(8, 2.0),
        scales in proptest::collection::vec(0.05f64..20.0, 2..=2),
        label in 0usize..2,
    ) {
        let features = Matrix::from_vec(2, 4, raw).unwrap();
        let norms_ok = (0..2).all(|i| {
            features.row(i).iter().map(|x| x * x).sum::<f64>().sqrt() > 1e-3
        });
        prop_assume!(norms_ok);
        let head = ClassifierHead::new(Matrix::identity(4)).unwrap();
        let config = LossConfig::new(LossVariant::AmSoftmax).with_s(12.0).with_m_add(0.2);
        let labels = vec![label, 1 - label];
        let batch = Batch::new(features.clone(), labels.clone()).unwrap();
        let base = loss_forward_backward(&batch, &head, &config, 0).unwrap().loss;
        let mut scaled = features;
        for i in 0..2 {
            for k in 0..4 {
                scaled.set(i, k, scaled.get(i, k) * scales[i]);
            }
        }
        let rescaled = Batch::new(scaled, labels).unwrap();
        let loss = loss_forward_backward(&rescaled, &head, &config, 0).unwrap().loss;
        prop_assert!((loss - base).abs() < 1e-12 * (1.0 + base));
    }
}
