use ndarray::{Array1, Array2};
use proptest::prelude::*;
use sfda::math::{one_hot, softmax_rows};
use sfda::objectives::{
    consistency_loss, frobenius_norm, mixup_pair, mkd_loss, nm_loss, nuclear_norm_check,
    pseudo_ce_loss, ClassificationResponse, PseudoTargets, WeakNormalization,
};

fn logits(b: usize, k: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-6.0f64..6.0, b * k)
        .prop_map(move |v| Array2::from_shape_vec((b, k), v).unwrap())
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..24, 2usize..10)
}

proptest! {
    #[test]
    fn frobenius_norm_is_bracketed((b, k) in dims(), seed in any::<u64>()) {
        let z = Array2::from_shape_fn((b, k), |(i, j)| (((seed ^ (i * 31 + j) as u64) % 97) as f64 - 48.0) / 8.0);
        let a = ClassificationResponse::from_logits(z.view()).unwrap();
        let fro = frobenius_norm(&a);
        prop_assert!(fro <= (b as f64).sqrt() + 1e-12);
        prop_assert!(fro >= (b as f64 / k as f64).sqrt() - 1e-12);
    }

    #[test]
    fn nuclear_norm_sits_between_fro_and_rank_scaled_fro(z in (1usize..16, 2usize..8).prop_flat_map(|(b, k)| logits(b, k))) {
        let a = softmax_rows(z.view());
        let c = nuclear_norm_check(a.view()).unwrap();
        prop_assert!(c.fro <= c.nuc + 1e-9);
        prop_assert!(c.nuc <= (c.rank as f64).sqrt() * c.fro + 1e-9);
        prop_assert!(c.rank <= a.nrows().min(a.ncols()));
    }

    #[test]
    fn nm_loss_is_minus_fro(z in (1usize..16, 2usize..8).prop_flat_map(|(b, k)| logits(b, k))) {
        let a = ClassificationResponse::from_logits(z.view()).unwrap();
        let l = nm_loss(z.view()).unwrap();
        prop_assert!((l.value + frobenius_norm(&a)).abs() < 1e-12);
        prop_assert_eq!(l.grad.dim(), z.dim());
    }

    #[test]
    fn consistency_is_nonnegative(
        (weak, strong) in (1usize..12, 2usize..6).prop_flat_map(|(b, k)| (logits(b, k), logits(b, k))),
        renorm in any::<bool>(),
    ) {
        let probs = softmax_rows(weak.view());
        let global = probs.mean_axis(ndarray::Axis(0)).unwrap();
        let mode = if renorm { WeakNormalization::Renormalize } else { WeakNormalization::Softmax };
        let out = consistency_loss(probs.view(), strong.view(), global.view(), mode).unwrap();
        prop_assert!(out.value >= 0.0);
        for row in out.target.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mkd_is_linear_in_lambda(
        (z, a, b) in (1usize..8, 2usize..6).prop_flat_map(|(n, k)| (logits(n, k), logits(n, k), logits(n, k))),
        lam in 0.0f64..=1.0,
    ) {
        let (ya, yb) = (softmax_rows(a.view()), softmax_rows(b.view()));
        let l = mkd_loss(z.view(), ya.view(), yb.view(), lam).unwrap().value;
        let l1 = mkd_loss(z.view(), ya.view(), yb.view(), 1.0).unwrap().value;
        let l0 = mkd_loss(z.view(), ya.view(), yb.view(), 0.0).unwrap().value;
        prop_assert!((l - (lam * l1 + (1.0 - lam) * l0)).abs() < 1e-9);
    }

    #[test]
    fn mixup_keeps_labels_on_the_simplex(lam in 0.0f64..=1.0, i in 0usize..5, j in 0usize..5) {
        let yi = one_hot(&[i], 5).row(0).to_owned();
        let yj = one_hot(&[j], 5).row(0).to_owned();
        let xi = Array1::from_elem(12, 1.0);
        let xj = Array1::zeros(12);
        let (x, y) = mixup_pair(xi.view(), yi.view(), xj.view(), yj.view(), lam).unwrap();
        prop_assert!((y.sum() - 1.0).abs() < 1e-12);
        prop_assert!(x.iter().all(|&v| (v - lam).abs() < 1e-12));
    }
}

#[test]
fn one_hot_responses_attain_the_upper_bound() {
    for labels in [vec![0, 1, 2, 0], vec![3, 3, 3], vec![1]] {
        let a = ClassificationResponse::new(one_hot(&labels, 4)).unwrap();
        assert!((frobenius_norm(&a) - (labels.len() as f64).sqrt()).abs() < 1e-12);
    }
    let soft = ClassificationResponse::new(Array2::from_elem((3, 4), 0.25)).unwrap();
    assert!(frobenius_norm(&soft) < 3f64.sqrt());
}

#[test]
fn gradient_descent_on_nm_approaches_minus_sqrt_b() {
    let mut z = Array2::from_shape_fn((6, 3), |(i, j)| 0.1 * ((i * 3 + j) as f64).sin());
    let mut last = f64::INFINITY;
    for _ in 0..2000 {
        let l = nm_loss(z.view()).unwrap();
        assert!(l.value <= last + 1e-12);
        last = l.value;
        z = &z - &(&l.grad * 20.0);
    }
    assert!(last < -(6f64.sqrt() - 0.05), "nm loss stalled at {last}");
    assert!(last >= -6f64.sqrt() - 1e-12);
}

#[test]
fn uniform_prediction_cross_entropy_is_log_k() {
    let z = Array2::zeros((5, 4));
    let labels = [0, 1, 2, 3, 0];
    let l = pseudo_ce_loss(z.view(), PseudoTargets::Hard(&labels)).unwrap();
    assert!((l.value - 4f64.ln()).abs() < 1e-12);
    let soft = Array2::from_elem((5, 4), 0.25);
    let l = pseudo_ce_loss(z.view(), PseudoTargets::Soft(soft.view())).unwrap();
    assert!((l.value - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn invalid_inputs_are_rejected() {
    let z = Array2::zeros((2, 3));
    assert!(pseudo_ce_loss(z.view(), PseudoTargets::Hard(&[0, 5])).is_err());
    assert!(pseudo_ce_loss(z.view(), PseudoTargets::Hard(&[0])).is_err());
    let y = Array2::from_elem((2, 3), 1.0 / 3.0);
    assert!(mkd_loss(z.view(), y.view(), y.view(), 1.5).is_err());
    let bad = Array2::from_elem((2, 3), 0.5);
    let g = Array1::from_elem(3, 1.0 / 3.0);
    assert!(consistency_loss(bad.view(), z.view(), g.view(), WeakNormalization::Softmax).is_err());
}
