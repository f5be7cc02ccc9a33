use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sfda::analysis::{a_distance, SplitSpec};

fn gaussian(n: usize, d: usize, shift: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |(_, j)| {
        let z: f64 = StandardNormal.sample(rng);
        z + if j == 0 { shift } else { 0.0 }
    })
}

/// Unit-variance Gaussians whose means sit `s` apart have Bayes error `Phi(-s/2)`.
/// `s = 1.6832` puts it at 0.2, so the ideal proxy distance is `2(1 - 0.4) = 1.2`.
#[test]
fn known_bayes_error_gives_expected_distance() {
    let mut sum = 0.0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(1000, 2, 0.0, &mut rng);
        let b = gaussian(1000, 2, 1.6832, &mut rng);
        let r = a_distance(a.view(), b.view(), SplitSpec::default(), seed).unwrap();
        sum += r.a_distance;
    }
    let mean = sum / 10.0;
    assert!((mean - 1.2).abs() <= 0.1, "mean a-distance {mean}");
}

#[test]
fn same_distribution_is_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = gaussian(300, 8, 0.0, &mut rng);
    let b = gaussian(300, 8, 0.0, &mut rng);
    let r = a_distance(a.view(), b.view(), SplitSpec::default(), 1).unwrap();
    assert!(r.a_distance <= 0.2, "{}", r.a_distance);
}

#[test]
fn common_rotation_barely_moves_the_estimate() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let d = 4;
        let a = gaussian(200, d, 0.0, &mut rng);
        let b = gaussian(200, d, 1.0, &mut rng);
        let m = nalgebra::DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
        let q = m.qr().q();
        let rot = Array2::from_shape_fn((d, d), |(i, j)| q[(i, j)]);
        let base = a_distance(a.view(), b.view(), SplitSpec::default(), seed).unwrap();
        let turned = a_distance(
            a.dot(&rot).view(),
            b.dot(&rot).view(),
            SplitSpec::default(),
            seed,
        )
        .unwrap();
        assert!(
            (base.a_distance - turned.a_distance).abs() < 0.05,
            "seed {seed}: {} vs {}",
            base.a_distance,
            turned.a_distance
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn result_respects_its_formula(shift in 0.0f64..4.0, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(40, 3, 0.0, &mut rng);
        let b = gaussian(40, 3, shift, &mut rng);
        let r = a_distance(a.view(), b.view(), SplitSpec::default(), seed).unwrap();
        prop_assert!((0.0..=0.5).contains(&r.classifier_error));
        prop_assert_eq!(r.a_distance, 2.0 * (1.0 - 2.0 * r.classifier_error));
        prop_assert!((0.0..=2.0).contains(&r.a_distance));
    }
}
