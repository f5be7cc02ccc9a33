use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sfda::data::{
    augment_pair, make_synthetic_suite, render_shape, AugmentationPair, Corruption, Image,
    Pipeline, SyntheticShiftSpec, SHAPES,
};

fn spec(corruptions: Vec<Corruption>, seed: u64) -> SyntheticShiftSpec {
    SyntheticShiftSpec {
        num_classes: 4,
        image_size: 16,
        samples_per_domain: 24,
        corruptions,
        seed,
    }
}

/// Standardized grayscale, so colour and contrast do not drive the match.
fn gray(im: &Image) -> Vec<f64> {
    let g: Vec<f64> = im
        .data
        .chunks_exact(im.channels)
        .map(|px| px.iter().sum::<f64>() / px.len() as f64)
        .collect();
    let m = g.iter().sum::<f64>() / g.len() as f64;
    let sd = (g.iter().map(|v| (v - m).powi(2)).sum::<f64>() / g.len() as f64).sqrt();
    g.iter().map(|v| (v - m) / sd.max(1e-9)).collect()
}

/// Mean squared difference minimized over small translations.
fn dist(a: &[f64], b: &[f64], size: usize) -> f64 {
    let s = size as i64;
    let mut best = f64::INFINITY;
    for dy in -2..=2i64 {
        for dx in -2..=2i64 {
            let (mut sum, mut n) = (0.0, 0);
            for y in 0.max(-dy)..s.min(s - dy) {
                for x in 0.max(-dx)..s.min(s - dx) {
                    let d = a[(y * s + x) as usize] - b[((y + dy) * s + x + dx) as usize];
                    sum += d * d;
                    n += 1;
                }
            }
            best = best.min(sum / n as f64);
        }
    }
    best
}

fn nearest(templates: &[(usize, Vec<f64>)], im: &Image) -> usize {
    let g = gray(im);
    templates
        .iter()
        .min_by(|a, b| dist(&a.1, &g, im.width).total_cmp(&dist(&b.1, &g, im.width)))
        .map(|t| t.0)
        .unwrap()
}

#[test]
fn weak_augmentation_preserves_the_class() {
    let k = SHAPES.len();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let templates: Vec<(usize, Vec<f64>)> = (0..k)
        .flat_map(|c| (0..6).map(move |_| c))
        .map(|c| (c, gray(&render_shape(c, 16, &mut rng))))
        .collect();
    let weak: Pipeline = "hflip,crop:2".parse().unwrap();
    let (mut clean_hits, mut weak_hits, n) = (0, 0, 20 * k);
    for i in 0..n {
        let c = i % k;
        let im = render_shape(c, 16, &mut rng);
        clean_hits += usize::from(nearest(&templates, &im) == c);
        weak_hits += usize::from(nearest(&templates, &weak.apply(&im, &mut rng)) == c);
    }
    let (clean, aug) = (clean_hits as f64 / n as f64, weak_hits as f64 / n as f64);
    assert!(aug >= clean - 0.05, "clean {clean:.3} weak {aug:.3}");
    assert!(aug >= 0.9, "weak-view template accuracy {aug:.3}");
}

#[test]
fn identity_pipeline_returns_the_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let im = render_shape(1, 16, &mut rng);
    let (w, s) = augment_pair(&im, &AugmentationPair::identity(), &mut rng);
    assert_eq!(w, im);
    assert_eq!(s, im);
}

#[test]
fn strong_view_differs_from_weak_view() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pair = AugmentationPair::default();
    let differing = (0..20)
        .filter(|&i| {
            let im = render_shape(i % 4, 16, &mut rng);
            let (w, s) = augment_pair(&im, &pair, &mut rng);
            w != s
        })
        .count();
    assert!(differing >= 18, "{differing}/20");
}

#[test]
fn pipeline_parsing_rejects_unknown_ops() {
    assert!("hflip,crop:2,randaug:2,erase:0.5"
        .parse::<Pipeline>()
        .is_ok());
    assert!("".parse::<Pipeline>().unwrap().is_identity());
    assert!("warp".parse::<Pipeline>().is_err());
    assert!("erase:2".parse::<Pipeline>().is_err());
}

#[test]
fn suite_generation_is_deterministic_and_seeded() {
    let c = vec![Corruption::none(), Corruption::preset("mixed").unwrap()];
    let a = make_synthetic_suite(&spec(c.clone(), 5)).unwrap();
    let b = make_synthetic_suite(&spec(c.clone(), 5)).unwrap();
    let other = make_synthetic_suite(&spec(c, 6)).unwrap();
    for d in 0..2 {
        assert_eq!(a[d].keys(), b[d].keys());
        for i in 0..a[d].len() {
            assert_eq!(a[d].image(i), b[d].image(i));
        }
    }
    assert_ne!(a[1].image(0), other[1].image(0));
}

#[test]
fn split_is_a_seeded_partition() {
    let suite = make_synthetic_suite(&spec(vec![Corruption::none()], 0)).unwrap();
    let (a, b) = suite[0].split(0.75, 4).unwrap();
    let (a2, _) = suite[0].split(0.75, 4).unwrap();
    assert_eq!((a.len(), b.len()), (18, 6));
    assert_eq!(a.keys(), a2.keys());
    let mut all: Vec<&String> = a.keys().iter().chain(b.keys()).collect();
    all.sort();
    all.dedup();
    assert_eq!(all.len(), 24);
}

proptest! {
    #[test]
    fn augmentation_is_reproducible_and_shape_preserving(seed in any::<u64>(), class in 0usize..4) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let im = render_shape(class, 16, &mut r);
        let pair = AugmentationPair::default();
        let a = augment_pair(&im, &pair, &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let b = augment_pair(&im, &pair, &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        prop_assert_eq!(&a, &b);
        prop_assert!(a.0.same_shape(&im) && a.1.same_shape(&im));
        prop_assert!(a.1.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn corruption_magnitude_zero_is_identity(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let im = render_shape(2, 16, &mut r);
        let c = Corruption::preset("mixed").unwrap().scaled(0.0);
        prop_assert!(c.is_none());
        let out = c.apply(&im, &mut r);
        prop_assert!(out.data.iter().zip(&im.data).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
