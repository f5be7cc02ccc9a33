//! Proxy A-distance: held-out error of a linear domain classifier, mapped to `2(1 - 2e)`.

use nalgebra::{DMatrix, DVector};
use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 20;

/// Train/test protocol of the domain classifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub repeats: usize,
    /// L2 penalty on the weights (not the bias), per training sample.
    pub ridge: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.8,
            repeats: 5,
            ridge: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ADistanceResult {
    pub domain_pair: (String, String),
    /// Mean held-out error over the repeats, clipped to `[0, 0.5]`.
    pub classifier_error: f64,
    pub a_distance: f64,
    pub split: SplitSpec,
    pub seed: u64,
}

impl ADistanceResult {
    pub fn with_domains(mut self, a: impl Into<String>, b: impl Into<String>) -> Self {
        self.domain_pair = (a.into(), b.into());
        self
    }
}

/// Ridge logistic regression fitted by Newton steps. Rows of `x` carry a trailing bias column.
fn fit_logistic(x: &DMatrix<f64>, y: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    let mut w = DVector::zeros(p);
    let mut penalty = DMatrix::identity(p, p) * (ridge * n as f64);
    penalty[(p - 1, p - 1)] = 1e-9 * n as f64;
    for _ in 0..100 {
        let z = x * &w;
        let prob = z.map(|v| 1.0 / (1.0 + (-v).exp()));
        let s = prob.map(|q| (q * (1.0 - q)).max(1e-12));
        let grad = x.transpose() * (&prob - y) + &penalty * &w;
        let mut xs = x.clone();
        for (mut row, si) in xs.row_iter_mut().zip(s.iter()) {
            row *= *si;
        }
        let hess = x.transpose() * xs + &penalty;
        let step = hess
            .cholesky()
            .ok_or_else(|| {
                Error::Numeric("domain classifier Hessian not positive definite".into())
            })?
            .solve(&grad);
        w -= &step;
        if step.norm() < 1e-10 * (1.0 + w.norm()) {
            break;
        }
    }
    Ok(w)
}

fn design(rows: &[ArrayView2<f64>]) -> DMatrix<f64> {
    let n: usize = rows.iter().map(|r| r.nrows()).sum();
    let d = rows[0].ncols();
    let mut m = DMatrix::zeros(n, d + 1);
    let mut i = 0;
    for block in rows {
        for row in block.rows() {
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
            m[(i, d)] = 1.0;
            i += 1;
        }
    }
    m
}

fn select(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

/// Estimates the proxy A-distance between two feature sets.
///
/// Features are centred on the pooled mean and scaled by the pooled RMS. Each
/// repeat draws the same number of samples from both domains, trains on
/// `train_frac` of them and scores the rest; the per-repeat errors are averaged.
pub fn a_distance(
    feats_a: ArrayView2<f64>,
    feats_b: ArrayView2<f64>,
    split: SplitSpec,
    seed: u64,
) -> Result<ADistanceResult> {
    if feats_a.nrows() < MIN_SAMPLES || feats_b.nrows() < MIN_SAMPLES {
        return Err(Error::validation(format!(
            "a_distance needs at least {MIN_SAMPLES} samples per domain, got {} and {}",
            feats_a.nrows(),
            feats_b.nrows()
        )));
    }
    if feats_a.ncols() != feats_b.ncols() || feats_a.ncols() == 0 {
        return Err(Error::validation(format!(
            "feature widths differ or are empty: {} vs {}",
            feats_a.ncols(),
            feats_b.ncols()
        )));
    }
    if !(split.train_frac > 0.0 && split.train_frac < 1.0) || split.repeats == 0 {
        return Err(Error::validation(
            "split needs 0 < train_frac < 1 and repeats >= 1",
        ));
    }
    if !(split.ridge > 0.0) {
        return Err(Error::validation("ridge must be positive"));
    }
    if feats_a.iter().chain(feats_b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite feature value".into()));
    }

    let pooled = concatenate(Axis(0), &[feats_a, feats_b]).expect("same width");
    let mean = pooled.mean_axis(Axis(0)).expect("non-empty");
    let centred = &pooled - &mean;
    let rms = (centred.iter().map(|v| v * v).sum::<f64>() / centred.len() as f64).sqrt();
    let scale = if rms > 0.0 { 1.0 / rms } else { 1.0 };
    let a = (&feats_a - &mean) * scale;
    let b = (&feats_b - &mean) * scale;

    let m = a.nrows().min(b.nrows());
    let n_train = ((split.train_frac * m as f64).round() as usize).clamp(1, m - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..split.repeats {
        let mut ia: Vec<usize> = (0..a.nrows()).collect();
        let mut ib: Vec<usize> = (0..b.nrows()).collect();
        ia.shuffle(&mut rng);
        ib.shuffle(&mut rng);
        let (tr_a, te_a) = (select(&a, &ia[..n_train]), select(&a, &ia[n_train..m]));
        let (tr_b, te_b) = (select(&b, &ib[..n_train]), select(&b, &ib[n_train..m]));

        let x = design(&[tr_a.view(), tr_b.view()]);
        let y = DVector::from_fn(2 * n_train, |i, _| if i < n_train { 0.0 } else { 1.0 });
        let w = fit_logistic(&x, &y, split.ridge)?;

        let wrong = |block: &Array2<f64>, label: bool| -> f64 {
            let z = design(&[block.view()]) * &w;
            z.iter().filter(|&&v| (v > 0.0) != label).count() as f64 / block.nrows() as f64
        };
        total += 0.5 * (wrong(&te_a, false) + wrong(&te_b, true));
    }
    let eps = (total / split.repeats as f64).clamp(0.0, 0.5);
    Ok(ADistanceResult {
        domain_pair: ("a".into(), "b".into()),
        classifier_error: eps,
        a_distance: 2.0 * (1.0 - 2.0 * eps),
        split,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, shift: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((n, d), |(_, j)| {
            let z: f64 = StandardNormal.sample(rng);
            z + if j == 0 { shift } else { 0.0 }
        })
    }

    #[test]
    fn too_few_samples_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = gaussian(19, 2, 0.0, &mut rng);
        let b = gaussian(40, 2, 0.0, &mut rng);
        assert!(a_distance(a.view(), b.view(), SplitSpec::default(), 0).is_err());
    }

    #[test]
    fn value_follows_clipped_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = gaussian(100, 3, 0.0, &mut rng);
        let b = gaussian(100, 3, 0.5, &mut rng);
        let r = a_distance(a.view(), b.view(), SplitSpec::default(), 3).unwrap();
        assert!((0.0..=0.5).contains(&r.classifier_error));
        assert_eq!(r.a_distance, 2.0 * (1.0 - 2.0 * r.classifier_error));
    }

    #[test]
    fn separated_clusters_reach_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = gaussian(60, 4, 0.0, &mut rng);
        let b = gaussian(60, 4, 20.0, &mut rng);
        let r = a_distance(a.view(), b.view(), SplitSpec::default(), 0).unwrap();
        assert_eq!(r.a_distance, 2.0);
    }
}
