//! Label smoothing and the supervised source objective.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::math::{
    ensure_finite_rows, ensure_row_stochastic, ensure_same_shape, log_softmax_rows, softmax_rows,
};

/// Scalar loss together with its gradient with respect to the logits.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Array2<f64>,
}

/// A smoothed one-of-K target: `(1 - alpha) * one_hot + alpha / K`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedLabel {
    pub vector: Array1<f64>,
    pub smoothing: f64,
}

pub fn smooth_labels(one_hot: ArrayView1<f64>, alpha: f64) -> Result<SmoothedLabel> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::validation(format!(
            "smoothing {alpha} outside [0, 1)"
        )));
    }
    let ones = one_hot.iter().filter(|&&v| v == 1.0).count();
    let zeros = one_hot.iter().filter(|&&v| v == 0.0).count();
    if ones != 1 || ones + zeros != one_hot.len() {
        return Err(Error::validation("label is not a one-hot vector"));
    }
    let k = one_hot.len() as f64;
    Ok(SmoothedLabel {
        vector: one_hot.mapv(|q| (1.0 - alpha) * q + alpha / k),
        smoothing: alpha,
    })
}

/// Smoothed targets for a batch of class indices.
pub fn smoothed_targets(labels: &[usize], k: usize, alpha: f64) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((labels.len(), k));
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::validation(format!(
                "label {l} out of range for {k} classes"
            )));
        }
        let mut q = Array1::zeros(k);
        q[l] = 1.0;
        out.row_mut(i)
            .assign(&smooth_labels(q.view(), alpha)?.vector);
    }
    Ok(out)
}

/// Mean soft-target cross-entropy `-(1/B) sum_i sum_k t_ik log softmax(z_i)_k`.
/// Targets are not required to be normalized here; callers validate.
pub(crate) fn soft_cross_entropy(
    logits: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> Result<LossGrad> {
    ensure_same_shape(logits, targets, "soft cross-entropy")?;
    ensure_finite_rows(logits)?;
    let b = logits.nrows() as f64;
    if logits.nrows() == 0 {
        return Err(Error::validation("empty batch"));
    }
    let logp = log_softmax_rows(logits);
    let value = -(&logp * &targets).sum() / b;
    let p = softmax_rows(logits);
    let mut grad = Array2::zeros(logits.raw_dim());
    for ((mut g, p), t) in grad
        .rows_mut()
        .into_iter()
        .zip(p.rows())
        .zip(targets.rows())
    {
        let mass = t.sum();
        g.assign(&((&p * mass - &t) / b));
    }
    Ok(LossGrad { value, grad })
}

/// Source objective: cross-entropy of logits against (smoothed) target rows.
pub fn source_ce_loss(
    logits: ArrayView2<f64>,
    smoothed_targets: ArrayView2<f64>,
) -> Result<LossGrad> {
    ensure_same_shape(logits, smoothed_targets, "source_ce_loss")?;
    ensure_row_stochastic(smoothed_targets, 1e-6, "source_ce_loss targets")?;
    soft_cross_entropy(logits, smoothed_targets)
}
