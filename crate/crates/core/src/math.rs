//! Row-wise helpers shared by the losses, the network and the clustering code.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Row-wise log-softmax, stable for large logits.
pub fn log_softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

pub fn argmax_rows(m: ArrayView2<f64>) -> Vec<usize> {
    m.rows().into_iter().map(argmax).collect()
}

pub fn one_hot(labels: &[usize], k: usize) -> Array2<f64> {
    let mut out = Array2::zeros((labels.len(), k));
    for (i, &l) in labels.iter().enumerate() {
        out[[i, l]] = 1.0;
    }
    out
}

/// Fails with the first row index holding a NaN or infinity.
pub fn ensure_finite_rows(m: ArrayView2<f64>) -> Result<()> {
    for (i, row) in m.axis_iter(Axis(0)).enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i });
        }
    }
    Ok(())
}

/// Checks every row is a probability vector within `tol`.
pub fn ensure_row_stochastic(m: ArrayView2<f64>, tol: f64, what: &str) -> Result<()> {
    for (i, row) in m.axis_iter(Axis(0)).enumerate() {
        if row.iter().any(|&v| !(v >= -tol) || !v.is_finite()) {
            return Err(Error::validation(format!(
                "{what}: row {i} has a negative or non-finite entry"
            )));
        }
        let s = row.sum();
        if (s - 1.0).abs() > tol {
            return Err(Error::validation(format!(
                "{what}: row {i} sums to {s}, expected 1"
            )));
        }
    }
    Ok(())
}

pub fn ensure_same_shape(a: ArrayView2<f64>, b: ArrayView2<f64>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::validation(format!(
            "{what}: shape {:?} does not match {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_sums_to_one_and_handles_large_logits() {
        let p = softmax_rows(array![[1000.0, 0.0, -1000.0], [1.0, 2.0, 3.0]].view());
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert!((p[[0, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(array![0.5, 0.5, 0.1].view()), 0);
        assert_eq!(argmax(array![0.1, 0.5, 0.5].view()), 1);
    }

    #[test]
    fn log_softmax_matches_log_of_softmax() {
        let z = array![[0.3, -1.2, 2.5, 0.0]];
        let a = log_softmax_rows(z.view());
        let b = softmax_rows(z.view()).mapv(f64::ln);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
