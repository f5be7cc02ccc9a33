//! Adaptation objectives.
//!
//! Every loss takes logits (or probabilities where the quantity is a fixed
//! target) and returns its value together with the gradient with respect to
//! the logits that carry gradient, so the training loop can backpropagate it.
//!
//! * nuclear-norm maximization through its Frobenius surrogate, `-||softmax(Z)||_F`
//! * pseudo-label cross-entropy with hard or soft targets
//! * weak/strong consistency with expectation-ratio correction of the weak branch
//! * the weighted total
//! * mixup pairs and the mixup distillation loss

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{
    ensure_finite_rows, ensure_row_stochastic, ensure_same_shape, one_hot, softmax_rows,
};
use crate::nn::loss::soft_cross_entropy;
pub use crate::nn::loss::LossGrad;

/// A batch of softmax outputs: `B x K`, every row a probability vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationResponse {
    matrix: Array2<f64>,
}

impl ClassificationResponse {
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::validation(
                "classification response needs B >= 1 and K >= 1",
            ));
        }
        ensure_row_stochastic(matrix.view(), 1e-6, "classification response")?;
        if matrix.iter().any(|&v| v > 1.0 + 1e-12) {
            return Err(Error::validation("classification response entry above 1"));
        }
        Ok(ClassificationResponse { matrix })
    }

    pub fn from_logits(logits: ArrayView2<f64>) -> Result<Self> {
        ensure_finite_rows(logits)?;
        Self::new(softmax_rows(logits))
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn batch_size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.matrix.ncols()
    }
}

pub fn frobenius_norm(a: &ClassificationResponse) -> f64 {
    a.matrix.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `-||softmax(logits)||_F` and its gradient with respect to the logits.
pub fn nm_loss(logits: ArrayView2<f64>) -> Result<LossGrad> {
    if logits.nrows() == 0 {
        return Err(Error::validation("nm_loss on an empty batch"));
    }
    let a = ClassificationResponse::from_logits(logits)?;
    let fro = frobenius_norm(&a);
    let mut grad = Array2::zeros(logits.raw_dim());
    if fro > 0.0 {
        for (mut g, p) in grad.rows_mut().into_iter().zip(a.matrix.rows()) {
            // dL/dA = -A / ||A||_F, pulled back through the softmax Jacobian.
            let da = p.mapv(|v| -v / fro);
            let inner = da.dot(&p);
            g.assign(&(&p * &(&da - inner)));
        }
    }
    Ok(LossGrad { value: -fro, grad })
}

/// Frobenius norm, nuclear norm and numerical rank of a matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormCheck {
    pub fro: f64,
    pub nuc: f64,
    pub rank: usize,
}

/// Log record for the norm diagnostic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub step: usize,
    pub fro: f64,
    pub nuc: f64,
    pub rank: usize,
}

/// Computes `||A||_F`, `||A||_*` and `rank(A)` via SVD and verifies
/// `||A||_F <= ||A||_* <= sqrt(rank) * ||A||_F` with `1e-8` slack.
/// Diagnostic only; no gradient flows through it.
pub fn nuclear_norm_check(a: ArrayView2<f64>) -> Result<NormCheck> {
    ensure_finite_rows(a)?;
    let (r, c) = a.dim();
    if r == 0 || c == 0 {
        return Err(Error::validation("nuclear_norm_check on an empty matrix"));
    }
    let m = DMatrix::from_fn(r, c, |i, j| a[[i, j]]);
    let svd = m
        .try_svd(false, false, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let sv = svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let tol = smax * (r.max(c) as f64) * f64::EPSILON;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    let nuc: f64 = sv.iter().sum();
    let fro = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let slack = 1e-8;
    if fro > nuc + slack || nuc > (rank as f64).sqrt() * fro + slack {
        return Err(Error::Numeric(format!(
            "norm sandwich violated: fro={fro}, nuc={nuc}, rank={rank}"
        )));
    }
    Ok(NormCheck { fro, nuc, rank })
}

/// Pseudo-label targets: class indices or soft rows.
#[derive(Clone, Copy, Debug)]
pub enum PseudoTargets<'a> {
    Hard(&'a [usize]),
    Soft(ArrayView2<'a, f64>),
}

pub fn pseudo_ce_loss(logits: ArrayView2<f64>, pseudo: PseudoTargets<'_>) -> Result<LossGrad> {
    let k = logits.ncols();
    match pseudo {
        PseudoTargets::Hard(labels) => {
            if labels.len() != logits.nrows() {
                return Err(Error::validation(format!(
                    "{} hard labels for {} rows",
                    labels.len(),
                    logits.nrows()
                )));
            }
            if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
                return Err(Error::validation(format!(
                    "pseudo-label {bad} out of range for {k} classes"
                )));
            }
            soft_cross_entropy(logits, one_hot(labels, k).view())
        }
        PseudoTargets::Soft(targets) => {
            ensure_same_shape(logits, targets, "pseudo_ce_loss")?;
            ensure_row_stochastic(targets, 1e-6, "pseudo-label targets")?;
            soft_cross_entropy(logits, targets)
        }
    }
}

/// Dataset-level over batch-level mean prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectationRatio {
    pub global_mean: Array1<f64>,
    pub batch_mean: Array1<f64>,
    pub ratio: Array1<f64>,
}

impl ExpectationRatio {
    pub fn new(global_mean: ArrayView1<f64>, weak_probs: ArrayView2<f64>) -> Result<Self> {
        if global_mean.len() != weak_probs.ncols() {
            return Err(Error::validation("global mean length does not match K"));
        }
        if let Some(k) = global_mean.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::validation(format!(
                "global mean for class {k} is not strictly positive"
            )));
        }
        let batch_mean = weak_probs
            .mean_axis(Axis(0))
            .ok_or_else(|| Error::validation("empty weak batch"))?;
        if let Some(class) = batch_mean.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::ZeroBatchMean { class });
        }
        let ratio = &global_mean / &batch_mean;
        Ok(ExpectationRatio {
            global_mean: global_mean.to_owned(),
            batch_mean,
            ratio,
        })
    }
}

/// How the ratio-corrected weak predictions are turned back into distributions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakNormalization {
    /// `softmax(y_w * ratio)` applied to the probabilities themselves.
    #[default]
    Softmax,
    /// `(y_w * ratio) / sum(y_w * ratio)`.
    Renormalize,
}

impl std::str::FromStr for WeakNormalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(WeakNormalization::Softmax),
            "renormalize" => Ok(WeakNormalization::Renormalize),
            other => Err(Error::validation(format!(
                "unknown weak normalization `{other}`"
            ))),
        }
    }
}

impl WeakNormalization {
    pub fn as_str(self) -> &'static str {
        match self {
            WeakNormalization::Softmax => "softmax",
            WeakNormalization::Renormalize => "renormalize",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyOutput {
    pub value: f64,
    /// Gradient with respect to the strong-branch logits. The weak branch is a fixed target.
    pub grad: Array2<f64>,
    /// Ratio-corrected, normalized weak predictions used as soft targets.
    pub target: Array2<f64>,
    pub ratio: ExpectationRatio,
}

/// Ratio-corrected weak predictions, normalized row-wise.
pub fn normalize_weak(
    weak_probs: ArrayView2<f64>,
    ratio: &ExpectationRatio,
    mode: WeakNormalization,
) -> Array2<f64> {
    let scaled = &weak_probs * &ratio.ratio;
    match mode {
        WeakNormalization::Softmax => softmax_rows(scaled.view()),
        WeakNormalization::Renormalize => {
            let mut out = scaled;
            for mut row in out.rows_mut() {
                let s = row.sum();
                row /= s;
            }
            out
        }
    }
}

/// Soft cross-entropy of the strong branch against the corrected weak branch.
pub fn consistency_loss(
    weak_probs: ArrayView2<f64>,
    strong_logits: ArrayView2<f64>,
    global_mean: ArrayView1<f64>,
    mode: WeakNormalization,
) -> Result<ConsistencyOutput> {
    ensure_same_shape(weak_probs, strong_logits, "consistency_loss")?;
    ensure_row_stochastic(weak_probs, 1e-6, "weak predictions")?;
    let ratio = ExpectationRatio::new(global_mean, weak_probs)?;
    let target = normalize_weak(weak_probs, &ratio, mode);
    let LossGrad { value, grad } = soft_cross_entropy(strong_logits, target.view())?;
    Ok(ConsistencyOutput {
        value,
        grad,
        target,
        ratio,
    })
}

/// Nonnegative weights of the three adaptation losses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_nm: f64,
    pub lambda_pl: f64,
    pub lambda_cons: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_nm: 1.0,
            lambda_pl: 0.3,
            lambda_cons: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_nm: f64, lambda_pl: f64, lambda_cons: f64) -> Result<Self> {
        let w = LossWeights {
            lambda_nm,
            lambda_pl,
            lambda_cons,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_nm", self.lambda_nm),
            ("lambda_pl", self.lambda_pl),
            ("lambda_cons", self.lambda_cons),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::validation(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_null(&self) -> bool {
        self.lambda_nm == 0.0 && self.lambda_pl == 0.0 && self.lambda_cons == 0.0
    }
}

pub fn total_loss(nm: f64, pl: f64, cons: f64, w: &LossWeights) -> f64 {
    w.lambda_nm * nm + w.lambda_pl * pl + w.lambda_cons * cons
}

fn check_lambda(lam: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lam) {
        return Err(Error::validation(format!(
            "mixup coefficient {lam} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Convex combination of two images and their soft labels.
pub fn mixup_pair(
    x_i: ArrayView1<f64>,
    y_i: ArrayView1<f64>,
    x_j: ArrayView1<f64>,
    y_j: ArrayView1<f64>,
    lam: f64,
) -> Result<(Array1<f64>, Array1<f64>)> {
    check_lambda(lam)?;
    if x_i.len() != x_j.len() || y_i.len() != y_j.len() {
        return Err(Error::validation("mixup operands differ in shape"));
    }
    for y in [y_i, y_j] {
        if (y.sum() - 1.0).abs() > 1e-6 || y.iter().any(|&v| v < -1e-12) {
            return Err(Error::validation(
                "mixup labels must be probability vectors",
            ));
        }
    }
    let x = &x_i * lam + &x_j * (1.0 - lam);
    let y = &y_i * lam + &y_j * (1.0 - lam);
    Ok((x, y))
}

/// `lam * CE(logits, y_i) + (1 - lam) * CE(logits, y_j)` for a single mixing coefficient.
pub fn mkd_loss(
    student_logits: ArrayView2<f64>,
    y_i: ArrayView2<f64>,
    y_j: ArrayView2<f64>,
    lam: f64,
) -> Result<LossGrad> {
    check_lambda(lam)?;
    mkd_loss_per_sample(student_logits, y_i, y_j, &vec![lam; student_logits.nrows()])
}

/// Mixup distillation with one coefficient per row.
pub fn mkd_loss_per_sample(
    student_logits: ArrayView2<f64>,
    y_i: ArrayView2<f64>,
    y_j: ArrayView2<f64>,
    lams: &[f64],
) -> Result<LossGrad> {
    ensure_same_shape(student_logits, y_i, "mkd_loss")?;
    ensure_same_shape(student_logits, y_j, "mkd_loss")?;
    if lams.len() != student_logits.nrows() {
        return Err(Error::validation("one mixing coefficient per row required"));
    }
    for &l in lams {
        check_lambda(l)?;
    }
    ensure_row_stochastic(y_i, 1e-6, "mkd labels y_i")?;
    ensure_row_stochastic(y_j, 1e-6, "mkd labels y_j")?;
    let mut wi = y_i.to_owned();
    let mut wj = y_j.to_owned();
    for (r, &l) in lams.iter().enumerate() {
        wi.row_mut(r).mapv_inplace(|v| v * l);
        wj.row_mut(r).mapv_inplace(|v| v * (1.0 - l));
    }
    let a = soft_cross_entropy(student_logits, wi.view())?;
    let b = soft_cross_entropy(student_logits, wj.view())?;
    Ok(LossGrad {
        value: a.value + b.value,
        grad: a.grad + b.grad,
    })
}

/// Information-maximization baseline: mean per-sample entropy minus entropy of the mean
/// prediction. Kept only for NM-versus-IM comparisons.
pub fn im_loss(logits: ArrayView2<f64>) -> Result<LossGrad> {
    ensure_finite_rows(logits)?;
    let (b, k) = logits.dim();
    if b == 0 {
        return Err(Error::validation("im_loss on an empty batch"));
    }
    let bf = b as f64;
    let p = softmax_rows(logits);
    let logp = p.mapv(|v| v.max(1e-300).ln());
    let mean = p.mean_axis(Axis(0)).expect("non-empty");
    let log_mean = mean.mapv(|v| v.max(1e-300).ln());
    let ent_i: Array1<f64> = (&p * &logp).sum_axis(Axis(1)).mapv(|v| -v);
    let ent_mean = -(mean.dot(&log_mean));
    let value = ent_i.sum() / bf - ent_mean;
    let mut grad = Array2::zeros((b, k));
    for i in 0..b {
        let pi = p.row(i);
        let cross = pi.dot(&log_mean);
        for j in 0..k {
            let cond = -pi[j] * (logp[[i, j]] + ent_i[i]) / bf;
            let div = pi[j] * (log_mean[j] - cross) / bf;
            grad[[i, j]] = cond + div;
        }
    }
    Ok(LossGrad { value, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::gradcheck::{max_rel_err, numeric_grad};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Uniform};

    fn random_logits(seed: u64, b: usize, k: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Uniform::new(-2.0, 2.0).unwrap();
        Array2::from_shape_fn((b, k), |_| d.sample(&mut rng))
    }

    fn one_hot_logits(b: usize, k: usize) -> Array2<f64> {
        Array2::from_shape_fn((b, k), |(i, j)| if j == i % k { 1000.0 } else { 0.0 })
    }

    #[test]
    fn frobenius_of_one_hot_and_uniform_rows() {
        let a = ClassificationResponse::new(one_hot(&[0, 1, 2, 3], 4)).unwrap();
        assert_eq!(frobenius_norm(&a), 2.0);
        let u = ClassificationResponse::new(Array2::from_elem((4, 4), 0.25)).unwrap();
        assert_eq!(frobenius_norm(&u), 1.0);
    }

    #[test]
    fn frobenius_hand_case() {
        let a = ClassificationResponse::new(array![[0.5, 0.5], [0.8, 0.2]]).unwrap();
        // scalar-sum oracle
        let mut s = 0.0;
        for v in [0.5f64, 0.5, 0.8, 0.2] {
            s += v * v;
        }
        assert!((frobenius_norm(&a) - s.sqrt()).abs() < 1e-15);
        assert!((frobenius_norm(&a) - 1.086_278_049_120_021).abs() < 1e-12);
    }

    #[test]
    fn response_rejects_non_stochastic_rows() {
        assert!(ClassificationResponse::new(array![[0.5, 0.6]]).is_err());
        assert!(ClassificationResponse::new(array![[1.5, -0.5]]).is_err());
    }

    #[test]
    fn nm_loss_values() {
        assert_eq!(nm_loss(one_hot_logits(4, 4).view()).unwrap().value, -2.0);
        assert!((nm_loss(Array2::zeros((4, 4)).view()).unwrap().value + 1.0).abs() < 1e-15);
        assert!(nm_loss(Array2::<f64>::zeros((0, 4)).view()).is_err());
    }

    #[test]
    fn nm_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let z = random_logits(seed, 4, 5);
            let ana = nm_loss(z.view()).unwrap().grad;
            let num = numeric_grad(&z, 1e-4, |z| nm_loss(z.view()).unwrap().value);
            assert!(max_rel_err(&ana, &num) < 1e-3);
        }
    }

    #[test]
    fn nm_gradient_at_tied_uniform_point() {
        // With exactly uniform rows the gradient vanishes by symmetry; nudging
        // one logit shows descent pushes that class up.
        let mut z = Array2::zeros((4, 4));
        let g0 = nm_loss(z.view()).unwrap().grad;
        assert!(g0.iter().all(|v| v.abs() < 1e-15));
        z[[0, 2]] = 1e-3;
        let ana = nm_loss(z.view()).unwrap().grad;
        let num = numeric_grad(&z, 1e-4, |z| nm_loss(z.view()).unwrap().value);
        assert!(max_rel_err(&ana, &num) < 1e-3);
        assert!(ana[[0, 2]] < 0.0);
    }

    #[test]
    fn nuclear_norm_of_identity_and_rank_one() {
        let c = nuclear_norm_check(Array2::eye(3).view()).unwrap();
        assert!((c.fro - 3f64.sqrt()).abs() < 1e-12);
        assert!((c.nuc - 3.0).abs() < 1e-12);
        assert_eq!(c.rank, 3);

        let u = array![1.0, 2.0, -1.0];
        let v = array![0.5, 0.5];
        let m = Array2::from_shape_fn((3, 2), |(i, j)| u[i] * v[j]);
        let c = nuclear_norm_check(m.view()).unwrap();
        assert_eq!(c.rank, 1);
        assert!((c.fro - c.nuc).abs() < 1e-12);
    }

    #[test]
    fn hard_pseudo_ce_values_and_errors() {
        let l =
            pseudo_ce_loss(array![[1000.0, 0.0, 0.0]].view(), PseudoTargets::Hard(&[0])).unwrap();
        assert!(l.value.abs() < 1e-12);
        let l = pseudo_ce_loss(Array2::zeros((2, 4)).view(), PseudoTargets::Hard(&[3, 1])).unwrap();
        assert!((l.value - 4f64.ln()).abs() < 1e-12);
        assert!(pseudo_ce_loss(Array2::zeros((1, 4)).view(), PseudoTargets::Hard(&[4])).is_err());
    }

    #[test]
    fn soft_pseudo_ce_matches_scalar_oracle() {
        let y = [0.7f64, 0.3];
        let z = [1.0f64, 0.0];
        let lse = (z[0].exp() + z[1].exp()).ln();
        let oracle = -(y[0] * (z[0] - lse) + y[1] * (z[1] - lse));
        let l = pseudo_ce_loss(
            array![[1.0, 0.0]].view(),
            PseudoTargets::Soft(array![[0.7, 0.3]].view()),
        )
        .unwrap();
        assert!((l.value - oracle).abs() < 1e-14);
        assert!((oracle - 0.613_261_687_518_222_8).abs() < 1e-12);
    }

    #[test]
    fn consistency_one_hot_identity_under_renormalization() {
        let w = one_hot(&[0, 1, 1, 0], 2);
        let strong = array![[1000.0, 0.0], [0.0, 1000.0], [0.0, 1000.0], [1000.0, 0.0]];
        let mean = w.mean_axis(Axis(0)).unwrap();
        let out = consistency_loss(
            w.view(),
            strong.view(),
            mean.view(),
            WeakNormalization::Renormalize,
        )
        .unwrap();
        assert!(out.value.abs() < 1e-12);
        assert_eq!(out.target, w);
    }

    #[test]
    fn consistency_ratio_identity_is_softmax_target_ce() {
        let weak = array![[0.6, 0.4], [0.3, 0.7]];
        let strong = array![[0.2, -0.1], [0.5, 1.5]];
        let mean = weak.mean_axis(Axis(0)).unwrap();
        let out = consistency_loss(
            weak.view(),
            strong.view(),
            mean.view(),
            WeakNormalization::Softmax,
        )
        .unwrap();
        assert!(out.ratio.ratio.iter().all(|&r| (r - 1.0).abs() < 1e-15));
        let target = softmax_rows(weak.view());
        let plain = soft_cross_entropy(strong.view(), target.view()).unwrap();
        assert!((out.value - plain.value).abs() < 1e-15);
    }

    #[test]
    fn consistency_hand_case_with_skewed_ratio() {
        // B=2, K=2; batch mean (0.5, 0.5), global mean (1.0, 0.25) -> ratio (2, 0.5)
        let weak = [[0.8f64, 0.2], [0.2, 0.8]];
        let strong = [[0.3f64, -0.3], [-1.0, 0.4]];
        let ratio = [2.0f64, 0.5];
        let mut oracle = 0.0;
        for i in 0..2 {
            let s: Vec<f64> = (0..2).map(|k| weak[i][k] * ratio[k]).collect();
            let zt: f64 = s.iter().map(|v| v.exp()).sum();
            let t: Vec<f64> = s.iter().map(|v| v.exp() / zt).collect();
            let zs: f64 = strong[i].iter().map(|v| v.exp()).sum();
            for k in 0..2 {
                oracle -= t[k] * (strong[i][k].exp() / zs).ln();
            }
        }
        oracle /= 2.0;
        let out = consistency_loss(
            array![[0.8, 0.2], [0.2, 0.8]].view(),
            array![[0.3, -0.3], [-1.0, 0.4]].view(),
            array![1.0, 0.25].view(),
            WeakNormalization::Softmax,
        )
        .unwrap();
        assert!(
            (out.ratio.ratio[0] - 2.0).abs() < 1e-15 && (out.ratio.ratio[1] - 0.5).abs() < 1e-15
        );
        assert!((out.value - oracle).abs() < 1e-14);
    }

    #[test]
    fn consistency_zero_batch_mean_names_class() {
        let weak = array![[1.0, 0.0], [1.0, 0.0]];
        let err = consistency_loss(
            weak.view(),
            Array2::zeros((2, 2)).view(),
            array![0.5, 0.5].view(),
            WeakNormalization::Softmax,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ZeroBatchMean { class: 1 }));
    }

    #[test]
    fn consistency_gradient_flows_only_to_strong() {
        let weak = softmax_rows(random_logits(3, 4, 5).view());
        let strong = random_logits(4, 4, 5);
        let mean = array![0.1, 0.3, 0.2, 0.25, 0.15];
        let f = |s: &Array2<f64>| {
            consistency_loss(
                weak.view(),
                s.view(),
                mean.view(),
                WeakNormalization::Softmax,
            )
            .unwrap()
            .value
        };
        let ana = consistency_loss(
            weak.view(),
            strong.view(),
            mean.view(),
            WeakNormalization::Softmax,
        )
        .unwrap()
        .grad;
        let num = numeric_grad(&strong, 1e-4, f);
        assert!(max_rel_err(&ana, &num) < 1e-3);
    }

    #[test]
    fn total_loss_cases() {
        let w = LossWeights::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(total_loss(-1.5, 2.0, 0.4, &w), -1.5);
        let w = LossWeights::new(0.0, 0.0, 0.0).unwrap();
        assert_eq!(total_loss(-1.5, 2.0, 0.4, &w), 0.0);
        let w = LossWeights::new(1.0, 0.3, 1.0).unwrap();
        assert!((total_loss(-1.5, 2.0, 0.4, &w) - (-0.5)).abs() < 1e-15);
        assert!(LossWeights::new(-0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn mixup_pair_cases() {
        let xi = array![1.0, 2.0];
        let xj = array![3.0, -2.0];
        let yi = array![1.0, 0.0];
        let yj = array![0.0, 1.0];
        let (x, y) = mixup_pair(xi.view(), yi.view(), xj.view(), yj.view(), 1.0).unwrap();
        assert_eq!((x, y), (xi.clone(), yi.clone()));
        let (x, y) = mixup_pair(xi.view(), yi.view(), xj.view(), yi.view(), 0.5).unwrap();
        assert_eq!(x, array![2.0, 0.0]);
        assert_eq!(y, yi);
        let (_, y) = mixup_pair(xi.view(), yi.view(), xj.view(), yj.view(), 0.3).unwrap();
        assert!((y[0] - 0.3).abs() < 1e-15 && (y[1] - 0.7).abs() < 1e-15);
        assert!(mixup_pair(xi.view(), yi.view(), xj.view(), yj.view(), 1.2).is_err());
    }

    #[test]
    fn mkd_cases() {
        let z = random_logits(9, 3, 4);
        let yi = softmax_rows(random_logits(10, 3, 4).view());
        let yj = softmax_rows(random_logits(11, 3, 4).view());
        let full = mkd_loss(z.view(), yi.view(), yj.view(), 1.0).unwrap();
        let ce = pseudo_ce_loss(z.view(), PseudoTargets::Soft(yi.view())).unwrap();
        assert!((full.value - ce.value).abs() < 1e-15);

        let u = mkd_loss(Array2::zeros((3, 4)).view(), yi.view(), yj.view(), 0.5).unwrap();
        assert!((u.value - 4f64.ln()).abs() < 1e-12);
        assert!(mkd_loss(z.view(), yi.view(), yj.view(), -0.1).is_err());
    }

    #[test]
    fn im_gradient_matches_finite_differences() {
        let z = random_logits(21, 4, 5);
        let ana = im_loss(z.view()).unwrap().grad;
        let num = numeric_grad(&z, 1e-4, |z| im_loss(z.view()).unwrap().value);
        assert!(max_rel_err(&ana, &num) < 1e-3);
    }
}
