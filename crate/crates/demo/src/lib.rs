//! Browser bindings for three small views of the adaptation toolkit:
//! response-matrix norms, cluster pseudo-labels with refinement, and image mixup.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfda::data::{render_shape, SHAPES};
use sfda::math::{argmax_rows, one_hot, softmax_rows};
use sfda::objectives::{mixup_pair, nm_loss, nuclear_norm_check};
use sfda::pseudo_labels::{consensus_matrix, iterate_pseudo_labels, refine_labels};
use wasm_bindgen::prelude::*;

fn js(e: impl ToString) -> JsError {
    JsError::new(&e.to_string())
}

/// Norms of a `B x K` softmax response.
#[wasm_bindgen]
pub struct NormView {
    probs: Vec<f64>,
    fro: f64,
    nuc: f64,
    rank: usize,
    bound: f64,
    nm: f64,
}

#[wasm_bindgen]
impl NormView {
    #[wasm_bindgen(getter)]
    pub fn probs(&self) -> Vec<f64> {
        self.probs.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn fro(&self) -> f64 {
        self.fro
    }
    #[wasm_bindgen(getter)]
    pub fn nuc(&self) -> f64 {
        self.nuc
    }
    #[wasm_bindgen(getter)]
    pub fn rank(&self) -> usize {
        self.rank
    }
    /// `sqrt(B)`, reached only by one-hot rows.
    #[wasm_bindgen(getter)]
    pub fn bound(&self) -> f64 {
        self.bound
    }
    #[wasm_bindgen(getter)]
    pub fn nm(&self) -> f64 {
        self.nm
    }
}

/// Logits that favour `classes_used` of the `k` classes, round robin, with the given margin.
pub fn response_logits(
    b: usize,
    k: usize,
    sharpness: f64,
    classes_used: usize,
    seed: u64,
) -> Array2<f64> {
    let used = classes_used.clamp(1, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((b, k), |(i, j)| {
        let noise: f64 = rng.random_range(-0.25..0.25);
        noise + if j == i % used { sharpness } else { 0.0 }
    })
}

pub fn norm_view(
    b: usize,
    k: usize,
    sharpness: f64,
    classes_used: usize,
    seed: u64,
) -> Result<NormView, String> {
    if b == 0 || k < 2 {
        return Err("need B >= 1 and K >= 2".into());
    }
    let logits = response_logits(b, k, sharpness, classes_used, seed);
    let probs = softmax_rows(logits.view());
    let check = nuclear_norm_check(probs.view()).map_err(|e| e.to_string())?;
    let nm = nm_loss(logits.view()).map_err(|e| e.to_string())?.value;
    Ok(NormView {
        probs: probs.iter().copied().collect(),
        fro: check.fro,
        nuc: check.nuc,
        rank: check.rank,
        bound: (b as f64).sqrt(),
        nm,
    })
}

#[wasm_bindgen(js_name = normExplorer)]
pub fn norm_explorer(
    b: usize,
    k: usize,
    sharpness: f64,
    classes_used: usize,
    seed: u32,
) -> Result<NormView, JsError> {
    norm_view(b, k, sharpness, classes_used, seed as u64).map_err(js)
}

/// Labels of 2-D points under a nearest-prototype "source" model and after clustering.
#[wasm_bindgen]
pub struct ClusterView {
    source_labels: Vec<u32>,
    cluster_labels: Vec<u32>,
    soft: Vec<f64>,
    centers: Vec<f64>,
}

#[wasm_bindgen]
impl ClusterView {
    #[wasm_bindgen(getter, js_name = sourceLabels)]
    pub fn source_labels(&self) -> Vec<u32> {
        self.source_labels.clone()
    }
    #[wasm_bindgen(getter, js_name = clusterLabels)]
    pub fn cluster_labels(&self) -> Vec<u32> {
        self.cluster_labels.clone()
    }
    /// Row-major `N x K` one-hot rows of the cluster labels.
    #[wasm_bindgen(getter)]
    pub fn soft(&self) -> Vec<f64> {
        self.soft.clone()
    }
    /// Row-major `K x 2` cluster centres.
    #[wasm_bindgen(getter)]
    pub fn centers(&self) -> Vec<f64> {
        self.centers.clone()
    }
}

fn matrix(flat: &[f64], cols: usize, what: &str) -> Result<Array2<f64>, String> {
    if cols == 0 || flat.len() % cols != 0 {
        return Err(format!(
            "{what}: {} values do not form rows of {cols}",
            flat.len()
        ));
    }
    Array2::from_shape_vec((flat.len() / cols, cols), flat.to_vec()).map_err(|e| e.to_string())
}

pub fn cluster_view(
    points: &[f64],
    prototypes: &[f64],
    temperature: f64,
    rounds: usize,
) -> Result<ClusterView, String> {
    let x = matrix(points, 2, "points")?;
    let p = matrix(prototypes, 2, "prototypes")?;
    if x.nrows() == 0 || p.nrows() < 2 {
        return Err("need points and at least two prototypes".into());
    }
    if !(temperature > 0.0) {
        return Err("temperature must be positive".into());
    }
    let logits = Array2::from_shape_fn((x.nrows(), p.nrows()), |(i, k)| {
        let dx = x[[i, 0]] - p[[k, 0]];
        let dy = x[[i, 1]] - p[[k, 1]];
        -(dx * dx + dy * dy) / temperature
    });
    let probs = softmax_rows(logits.view());
    let (centers, labels) =
        iterate_pseudo_labels(x.view(), probs.view(), rounds.max(1)).map_err(|e| e.to_string())?;
    Ok(ClusterView {
        source_labels: argmax_rows(probs.view())
            .into_iter()
            .map(|l| l as u32)
            .collect(),
        soft: one_hot(&labels, p.nrows()).iter().copied().collect(),
        cluster_labels: labels.into_iter().map(|l| l as u32).collect(),
        centers: centers.centers.iter().copied().collect(),
    })
}

#[wasm_bindgen(js_name = clusterPoints)]
pub fn cluster_points(
    points: &[f64],
    prototypes: &[f64],
    temperature: f64,
    rounds: usize,
) -> Result<ClusterView, JsError> {
    cluster_view(points, prototypes, temperature, rounds).map_err(js)
}

/// Consensus between two labelings and the refined soft labels.
#[wasm_bindgen]
pub struct RefineView {
    consensus: Vec<f64>,
    refined: Vec<f64>,
    hard: Vec<u32>,
}

#[wasm_bindgen]
impl RefineView {
    /// Row-normalized `K x K` overlap matrix.
    #[wasm_bindgen(getter)]
    pub fn consensus(&self) -> Vec<f64> {
        self.consensus.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn refined(&self) -> Vec<f64> {
        self.refined.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn hard(&self) -> Vec<u32> {
        self.hard.clone()
    }
}

pub fn refine_view(
    prev_soft: &[f64],
    curr_soft: &[f64],
    k: usize,
    alpha: f64,
) -> Result<RefineView, String> {
    let prev = matrix(prev_soft, k, "previous labels")?;
    let curr = matrix(curr_soft, k, "current labels")?;
    let w = consensus_matrix(&argmax_rows(prev.view()), &argmax_rows(curr.view()), k)
        .map_err(|e| e.to_string())?;
    let refined = refine_labels(curr.view(), prev.view(), w.normalized.view(), alpha)
        .map_err(|e| e.to_string())?;
    Ok(RefineView {
        consensus: w.normalized.iter().copied().collect(),
        hard: argmax_rows(refined.view())
            .into_iter()
            .map(|l| l as u32)
            .collect(),
        refined: refined.iter().copied().collect(),
    })
}

#[wasm_bindgen(js_name = refineLabels)]
pub fn refine(
    prev_soft: &[f64],
    curr_soft: &[f64],
    k: usize,
    alpha: f64,
) -> Result<RefineView, JsError> {
    refine_view(prev_soft, curr_soft, k, alpha).map_err(js)
}

/// Two rendered shapes, their mixture and the mixed label.
#[wasm_bindgen]
pub struct MixView {
    size: usize,
    a: Vec<u8>,
    b: Vec<u8>,
    mixed: Vec<u8>,
    label: Vec<f64>,
}

#[wasm_bindgen]
impl MixView {
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }
    /// RGBA bytes, ready for `ImageData`.
    #[wasm_bindgen(getter)]
    pub fn a(&self) -> Vec<u8> {
        self.a.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn b(&self) -> Vec<u8> {
        self.b.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn mixed(&self) -> Vec<u8> {
        self.mixed.clone()
    }
    /// Mixed soft label over every shape class.
    #[wasm_bindgen(getter)]
    pub fn label(&self) -> Vec<f64> {
        self.label.clone()
    }
}

fn rgba(data: &[f64]) -> Vec<u8> {
    data.chunks(3)
        .flat_map(|px| {
            let c = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            [c(px[0]), c(px[1]), c(px[2]), 255]
        })
        .collect()
}

pub fn mix_view(
    class_a: usize,
    class_b: usize,
    lambda: f64,
    size: usize,
    seed: u64,
) -> Result<MixView, String> {
    let k = SHAPES.len();
    if class_a >= k || class_b >= k {
        return Err(format!("shape classes run from 0 to {}", k - 1));
    }
    if size < 8 {
        return Err("size must be at least 8".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ia = render_shape(class_a, size, &mut rng);
    let ib = render_shape(class_b, size, &mut rng);
    let ya = one_hot(&[class_a], k);
    let yb = one_hot(&[class_b], k);
    let (x, y) = mixup_pair(
        Array1::from(ia.data.clone()).view(),
        ya.row(0),
        Array1::from(ib.data.clone()).view(),
        yb.row(0),
        lambda,
    )
    .map_err(|e| e.to_string())?;
    Ok(MixView {
        size,
        a: rgba(&ia.data),
        b: rgba(&ib.data),
        mixed: rgba(x.as_slice().expect("contiguous")),
        label: y.to_vec(),
    })
}

#[wasm_bindgen(js_name = mixShapes)]
pub fn mix_shapes(
    class_a: usize,
    class_b: usize,
    lambda: f64,
    size: usize,
    seed: u32,
) -> Result<MixView, JsError> {
    mix_view(class_a, class_b, lambda, size, seed as u64).map_err(js)
}

#[wasm_bindgen(js_name = shapeNames)]
pub fn shape_names() -> Vec<String> {
    SHAPES.iter().map(|s| s.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapsed_response_has_equal_norms() {
        let v = norm_view(8, 4, 30.0, 1, 0).unwrap();
        assert!((v.fro - v.bound).abs() < 1e-6);
        assert!((v.nuc - v.fro).abs() < 1e-6);
        let spread = norm_view(8, 4, 30.0, 4, 0).unwrap();
        assert_eq!(spread.rank, 4);
        assert!(spread.nuc > v.nuc + 1.0);
    }

    #[test]
    fn clusters_follow_point_groups() {
        let points = [
            0.8, 0.1, 0.9, -0.1, 0.85, 0.0, -0.1, 0.9, 0.1, 0.8, 0.0, 0.85,
        ];
        let prototypes = [1.0, 0.0, 0.0, 1.0];
        let v = cluster_view(&points, &prototypes, 0.5, 2).unwrap();
        assert_eq!(v.cluster_labels, vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(v.soft.len(), 12);
    }

    #[test]
    fn refinement_keeps_agreeing_labels() {
        let soft = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let v = refine_view(&soft, &soft, 2, 0.9).unwrap();
        assert_eq!(v.hard, vec![0, 1, 0]);
        assert_eq!(v.consensus, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn mixed_label_weights_both_classes() {
        let v = mix_view(1, 3, 0.25, 16, 4).unwrap();
        assert_eq!(v.mixed.len(), 16 * 16 * 4);
        assert!((v.label[1] - 0.25).abs() < 1e-12 && (v.label[3] - 0.75).abs() < 1e-12);
        assert!(mix_view(9, 0, 0.5, 16, 0).is_err());
    }
}
