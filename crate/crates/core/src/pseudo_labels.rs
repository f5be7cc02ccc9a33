//! Clustering-based pseudo-labels and their refinement across epochs.
//!
//! Centroids are prediction-weighted means of the bottleneck features; each
//! sample takes the class of its most cosine-similar centroid, and the two
//! steps alternate (hard assignments weight every round after the first).
//! Between epochs, the Jaccard overlap of consecutive class assignments forms
//! a consensus matrix that blends the previous epoch's labels into the current
//! ones.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{argmax_rows, ensure_row_stochastic, one_hot};

const MIN_CLASS_WEIGHT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    Softmax,
    HardAssignment,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CentroidSet {
    /// `K x D`, one center per class.
    pub centers: Array2<f64>,
    pub weights_source: WeightSource,
}

fn check_inputs(features: ArrayView2<f64>, weights: ArrayView2<f64>) -> Result<()> {
    if features.nrows() != weights.nrows() {
        return Err(Error::validation(format!(
            "{} feature rows but {} weight rows",
            features.nrows(),
            weights.nrows()
        )));
    }
    if features.nrows() == 0 {
        return Err(Error::validation("no samples to cluster"));
    }
    Ok(())
}

/// Per-class weighted means, `None` for classes whose total weight is degenerate.
fn class_means(
    features: ArrayView2<f64>,
    weights: ArrayView2<f64>,
) -> Vec<Option<ndarray::Array1<f64>>> {
    let totals = weights.sum_axis(ndarray::Axis(0));
    let sums = weights.t().dot(&features);
    (0..weights.ncols())
        .map(|k| (totals[k] >= MIN_CLASS_WEIGHT).then(|| &sums.row(k) / totals[k]))
        .collect()
}

/// Prediction-weighted class centers `c_k = sum_t p_tk f_t / sum_t p_tk`.
pub fn weighted_centroids(
    features: ArrayView2<f64>,
    probs: ArrayView2<f64>,
) -> Result<CentroidSet> {
    check_inputs(features, probs)?;
    ensure_row_stochastic(probs, 1e-6, "centroid weights")?;
    let means = class_means(features, probs);
    let mut centers = Array2::zeros((probs.ncols(), features.ncols()));
    for (k, m) in means.into_iter().enumerate() {
        let m = m.ok_or(Error::DegenerateClass { class: k })?;
        centers.row_mut(k).assign(&m);
    }
    Ok(CentroidSet {
        centers,
        weights_source: WeightSource::Softmax,
    })
}

/// Hard-assignment centers; an empty class keeps its previous center.
fn hard_centroids(
    features: ArrayView2<f64>,
    labels: &[usize],
    previous: &CentroidSet,
) -> CentroidSet {
    let weights = one_hot(labels, previous.centers.nrows());
    let means = class_means(features, weights.view());
    let mut centers = previous.centers.clone();
    for (k, m) in means.into_iter().enumerate() {
        if let Some(m) = m {
            centers.row_mut(k).assign(&m);
        }
    }
    CentroidSet {
        centers,
        weights_source: WeightSource::HardAssignment,
    }
}

/// Nearest center by cosine similarity; ties go to the lowest class index.
pub fn cosine_assign(features: ArrayView2<f64>, centers: &CentroidSet) -> Result<Vec<usize>> {
    if features.ncols() != centers.centers.ncols() {
        return Err(Error::validation("feature and center dimensions differ"));
    }
    let center_norms: Vec<f64> = centers
        .centers
        .rows()
        .into_iter()
        .map(|c| c.dot(&c).sqrt())
        .collect();
    if let Some(k) = center_norms.iter().position(|&n| !(n > 0.0)) {
        return Err(Error::Numeric(format!("center {k} has zero norm")));
    }
    let dots = features.dot(&centers.centers.t());
    let mut labels = Vec::with_capacity(features.nrows());
    for (t, f) in features.rows().into_iter().enumerate() {
        let norm = f.dot(&f).sqrt();
        if !(norm > 0.0) {
            return Err(Error::Numeric(format!(
                "feature of sample {t} has zero norm"
            )));
        }
        let mut best = 0;
        let mut best_cos = f64::NEG_INFINITY;
        for (k, &cn) in center_norms.iter().enumerate() {
            let cos = dots[[t, k]] / (norm * cn);
            if cos > best_cos {
                best_cos = cos;
                best = k;
            }
        }
        labels.push(best);
    }
    Ok(labels)
}

/// Alternates centroid estimation and cosine assignment `rounds` times.
/// Round one weights samples by their softmax outputs, later rounds by the
/// previous hard assignment.
pub fn iterate_pseudo_labels(
    features: ArrayView2<f64>,
    probs: ArrayView2<f64>,
    rounds: usize,
) -> Result<(CentroidSet, Vec<usize>)> {
    if rounds == 0 {
        return Err(Error::validation(
            "pseudo-labelling needs at least one round",
        ));
    }
    let mut centers = weighted_centroids(features, probs)?;
    let mut labels = cosine_assign(features, &centers)?;
    for _ in 1..rounds {
        centers = hard_centroids(features, &labels, &centers);
        labels = cosine_assign(features, &centers)?;
    }
    Ok((centers, labels))
}

/// Jaccard overlap between the class sets of two consecutive epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusMatrix {
    /// `W(i, j) = |I_prev(i) ∩ I_curr(j)| / |I_prev(i) ∪ I_curr(j)|`, `0/0 = 0`.
    pub raw: Array2<f64>,
    /// Rows of `raw` scaled to sum to one; all-zero rows become uniform.
    pub normalized: Array2<f64>,
    pub epoch_pair: Option<(usize, usize)>,
}

pub fn consensus_matrix(prev: &[usize], curr: &[usize], k: usize) -> Result<ConsensusMatrix> {
    if prev.len() != curr.len() {
        return Err(Error::validation(format!(
            "label vectors differ in length: {} vs {}",
            prev.len(),
            curr.len()
        )));
    }
    if let Some(&bad) = prev.iter().chain(curr).find(|&&l| l >= k) {
        return Err(Error::validation(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    let mut inter = Array2::<f64>::zeros((k, k));
    let mut prev_count = vec![0usize; k];
    let mut curr_count = vec![0usize; k];
    for (&p, &c) in prev.iter().zip(curr) {
        inter[[p, c]] += 1.0;
        prev_count[p] += 1;
        curr_count[c] += 1;
    }
    let mut raw = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            let union = (prev_count[i] + curr_count[j]) as f64 - inter[[i, j]];
            if union > 0.0 {
                raw[[i, j]] = inter[[i, j]] / union;
            }
        }
    }
    let mut normalized = raw.clone();
    for mut row in normalized.rows_mut() {
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        } else {
            row.fill(1.0 / k as f64);
        }
    }
    Ok(ConsensusMatrix {
        raw,
        normalized,
        epoch_pair: None,
    })
}

/// `alpha * curr + (1 - alpha) * W^T prev` per sample, renormalized to sum one.
pub fn refine_labels(
    curr_soft: ArrayView2<f64>,
    prev_soft: ArrayView2<f64>,
    w_rownorm: ArrayView2<f64>,
    alpha: f64,
) -> Result<Array2<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::validation(format!(
            "refinement alpha {alpha} outside [0, 1]"
        )));
    }
    let k = curr_soft.ncols();
    if curr_soft.dim() != prev_soft.dim() || w_rownorm.dim() != (k, k) {
        return Err(Error::validation("refine_labels shape mismatch"));
    }
    // Row form of W^T y is y^T W.
    let mut out = &curr_soft * alpha + &(prev_soft.dot(&w_rownorm) * (1.0 - alpha));
    for mut row in out.rows_mut() {
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Initial,
    Refined,
}

/// Per-sample pseudo-labels of one target domain at one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabelBank {
    pub domain_id: String,
    pub epoch: usize,
    pub keys: Vec<String>,
    pub hard: Vec<usize>,
    pub soft: Array2<f64>,
    pub provenance: Provenance,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlrSettings {
    /// Weight of the current epoch's assignment.
    pub alpha: f64,
    /// Centroid/assignment alternations per epoch.
    pub rounds: usize,
    /// When false, each epoch's labels are the raw cosine assignment.
    pub enabled: bool,
}

impl Default for PlrSettings {
    fn default() -> Self {
        PlrSettings {
            alpha: 0.9,
            rounds: 2,
            enabled: true,
        }
    }
}

/// One epoch of pseudo-labelling: cluster, assign, then refine against `prev`.
pub fn epoch_update(
    prev: Option<&PseudoLabelBank>,
    domain_id: &str,
    keys: &[String],
    features: ArrayView2<f64>,
    probs: ArrayView2<f64>,
    settings: &PlrSettings,
) -> Result<PseudoLabelBank> {
    if keys.len() != features.nrows() {
        return Err(Error::validation("one sample key per feature row required"));
    }
    let k = probs.ncols();
    let (_, assigned) = iterate_pseudo_labels(features, probs, settings.rounds)?;
    let current = one_hot(&assigned, k);
    match prev {
        Some(prev) if settings.enabled => {
            if prev.keys.len() != keys.len() || prev.soft.ncols() != k {
                return Err(Error::validation(
                    "previous bank does not match this domain's sample set",
                ));
            }
            let w = consensus_matrix(&prev.hard, &assigned, k)?;
            let soft = refine_labels(
                current.view(),
                prev.soft.view(),
                w.normalized.view(),
                settings.alpha,
            )?;
            Ok(PseudoLabelBank {
                domain_id: domain_id.to_string(),
                epoch: prev.epoch + 1,
                keys: keys.to_vec(),
                hard: argmax_rows(soft.view()),
                soft,
                provenance: Provenance::Refined,
            })
        }
        _ => Ok(PseudoLabelBank {
            domain_id: domain_id.to_string(),
            epoch: prev.map_or(0, |p| p.epoch + 1),
            keys: keys.to_vec(),
            hard: assigned,
            soft: current,
            provenance: Provenance::Initial,
        }),
    }
}

#[derive(Serialize, Deserialize)]
struct BankHeader {
    domain_id: String,
    epoch: usize,
    n: usize,
    k: usize,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct BankRecord {
    sample_key: String,
    hard: usize,
    soft: Vec<f64>,
}

impl PseudoLabelBank {
    pub fn num_classes(&self) -> usize {
        self.soft.ncols()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Row index of a sample key.
    pub fn position(&self, key: &str) -> Option<usize> {
        self.keys.iter().position(|k| k == key)
    }

    /// Header line then one JSON record per sample.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = BankHeader {
            domain_id: self.domain_id.clone(),
            epoch: self.epoch,
            n: self.len(),
            k: self.num_classes(),
            provenance: self.provenance,
        };
        let io = |e| Error::io("<bank stream>", e);
        writeln!(w, "{}", serde_json::to_string(&header)?).map_err(io)?;
        for (i, key) in self.keys.iter().enumerate() {
            let rec = BankRecord {
                sample_key: key.clone(),
                hard: self.hard[i],
                soft: self.soft.row(i).to_vec(),
            };
            writeln!(w, "{}", serde_json::to_string(&rec)?).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let parse_err = |m: String| Error::Parse {
            context: "pseudo-label bank".into(),
            message: m,
        };
        let header_line = lines
            .next()
            .ok_or_else(|| parse_err("missing header".into()))?
            .map_err(|e| Error::io("<bank stream>", e))?;
        let header: BankHeader = serde_json::from_str(&header_line)?;
        let mut keys = Vec::with_capacity(header.n);
        let mut hard = Vec::with_capacity(header.n);
        let mut soft = Array2::zeros((header.n, header.k));
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io("<bank stream>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            if i >= header.n {
                return Err(parse_err(format!("more than {} records", header.n)));
            }
            let rec: BankRecord = serde_json::from_str(&line)?;
            if rec.soft.len() != header.k || rec.hard >= header.k {
                return Err(parse_err(format!(
                    "record {i} does not match K={}",
                    header.k
                )));
            }
            soft.row_mut(i).assign(&ndarray::Array1::from(rec.soft));
            keys.push(rec.sample_key);
            hard.push(rec.hard);
        }
        if keys.len() != header.n {
            return Err(parse_err(format!(
                "expected {} records, found {}",
                header.n,
                keys.len()
            )));
        }
        Ok(PseudoLabelBank {
            domain_id: header.domain_id,
            epoch: header.epoch,
            keys,
            hard,
            soft,
            provenance: header.provenance,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f))
    }
}

/// Directory of banks: `<root>/<domain>/epoch_NNNN.jsonl` plus a `latest` pointer file.
#[derive(Clone, Debug)]
pub struct BankStore {
    root: PathBuf,
}

impl BankStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        BankStore { root: root.into() }
    }

    pub fn save(&self, bank: &PseudoLabelBank) -> Result<PathBuf> {
        let dir = self.root.join(&bank.domain_id);
        let name = format!("epoch_{:04}.jsonl", bank.epoch);
        let path = dir.join(&name);
        bank.save(&path)?;
        let latest = dir.join("latest");
        fs::write(&latest, &name).map_err(|e| Error::io(&latest, e))?;
        Ok(path)
    }

    pub fn load_latest(&self, domain_id: &str) -> Result<PseudoLabelBank> {
        let dir = self.root.join(domain_id);
        let latest = dir.join("latest");
        let name = fs::read_to_string(&latest).map_err(|e| Error::io(&latest, e))?;
        PseudoLabelBank::load(dir.join(name.trim()))
    }
}
