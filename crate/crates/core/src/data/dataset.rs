use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::image::{stack, Image};
use crate::error::{Error, Result};

/// Images of one domain with stable sample keys.
///
/// Ground-truth labels, when present, sit in an evaluation-only channel: the
/// [`UnlabeledView`] handed to adaptation code has no way to reach them.
/// Every image read is counted so tests can audit which datasets a stage touched.
#[derive(Debug)]
pub struct DomainDataset {
    domain_id: String,
    class_names: Vec<String>,
    keys: Vec<String>,
    images: Vec<Image>,
    labels: Option<Vec<usize>>,
    reads: AtomicUsize,
}

impl Clone for DomainDataset {
    /// The clone is a fresh handle with its own read counter.
    fn clone(&self) -> Self {
        DomainDataset {
            domain_id: self.domain_id.clone(),
            class_names: self.class_names.clone(),
            keys: self.keys.clone(),
            images: self.images.clone(),
            labels: self.labels.clone(),
            reads: AtomicUsize::new(0),
        }
    }
}

impl PartialEq for DomainDataset {
    fn eq(&self, other: &Self) -> bool {
        self.domain_id == other.domain_id
            && self.class_names == other.class_names
            && self.keys == other.keys
            && self.images == other.images
            && self.labels == other.labels
    }
}

impl DomainDataset {
    /// Labels must be given for all samples or none.
    pub fn new(
        domain_id: impl Into<String>,
        class_names: Vec<String>,
        samples: Vec<(String, Image, Option<usize>)>,
    ) -> Result<Self> {
        let domain_id = domain_id.into();
        let k = class_names.len();
        if k < 2 {
            return Err(Error::validation(format!(
                "domain {domain_id}: need at least 2 classes"
            )));
        }
        let labelled = samples.iter().filter(|s| s.2.is_some()).count();
        if labelled != 0 && labelled != samples.len() {
            return Err(Error::validation(format!(
                "domain {domain_id}: labels given for only some samples"
            )));
        }
        let mut seen = HashSet::new();
        let mut keys = Vec::with_capacity(samples.len());
        let mut images = Vec::with_capacity(samples.len());
        let mut labels = Vec::with_capacity(labelled);
        for (key, image, label) in samples {
            if !seen.insert(key.clone()) {
                return Err(Error::validation(format!(
                    "domain {domain_id}: duplicate sample key {key}"
                )));
            }
            if let Some(first) = images.first() {
                if !image.same_shape(first) {
                    return Err(Error::validation(format!(
                        "domain {domain_id}: sample {key} differs in shape"
                    )));
                }
            }
            if let Some(l) = label {
                if l >= k {
                    return Err(Error::validation(format!(
                        "domain {domain_id}: label {l} of {key} out of range"
                    )));
                }
                labels.push(l);
            }
            keys.push(key);
            images.push(image);
        }
        Ok(DomainDataset {
            domain_id,
            class_names,
            keys,
            images,
            labels: (labelled > 0).then_some(labels),
            reads: AtomicUsize::new(0),
        })
    }

    pub fn domain_id(&self) -> &str {
        &self.domain_id
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    /// `(height, width, channels)` shared by every sample, if any.
    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.images
            .first()
            .map(|im| (im.height, im.width, im.channels))
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    /// Evaluation channel. Adaptation code receives views that cannot call this.
    pub fn eval_labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of image reads through this handle so far.
    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn image(&self, i: usize) -> &Image {
        self.reads.fetch_add(1, Ordering::Relaxed);
        &self.images[i]
    }

    /// Network input rows for the given sample indices.
    pub fn batch(&self, indices: &[usize]) -> Result<Array2<f64>> {
        let ims: Vec<&Image> = indices.iter().map(|&i| self.image(i)).collect();
        stack(&ims)
    }

    pub fn labeled(&self) -> Result<LabeledView<'_>> {
        let labels = self.labels.as_deref().ok_or_else(|| {
            Error::validation(format!("domain {} carries no labels", self.domain_id))
        })?;
        Ok(LabeledView { ds: self, labels })
    }

    pub fn unlabeled(&self) -> UnlabeledView<'_> {
        UnlabeledView { ds: self }
    }

    pub fn subset(&self, indices: &[usize]) -> DomainDataset {
        DomainDataset {
            domain_id: self.domain_id.clone(),
            class_names: self.class_names.clone(),
            keys: indices.iter().map(|&i| self.keys[i].clone()).collect(),
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            reads: AtomicUsize::new(0),
        }
    }

    /// Seeded shuffle split into `(first, rest)` with `round(frac * N)` samples first.
    pub fn split(&self, frac: f64, seed: u64) -> Result<(DomainDataset, DomainDataset)> {
        if !(0.0..=1.0).contains(&frac) {
            return Err(Error::validation(format!(
                "split fraction {frac} outside [0, 1]"
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = (frac * self.len() as f64).round() as usize;
        let (a, b) = idx.split_at(cut);
        let (mut a, mut b) = (a.to_vec(), b.to_vec());
        a.sort_unstable();
        b.sort_unstable();
        Ok((self.subset(&a), self.subset(&b)))
    }
}

/// Fails unless every domain of a suite declares the same classes.
pub fn check_suite(domains: &[DomainDataset]) -> Result<()> {
    if let Some(first) = domains.first() {
        for d in &domains[1..] {
            if d.class_names != first.class_names {
                return Err(Error::validation(format!(
                    "domain {} declares different classes than {}",
                    d.domain_id, first.domain_id
                )));
            }
        }
    }
    Ok(())
}

/// Labelled access for source training and evaluation.
#[derive(Clone, Copy)]
pub struct LabeledView<'a> {
    ds: &'a DomainDataset,
    labels: &'a [usize],
}

impl<'a> LabeledView<'a> {
    pub fn labels(&self) -> &'a [usize] {
        self.labels
    }

    pub fn unlabeled(&self) -> UnlabeledView<'a> {
        UnlabeledView { ds: self.ds }
    }

    pub fn domain_id(&self) -> &'a str {
        &self.ds.domain_id
    }

    pub fn num_classes(&self) -> usize {
        self.ds.num_classes()
    }

    pub fn len(&self) -> usize {
        self.ds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ds.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Array2<f64>> {
        self.ds.batch(indices)
    }
}

/// Label-free access handed to adaptation stages.
#[derive(Clone, Copy)]
pub struct UnlabeledView<'a> {
    ds: &'a DomainDataset,
}

impl<'a> UnlabeledView<'a> {
    pub fn domain_id(&self) -> &'a str {
        &self.ds.domain_id
    }

    pub fn num_classes(&self) -> usize {
        self.ds.num_classes()
    }

    pub fn len(&self) -> usize {
        self.ds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ds.is_empty()
    }

    pub fn keys(&self) -> &'a [String] {
        &self.ds.keys
    }

    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.ds.image_shape()
    }

    pub fn image(&self, i: usize) -> &'a Image {
        self.ds.image(i)
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Array2<f64>> {
        self.ds.batch(indices)
    }
}
