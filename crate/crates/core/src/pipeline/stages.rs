//! The three training stages, evaluation and the loss ablation grid.
//!
//! Stage 1 trains a full network on labelled source data. Stage 2 adapts a copy
//! to one unlabelled target with the classifier frozen. Stage 3 distils the
//! per-target pseudo-label banks into a freshly initialized student through
//! mixup across target domains. Stages 2 and 3 only ever receive label-free
//! target views; the source dataset is not among their inputs.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::config::AdaptationConfig;
use super::report::{EpochRecord, StageReport};
use crate::data::{DomainDataset, Image, Pipeline, UnlabeledView};
use crate::error::{Error, Result};
use crate::math::{argmax_rows, softmax_rows};
use crate::nn::{
    smoothed_targets, source_ce_loss, Checkpoint, CheckpointMeta, Grads, NetworkAssembly, Sgd,
    Trainable,
};
use crate::objectives::{
    consistency_loss, mkd_loss_per_sample, nm_loss, pseudo_ce_loss, LossWeights, PseudoTargets,
};
use crate::pseudo_labels::{epoch_update, PseudoLabelBank};

const EVAL_CHUNK: usize = 128;

// Independent random streams per purpose, so that e.g. enabling a loss term
// does not shift the shuffling of another stage.
const STREAM_STAGE1: u64 = 1;
const STREAM_STAGE2: u64 = 2;
const STREAM_STAGE3: u64 = 3;
const STUDENT_SEED_OFFSET: u64 = 0x5eed;

fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Shuffled mini-batches; a trailing batch smaller than two is dropped.
fn batches<R: Rng>(n: usize, b: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(b)
        .filter(|c| c.len() >= 2)
        .map(|c| c.to_vec())
        .collect()
}

fn augmented<R: Rng>(images: &[&Image], pipeline: &Pipeline, rng: &mut R) -> Result<Array2<f64>> {
    let out: Vec<Image> = images.iter().map(|im| pipeline.apply(im, rng)).collect();
    crate::data::stack(&out.iter().collect::<Vec<_>>())
}

fn mean_losses(sums: &BTreeMap<String, f64>, count: usize) -> BTreeMap<String, f64> {
    sums.iter()
        .map(|(k, v)| (k.clone(), v / count.max(1) as f64))
        .collect()
}

fn accumulate(sums: &mut BTreeMap<String, f64>, key: &str, v: f64) {
    *sums.entry(key.to_string()).or_insert(0.0) += v;
}

/// Inference-mode features and logits for every sample of a domain.
pub fn full_pass(
    net: &NetworkAssembly,
    view: UnlabeledView<'_>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let n = view.len();
    if n == 0 {
        return Err(Error::validation(format!(
            "domain {} is empty",
            view.domain_id()
        )));
    }
    let mut feats = Array2::zeros((n, net.arch().bottleneck_dim));
    let mut logits = Array2::zeros((n, net.num_classes()));
    let all: Vec<usize> = (0..n).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let (f, l) = net.forward_features(view.batch(chunk)?.view())?;
        let (lo, hi) = (chunk[0], chunk[0] + chunk.len());
        feats.slice_mut(ndarray::s![lo..hi, ..]).assign(&f);
        logits.slice_mut(ndarray::s![lo..hi, ..]).assign(&l);
    }
    Ok((feats, logits))
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    correct as f64 / labels.len().max(1) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    /// `None` for classes absent from the evaluation labels.
    pub per_class: Vec<Option<f64>>,
    pub samples: usize,
}

/// Top-1 accuracy and per-class recall of `predictions` against `labels`.
pub fn score_predictions(
    predictions: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> Result<EvalResult> {
    if predictions.len() != labels.len() {
        return Err(Error::validation("prediction and label counts differ"));
    }
    let mut hit = vec![0usize; num_classes];
    let mut tot = vec![0usize; num_classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        if l >= num_classes {
            return Err(Error::validation(format!("label {l} out of range")));
        }
        tot[l] += 1;
        hit[l] += usize::from(p == l);
    }
    Ok(EvalResult {
        accuracy: accuracy(predictions, labels),
        per_class: hit
            .iter()
            .zip(&tot)
            .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
            .collect(),
        samples: labels.len(),
    })
}

pub fn evaluate_network(net: &NetworkAssembly, dataset: &DomainDataset) -> Result<EvalResult> {
    let labels = dataset.labeled()?.labels();
    if dataset.num_classes() != net.num_classes() {
        return Err(Error::validation(format!(
            "model predicts {} classes, domain {} has {}",
            net.num_classes(),
            dataset.domain_id(),
            dataset.num_classes()
        )));
    }
    let (_, logits) = full_pass(net, dataset.unlabeled())?;
    score_predictions(&argmax_rows(logits.view()), labels, net.num_classes())
}

/// Top-1 accuracy of a checkpoint on a labelled domain. No domain identity is passed to the model.
pub fn evaluate(ckpt: &Checkpoint, dataset: &DomainDataset) -> Result<EvalResult> {
    if ckpt.meta.num_classes != dataset.num_classes() {
        return Err(Error::validation(format!(
            "checkpoint has {} classes, domain {} has {}",
            ckpt.meta.num_classes,
            dataset.domain_id(),
            dataset.num_classes()
        )));
    }
    evaluate_network(&ckpt.to_network()?, dataset)
}

fn meta(
    config: &AdaptationConfig,
    net: &NetworkAssembly,
    stage: u8,
    target: Option<&str>,
    epoch: usize,
) -> CheckpointMeta {
    CheckpointMeta {
        stage,
        source_domain: config.data.source.clone(),
        target_domain: target.map(str::to_string),
        epoch,
        config_hash: config.hash(),
        backbone_id: net.arch().backbone.id(),
        num_classes: net.num_classes(),
    }
}

/// Supervised training of all three parameter groups on smoothed source labels.
pub fn run_stage1(
    config: &AdaptationConfig,
    source: &DomainDataset,
) -> Result<(Checkpoint, StageReport)> {
    config.validate()?;
    let labeled = source.labeled()?;
    if source.num_classes() != config.data.num_classes {
        return Err(Error::validation(format!(
            "config declares {} classes, source has {}",
            config.data.num_classes,
            source.num_classes()
        )));
    }
    let s1 = &config.stage1;
    let mut net = NetworkAssembly::new(config.arch(), config.seed)?;
    let mut sgd = Sgd::new(config.stage1_sgd(), net.params());
    let mut rng = stage_rng(config.seed, STREAM_STAGE1);
    let mut grads = Grads::zeros_like(net.params());
    let hash = config.hash();
    let steps_per_epoch = (source.len() / s1.batch_size).max(1);
    let total = (s1.epochs * steps_per_epoch).max(1) as f64;
    let mut step = 0usize;
    let mut report = StageReport::default();
    for epoch in 0..s1.epochs {
        let t0 = Instant::now();
        let mut sums = BTreeMap::new();
        let mut count = 0;
        for idx in batches(source.len(), s1.batch_size, &mut rng) {
            let ims: Vec<&Image> = idx.iter().map(|&i| source.image(i)).collect();
            let x = augmented(&ims, &config.augment.weak, &mut rng)?;
            let ys: Vec<usize> = idx.iter().map(|&i| labeled.labels()[i]).collect();
            let targets = smoothed_targets(&ys, net.num_classes(), s1.smoothing)?;
            let pass = net.forward_train(x.view())?;
            let loss = source_ce_loss(pass.logits.view(), targets.view())?;
            grads.zero();
            net.backward(&pass, loss.grad.view(), &mut grads);
            let trainable = net.trainable();
            sgd.step(net.params_mut(), &grads, trainable, step as f64 / total);
            net.commit_batch_stats(&pass);
            accumulate(&mut sums, "ce", loss.value);
            count += 1;
            step += 1;
        }
        report.push(EpochRecord {
            stage: 1,
            epoch,
            config_hash: hash.clone(),
            losses: mean_losses(&sums, count),
            pseudo_label_accuracy: None,
            target_accuracy: None,
            wall_time_s: t0.elapsed().as_secs_f64(),
        })?;
    }
    let ckpt = Checkpoint::from_network(&net, meta(config, &net, 1, None, s1.epochs));
    Ok((ckpt, report))
}

/// Result of adapting to one target.
pub struct Stage2Output {
    pub checkpoint: Checkpoint,
    /// Pseudo-labels of the final adapted model.
    pub bank: PseudoLabelBank,
    pub report: StageReport,
}

fn class_mean(probs: ArrayView2<f64>) -> Array1<f64> {
    probs
        .mean_axis(Axis(0))
        .expect("non-empty prediction matrix")
}

/// Source-free adaptation of a stage-1 model to one unlabelled target.
///
/// `probe` holds target labels aligned with the view and is only used to fill
/// the accuracy columns of the report; training never reads it.
pub fn run_stage2(
    config: &AdaptationConfig,
    source_ckpt: &Checkpoint,
    target: UnlabeledView<'_>,
    probe: Option<&[usize]>,
) -> Result<Stage2Output> {
    config.validate()?;
    if source_ckpt.meta.stage != 1 {
        return Err(Error::validation(format!(
            "stage 2 starts from a stage-1 checkpoint, got stage {}",
            source_ckpt.meta.stage
        )));
    }
    source_ckpt.validate(&source_ckpt.arch.backbone.id(), target.num_classes())?;
    if let Some(p) = probe {
        if p.len() != target.len() {
            return Err(Error::validation(
                "probe labels do not align with the target",
            ));
        }
    }
    let s2 = &config.stage2;
    let w: LossWeights = s2.weights;
    let mut net = source_ckpt.to_network()?;
    net.set_trainable_groups(Trainable {
        backbone: true,
        bottleneck: true,
        classifier: false,
    });
    let mut sgd = Sgd::new(config.stage2_sgd(), net.params());
    let mut rng = stage_rng(config.seed, STREAM_STAGE2);
    let mut grads = Grads::zeros_like(net.params());
    let hash = config.hash();
    let domain = target.domain_id();
    let keys = target.keys();
    let k = net.num_classes();

    let (mut feats, mut logits) = full_pass(&net, target)?;
    let mut probs = softmax_rows(logits.view());
    let mut global_mean = class_mean(probs.view());
    let mut bank: Option<PseudoLabelBank> = None;
    let mut report = StageReport::default();
    let steps_per_epoch = (target.len() / s2.batch_size).max(1);
    let total = (s2.epochs * steps_per_epoch).max(1) as f64;
    let mut step = 0usize;

    for epoch in 0..s2.epochs {
        let t0 = Instant::now();
        let current = epoch_update(
            bank.as_ref(),
            domain,
            keys,
            feats.view(),
            probs.view(),
            &s2.plr,
        )?;
        let pl_acc = probe.map(|labels| accuracy(&current.hard, labels));
        let mut sums = BTreeMap::new();
        let mut count = 0;
        if !w.is_null() {
            for idx in batches(target.len(), s2.batch_size, &mut rng) {
                let ims: Vec<&Image> = idx.iter().map(|&i| target.image(i)).collect();
                let mut weak_x = Vec::with_capacity(ims.len());
                let mut strong_x = Vec::with_capacity(ims.len());
                for im in &ims {
                    let (a, b) = crate::data::augment_pair(im, &config.augment, &mut rng);
                    weak_x.push(a);
                    strong_x.push(b);
                }
                let weak_x = crate::data::stack(&weak_x.iter().collect::<Vec<_>>())?;
                grads.zero();
                let weak = net.forward_train(weak_x.view())?;
                let weak_probs = softmax_rows(weak.logits.view());
                let mut dweak = Array2::<f64>::zeros(weak.logits.dim());
                let (mut nm_v, mut pl_v, mut cons_v) = (0.0, 0.0, 0.0);
                if w.lambda_nm > 0.0 {
                    let l = nm_loss(weak.logits.view())?;
                    dweak.scaled_add(w.lambda_nm, &l.grad);
                    nm_v = l.value;
                }
                if w.lambda_pl > 0.0 {
                    let soft = current.soft.select(Axis(0), &idx);
                    let l = pseudo_ce_loss(weak.logits.view(), PseudoTargets::Soft(soft.view()))?;
                    dweak.scaled_add(w.lambda_pl, &l.grad);
                    pl_v = l.value;
                }
                if w.lambda_cons > 0.0 {
                    let strong_x = crate::data::stack(&strong_x.iter().collect::<Vec<_>>())?;
                    let strong = net.forward_train(strong_x.view())?;
                    let out = consistency_loss(
                        weak_probs.view(),
                        strong.logits.view(),
                        global_mean.view(),
                        s2.weak_normalization,
                    )?;
                    net.backward(&strong, (out.grad * w.lambda_cons).view(), &mut grads);
                    cons_v = out.value;
                }
                net.backward(&weak, dweak.view(), &mut grads);
                let trainable = net.trainable();
                sgd.step(net.params_mut(), &grads, trainable, step as f64 / total);
                net.commit_batch_stats(&weak);
                let m = s2.mean_momentum;
                global_mean = &global_mean * m + &(class_mean(weak_probs.view()) * (1.0 - m));
                accumulate(&mut sums, "nm", nm_v);
                accumulate(&mut sums, "pl", pl_v);
                accumulate(&mut sums, "cons", cons_v);
                accumulate(
                    &mut sums,
                    "total",
                    crate::objectives::total_loss(nm_v, pl_v, cons_v, &w),
                );
                count += 1;
                step += 1;
            }
        }
        (feats, logits) = full_pass(&net, target)?;
        probs = softmax_rows(logits.view());
        global_mean = class_mean(probs.view());
        let tgt_acc = probe.map(|labels| accuracy(&argmax_rows(logits.view()), labels));
        bank = Some(current);
        report.push(EpochRecord {
            stage: 2,
            epoch,
            config_hash: hash.clone(),
            losses: mean_losses(&sums, count),
            pseudo_label_accuracy: pl_acc,
            target_accuracy: tgt_acc,
            wall_time_s: t0.elapsed().as_secs_f64(),
        })?;
    }
    // Teacher labels for distillation come from the final model.
    let final_bank = epoch_update(
        bank.as_ref(),
        domain,
        keys,
        feats.view(),
        probs.view(),
        &s2.plr,
    )?;
    debug_assert_eq!(final_bank.soft.ncols(), k);
    let checkpoint = Checkpoint::from_network(&net, meta(config, &net, 2, Some(domain), s2.epochs));
    Ok(Stage2Output {
        checkpoint,
        bank: final_bank,
        report,
    })
}

/// Distils per-target pseudo-label banks into one student by cross-domain mixup.
///
/// `probes`, when given, holds evaluation labels per target for the report only.
pub fn run_stage3(
    config: &AdaptationConfig,
    banks: &[PseudoLabelBank],
    targets: &[UnlabeledView<'_>],
    probes: Option<&[&[usize]]>,
) -> Result<(Checkpoint, StageReport)> {
    config.validate()?;
    if banks.len() != targets.len() || targets.is_empty() {
        return Err(Error::validation(format!(
            "{} banks for {} target domains",
            banks.len(),
            targets.len()
        )));
    }
    let k = config.data.num_classes;
    // bank row of every target sample, joined by key
    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(targets.len());
    for (bank, view) in banks.iter().zip(targets) {
        if bank.domain_id != view.domain_id() {
            return Err(Error::validation(format!(
                "bank for {} paired with domain {}",
                bank.domain_id,
                view.domain_id()
            )));
        }
        if bank.num_classes() != k || view.num_classes() != k {
            return Err(Error::validation(
                "banks and domains must share the configured K",
            ));
        }
        let index: HashMap<&str, usize> = bank
            .keys
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let r = view
            .keys()
            .iter()
            .map(|key| {
                index.get(key.as_str()).copied().ok_or_else(|| Error::Join {
                    sample_key: key.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(r);
    }
    let s3 = &config.stage3;
    let mut net =
        NetworkAssembly::new(config.arch(), config.seed.wrapping_add(STUDENT_SEED_OFFSET))?;
    let mut sgd = Sgd::new(config.stage3_sgd(), net.params());
    let mut rng = stage_rng(config.seed, STREAM_STAGE3);
    let beta =
        Beta::new(s3.mixup_alpha, s3.mixup_alpha).map_err(|e| Error::validation(e.to_string()))?;
    let mut grads = Grads::zeros_like(net.params());
    let hash = config.hash();
    let total_samples: usize = targets.iter().map(|t| t.len()).sum();
    let steps_per_epoch = (total_samples / s3.batch_size).max(1);
    let total = (s3.epochs * steps_per_epoch).max(1) as f64;
    let mut report = StageReport::default();
    let mut step = 0usize;
    for epoch in 0..s3.epochs {
        let t0 = Instant::now();
        let mut sums = BTreeMap::new();
        for _ in 0..steps_per_epoch {
            let b = s3.batch_size;
            let mut xs = Vec::with_capacity(b);
            let mut yi = Array2::zeros((b, k));
            let mut yj = Array2::zeros((b, k));
            let mut lams = Vec::with_capacity(b);
            for r in 0..b {
                let (di, dj) = (
                    rng.random_range(0..targets.len()),
                    rng.random_range(0..targets.len()),
                );
                let (si, sj) = (
                    rng.random_range(0..targets[di].len()),
                    rng.random_range(0..targets[dj].len()),
                );
                let lam = s3.fixed_lambda.unwrap_or_else(|| beta.sample(&mut rng));
                let a = config.augment.weak.apply(targets[di].image(si), &mut rng);
                let c = config.augment.weak.apply(targets[dj].image(sj), &mut rng);
                let mixed: Vec<f64> = a
                    .data
                    .iter()
                    .zip(&c.data)
                    .map(|(u, v)| lam * u + (1.0 - lam) * v)
                    .collect();
                xs.push(Image::new(a.height, a.width, a.channels, mixed)?);
                yi.row_mut(r).assign(&banks[di].soft.row(rows[di][si]));
                yj.row_mut(r).assign(&banks[dj].soft.row(rows[dj][sj]));
                lams.push(lam);
            }
            let x = crate::data::stack(&xs.iter().collect::<Vec<_>>())?;
            let pass = net.forward_train(x.view())?;
            let loss = mkd_loss_per_sample(pass.logits.view(), yi.view(), yj.view(), &lams)?;
            grads.zero();
            net.backward(&pass, loss.grad.view(), &mut grads);
            let trainable = net.trainable();
            sgd.step(net.params_mut(), &grads, trainable, step as f64 / total);
            net.commit_batch_stats(&pass);
            accumulate(&mut sums, "mkd", loss.value);
            step += 1;
        }
        let tgt_acc = match probes {
            Some(p) => {
                let mut accs = Vec::with_capacity(targets.len());
                for (view, labels) in targets.iter().zip(p) {
                    let (_, logits) = full_pass(&net, *view)?;
                    accs.push(accuracy(&argmax_rows(logits.view()), labels));
                }
                Some(accs.iter().sum::<f64>() / accs.len() as f64)
            }
            None => None,
        };
        report.push(EpochRecord {
            stage: 3,
            epoch,
            config_hash: hash.clone(),
            losses: mean_losses(&sums, steps_per_epoch),
            pseudo_label_accuracy: None,
            target_accuracy: tgt_acc,
            wall_time_s: t0.elapsed().as_secs_f64(),
        })?;
    }
    let ckpt = Checkpoint::from_network(&net, meta(config, &net, 3, None, s3.epochs));
    Ok((ckpt, report))
}

/// Which Stage-2 loss terms are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComponentMask {
    pub nm: bool,
    pub cons: bool,
    pub pl: bool,
}

impl ComponentMask {
    /// Every subset of the three terms, empty first.
    pub const ALL: [ComponentMask; 8] = [
        ComponentMask::new(false, false, false),
        ComponentMask::new(false, false, true),
        ComponentMask::new(false, true, false),
        ComponentMask::new(true, false, false),
        ComponentMask::new(true, true, false),
        ComponentMask::new(true, false, true),
        ComponentMask::new(false, true, true),
        ComponentMask::new(true, true, true),
    ];

    pub const fn new(nm: bool, cons: bool, pl: bool) -> Self {
        ComponentMask { nm, cons, pl }
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.nm {
            parts.push("NM");
        }
        if self.cons {
            parts.push("Cons");
        }
        if self.pl {
            parts.push("PL");
        }
        if parts.is_empty() {
            "source-only".to_string()
        } else {
            parts.join("+")
        }
    }

    /// Configured weights with inactive terms zeroed.
    pub fn apply(&self, w: &LossWeights) -> LossWeights {
        LossWeights {
            lambda_nm: if self.nm { w.lambda_nm } else { 0.0 },
            lambda_pl: if self.pl { w.lambda_pl } else { 0.0 },
            lambda_cons: if self.cons { w.lambda_cons } else { 0.0 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mask: ComponentMask,
    pub label: String,
    /// Target accuracy per seed, in seed order.
    pub accuracies: Vec<f64>,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, mask: ComponentMask) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.mask == mask)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("NM,Cons,PL,label");
        for s in &self.seeds {
            out.push_str(&format!(",seed{s}"));
        }
        out.push_str(",mean\n");
        let tick = |b: bool| if b { "1" } else { "0" };
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}",
                tick(r.mask.nm),
                tick(r.mask.cons),
                tick(r.mask.pl),
                r.label
            ));
            for a in &r.accuracies {
                out.push_str(&format!(",{a}"));
            }
            out.push_str(&format!(",{}\n", r.mean));
        }
        out
    }
}

/// One Stage-2 run per (mask, seed). Each seed trains its own source model first.
pub fn run_ablation(
    config: &AdaptationConfig,
    source: &DomainDataset,
    target: &DomainDataset,
    masks: &[ComponentMask],
    seeds: &[u64],
) -> Result<AblationTable> {
    let labels = target.labeled()?.labels();
    let mut acc: Vec<Vec<f64>> = vec![Vec::with_capacity(seeds.len()); masks.len()];
    for &seed in seeds {
        let mut cfg = config.clone();
        cfg.seed = seed;
        let (ckpt, _) = run_stage1(&cfg, source)?;
        for (m, mask) in masks.iter().enumerate() {
            let mut run = cfg.clone();
            run.stage2.weights = mask.apply(&config.stage2.weights);
            let out = run_stage2(&run, &ckpt, target.unlabeled(), None)?;
            let net = out.checkpoint.to_network()?;
            let (_, logits) = full_pass(&net, target.unlabeled())?;
            acc[m].push(accuracy(&argmax_rows(logits.view()), labels));
        }
    }
    let rows = masks
        .iter()
        .zip(acc)
        .map(|(mask, accuracies)| AblationRow {
            mask: *mask,
            label: mask.label(),
            mean: accuracies.iter().sum::<f64>() / accuracies.len().max(1) as f64,
            accuracies,
        })
        .collect();
    Ok(AblationTable {
        seeds: seeds.to_vec(),
        rows,
    })
}
