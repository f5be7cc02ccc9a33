//! Flat `key = value` configuration with a canonical serialization.
//!
//! Blank lines and `#` comments are ignored. Every key has a default, unknown
//! keys are rejected, and [`AdaptationConfig::canonical`] lists all keys sorted
//! so that [`AdaptationConfig::hash`] only depends on effective values.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::data::{AugmentationPair, Corruption, SyntheticShiftSpec};
use crate::error::{Error, Result};
use crate::nn::{ArchSpec, BackboneSpec, Schedule, SgdSettings};
use crate::objectives::{LossWeights, WeakNormalization};
use crate::pseudo_labels::PlrSettings;

/// Environment variable that overrides `data.root`.
pub const DATA_ROOT_ENV: &str = "DATA_ROOT";

/// Where domains come from: generated in memory, or `<root>/<domain>/<class>/<image>` folders.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataKind {
    Synthetic,
    Folder,
}

impl FromStr for DataKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "synthetic" => Ok(DataKind::Synthetic),
            "folder" => Ok(DataKind::Folder),
            other => Err(format!("unknown data kind `{other}` (synthetic, folder)")),
        }
    }
}

impl Display for DataKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DataKind::Synthetic => "synthetic",
            DataKind::Folder => "folder",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub kind: DataKind,
    pub root: PathBuf,
    pub image_size: usize,
    pub source: String,
    pub targets: Vec<String>,
    pub num_classes: usize,
    pub samples_per_domain: usize,
    /// Corruption preset per synthetic target domain.
    pub corruptions: Vec<String>,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage1Config {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub backbone_lr_mult: f64,
    pub smoothing: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage2Config {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub backbone_lr_mult: f64,
    pub weights: LossWeights,
    pub plr: PlrSettings,
    pub weak_normalization: WeakNormalization,
    /// EMA momentum of the dataset-level mean prediction between epoch refreshes.
    pub mean_momentum: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage3Config {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub backbone_lr_mult: f64,
    /// Beta concentration of the mixing coefficient.
    pub mixup_alpha: f64,
    /// When set, every pair uses this coefficient instead of a Beta draw.
    pub fixed_lambda: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptationConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub backbone: BackboneSpec,
    pub bottleneck_dim: usize,
    pub optim: OptimConfig,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub stage3: Stage3Config,
    pub augment: AugmentationPair,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        AdaptationConfig {
            seed: 0,
            data: DataConfig {
                kind: DataKind::Synthetic,
                root: PathBuf::from("data"),
                image_size: 32,
                source: "source".into(),
                targets: vec!["target1".into(), "target2".into(), "target3".into()],
                num_classes: 4,
                samples_per_domain: 500,
                corruptions: vec!["color".into(), "noise".into(), "mixed".into()],
                magnitude: 1.0,
            },
            backbone: BackboneSpec::default_conv(),
            bottleneck_dim: 256,
            optim: OptimConfig {
                momentum: 0.9,
                weight_decay: 1e-3,
                schedule: Schedule::InverseDecay {
                    gamma: 10.0,
                    power: 0.75,
                },
            },
            stage1: Stage1Config {
                epochs: 20,
                batch_size: 32,
                lr: 1e-2,
                backbone_lr_mult: 1.0,
                smoothing: 0.1,
            },
            stage2: Stage2Config {
                epochs: 10,
                batch_size: 32,
                lr: 1e-2,
                backbone_lr_mult: 0.1,
                weights: LossWeights::default(),
                plr: PlrSettings::default(),
                weak_normalization: WeakNormalization::Softmax,
                mean_momentum: 0.9,
            },
            stage3: Stage3Config {
                epochs: 20,
                batch_size: 32,
                lr: 1e-2,
                backbone_lr_mult: 1.0,
                mixup_alpha: 0.75,
                fixed_lambda: None,
            },
            augment: AugmentationPair::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.parse::<T>().map_err(|e| Error::Parse {
        context: format!("config key {key}"),
        message: format!("`{value}`: {e}"),
    })
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn schedule_name(s: &Schedule) -> &'static str {
    match s {
        Schedule::Constant => "constant",
        Schedule::InverseDecay { .. } => "inverse_decay",
    }
}

impl AdaptationConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = AdaptationConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                context: format!("config line {}", n + 1),
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "data.kind" => self.data.kind = parse(key, value)?,
            "data.root" => self.data.root = PathBuf::from(value),
            "data.image_size" => self.data.image_size = parse(key, value)?,
            "data.source" => self.data.source = value.to_string(),
            "data.targets" => self.data.targets = parse_list(value),
            "data.synthetic.num_classes" => self.data.num_classes = parse(key, value)?,
            "data.synthetic.samples_per_domain" => {
                self.data.samples_per_domain = parse(key, value)?
            }
            "data.synthetic.corruptions" => self.data.corruptions = parse_list(value),
            "data.synthetic.magnitude" => self.data.magnitude = parse(key, value)?,
            "model.backbone" => self.backbone = parse(key, value)?,
            "model.bottleneck_dim" => self.bottleneck_dim = parse(key, value)?,
            "optim.momentum" => self.optim.momentum = parse(key, value)?,
            "optim.weight_decay" => self.optim.weight_decay = parse(key, value)?,
            "optim.schedule" => {
                self.optim.schedule = match value {
                    "constant" => Schedule::Constant,
                    "inverse_decay" => match self.optim.schedule {
                        s @ Schedule::InverseDecay { .. } => s,
                        Schedule::Constant => Schedule::InverseDecay {
                            gamma: 10.0,
                            power: 0.75,
                        },
                    },
                    _ => return Err(Error::validation(format!("unknown schedule `{value}`"))),
                }
            }
            "optim.gamma" | "optim.power" => {
                let v: f64 = parse(key, value)?;
                if let Schedule::InverseDecay { gamma, power } = &mut self.optim.schedule {
                    if key == "optim.gamma" {
                        *gamma = v;
                    } else {
                        *power = v;
                    }
                }
            }
            "stage1.epochs" => self.stage1.epochs = parse(key, value)?,
            "stage1.batch_size" => self.stage1.batch_size = parse(key, value)?,
            "stage1.lr" => self.stage1.lr = parse(key, value)?,
            "stage1.backbone_lr_mult" => self.stage1.backbone_lr_mult = parse(key, value)?,
            "stage1.smoothing" => self.stage1.smoothing = parse(key, value)?,
            "stage2.epochs" => self.stage2.epochs = parse(key, value)?,
            "stage2.batch_size" => self.stage2.batch_size = parse(key, value)?,
            "stage2.lr" => self.stage2.lr = parse(key, value)?,
            "stage2.backbone_lr_mult" => self.stage2.backbone_lr_mult = parse(key, value)?,
            "stage2.lambda_nm" => self.stage2.weights.lambda_nm = parse(key, value)?,
            "stage2.lambda_pl" => self.stage2.weights.lambda_pl = parse(key, value)?,
            "stage2.lambda_cons" => self.stage2.weights.lambda_cons = parse(key, value)?,
            "stage2.plr" => self.stage2.plr.enabled = parse(key, value)?,
            "stage2.plr_alpha" => self.stage2.plr.alpha = parse(key, value)?,
            "stage2.cluster_rounds" => self.stage2.plr.rounds = parse(key, value)?,
            "stage2.weak_normalization" => self.stage2.weak_normalization = parse(key, value)?,
            "stage2.mean_momentum" => self.stage2.mean_momentum = parse(key, value)?,
            "stage3.epochs" => self.stage3.epochs = parse(key, value)?,
            "stage3.batch_size" => self.stage3.batch_size = parse(key, value)?,
            "stage3.lr" => self.stage3.lr = parse(key, value)?,
            "stage3.backbone_lr_mult" => self.stage3.backbone_lr_mult = parse(key, value)?,
            "stage3.mixup_alpha" => self.stage3.mixup_alpha = parse(key, value)?,
            "stage3.fixed_lambda" => {
                self.stage3.fixed_lambda = match value {
                    "" | "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "augment.weak" => self.augment.weak = parse(key, value)?,
            "augment.strong" => self.augment.strong = parse(key, value)?,
            _ => return Err(Error::validation(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Every key with its effective value.
    pub fn to_pairs(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &'static str, v: String| {
            m.insert(k, v);
        };
        put("seed", self.seed.to_string());
        put("data.kind", self.data.kind.to_string());
        put("data.root", self.data.root.display().to_string());
        put("data.image_size", self.data.image_size.to_string());
        put("data.source", self.data.source.clone());
        put("data.targets", self.data.targets.join(","));
        put(
            "data.synthetic.num_classes",
            self.data.num_classes.to_string(),
        );
        put(
            "data.synthetic.samples_per_domain",
            self.data.samples_per_domain.to_string(),
        );
        put(
            "data.synthetic.corruptions",
            self.data.corruptions.join(","),
        );
        put("data.synthetic.magnitude", self.data.magnitude.to_string());
        put("model.backbone", self.backbone.id());
        put("model.bottleneck_dim", self.bottleneck_dim.to_string());
        put("optim.momentum", self.optim.momentum.to_string());
        put("optim.weight_decay", self.optim.weight_decay.to_string());
        put(
            "optim.schedule",
            schedule_name(&self.optim.schedule).to_string(),
        );
        if let Schedule::InverseDecay { gamma, power } = self.optim.schedule {
            put("optim.gamma", gamma.to_string());
            put("optim.power", power.to_string());
        }
        put("stage1.epochs", self.stage1.epochs.to_string());
        put("stage1.batch_size", self.stage1.batch_size.to_string());
        put("stage1.lr", self.stage1.lr.to_string());
        put(
            "stage1.backbone_lr_mult",
            self.stage1.backbone_lr_mult.to_string(),
        );
        put("stage1.smoothing", self.stage1.smoothing.to_string());
        put("stage2.epochs", self.stage2.epochs.to_string());
        put("stage2.batch_size", self.stage2.batch_size.to_string());
        put("stage2.lr", self.stage2.lr.to_string());
        put(
            "stage2.backbone_lr_mult",
            self.stage2.backbone_lr_mult.to_string(),
        );
        put(
            "stage2.lambda_nm",
            self.stage2.weights.lambda_nm.to_string(),
        );
        put(
            "stage2.lambda_pl",
            self.stage2.weights.lambda_pl.to_string(),
        );
        put(
            "stage2.lambda_cons",
            self.stage2.weights.lambda_cons.to_string(),
        );
        put("stage2.plr", self.stage2.plr.enabled.to_string());
        put("stage2.plr_alpha", self.stage2.plr.alpha.to_string());
        put("stage2.cluster_rounds", self.stage2.plr.rounds.to_string());
        put(
            "stage2.weak_normalization",
            self.stage2.weak_normalization.as_str().to_string(),
        );
        put(
            "stage2.mean_momentum",
            self.stage2.mean_momentum.to_string(),
        );
        put("stage3.epochs", self.stage3.epochs.to_string());
        put("stage3.batch_size", self.stage3.batch_size.to_string());
        put("stage3.lr", self.stage3.lr.to_string());
        put(
            "stage3.backbone_lr_mult",
            self.stage3.backbone_lr_mult.to_string(),
        );
        put("stage3.mixup_alpha", self.stage3.mixup_alpha.to_string());
        put(
            "stage3.fixed_lambda",
            self.stage3
                .fixed_lambda
                .map_or_else(|| "none".to_string(), |l| l.to_string()),
        );
        put("augment.weak", self.augment.weak.to_string());
        put("augment.strong", self.augment.strong.to_string());
        m
    }

    /// All keys, sorted, one `key = value` per line.
    pub fn canonical(&self) -> String {
        self.to_pairs()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// First 16 hex digits of the SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("stage1.lr", self.stage1.lr),
            ("stage2.lr", self.stage2.lr),
            ("stage3.lr", self.stage3.lr),
            ("stage1.backbone_lr_mult", self.stage1.backbone_lr_mult),
            ("stage2.backbone_lr_mult", self.stage2.backbone_lr_mult),
            ("stage3.backbone_lr_mult", self.stage3.backbone_lr_mult),
            ("stage3.mixup_alpha", self.stage3.mixup_alpha),
        ];
        for (k, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::validation(format!("{k} must be positive, got {v}")));
            }
        }
        if !(self.data.magnitude >= 0.0) || !self.data.magnitude.is_finite() {
            return Err(Error::validation(
                "data.synthetic.magnitude must be finite and >= 0",
            ));
        }
        for (k, b) in [
            ("stage1.batch_size", self.stage1.batch_size),
            ("stage2.batch_size", self.stage2.batch_size),
            ("stage3.batch_size", self.stage3.batch_size),
        ] {
            if b < 2 {
                return Err(Error::validation(format!(
                    "{k} must be at least 2, got {b}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.stage1.smoothing) {
            return Err(Error::validation("stage1.smoothing must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.stage2.plr.alpha) || self.stage2.plr.rounds == 0 {
            return Err(Error::validation(
                "stage2.plr_alpha must lie in [0, 1] and cluster_rounds >= 1",
            ));
        }
        if !(0.0..1.0).contains(&self.stage2.mean_momentum) {
            return Err(Error::validation("stage2.mean_momentum must lie in [0, 1)"));
        }
        if let Some(l) = self.stage3.fixed_lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::validation("stage3.fixed_lambda must lie in [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.optim.momentum) || self.optim.weight_decay < 0.0 {
            return Err(Error::validation(
                "optim.momentum must lie in [0, 1) and weight_decay >= 0",
            ));
        }
        self.stage2.weights.validate()?;
        self.arch().validate()
    }

    pub fn arch(&self) -> ArchSpec {
        ArchSpec {
            image_size: self.data.image_size,
            channels: 3,
            backbone: self.backbone.clone(),
            bottleneck_dim: self.bottleneck_dim,
            num_classes: self.data.num_classes,
        }
    }

    fn sgd(&self, lr: f64, backbone_lr_mult: f64) -> SgdSettings {
        SgdSettings {
            lr,
            backbone_lr_mult,
            momentum: self.optim.momentum,
            weight_decay: self.optim.weight_decay,
            schedule: self.optim.schedule,
        }
    }

    pub fn stage1_sgd(&self) -> SgdSettings {
        self.sgd(self.stage1.lr, self.stage1.backbone_lr_mult)
    }

    pub fn stage2_sgd(&self) -> SgdSettings {
        self.sgd(self.stage2.lr, self.stage2.backbone_lr_mult)
    }

    pub fn stage3_sgd(&self) -> SgdSettings {
        self.sgd(self.stage3.lr, self.stage3.backbone_lr_mult)
    }

    /// `DATA_ROOT` from the environment wins over `data.root`.
    pub fn resolve_data_root(&self) -> PathBuf {
        std::env::var_os(DATA_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.data.root.clone())
    }

    /// Source plus one corrupted domain per configured preset.
    pub fn synthetic_spec(&self) -> Result<SyntheticShiftSpec> {
        let mut corruptions = vec![Corruption::none()];
        for name in &self.data.corruptions {
            corruptions.push(Corruption::preset(name)?.scaled(self.data.magnitude));
        }
        Ok(SyntheticShiftSpec {
            num_classes: self.data.num_classes,
            image_size: self.data.image_size,
            samples_per_domain: self.data.samples_per_domain,
            corruptions,
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_canonical_text() {
        let cfg = AdaptationConfig::default();
        let back = AdaptationConfig::from_text(&cfg.canonical()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn hash_ignores_comments_order_and_defaults() {
        let a = AdaptationConfig::from_text("seed = 3\nstage2.lambda_pl = 0.5\n").unwrap();
        let b = AdaptationConfig::from_text(
            "# tuned\nstage2.lambda_pl=0.5\n\nseed=3 # trailing\nstage1.lr = 0.01",
        )
        .unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = AdaptationConfig::from_text("seed = 4\nstage2.lambda_pl = 0.5\n").unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(AdaptationConfig::from_text("stage2.batch_size = 1").is_err());
        assert!(AdaptationConfig::from_text("stage1.lr = 0").is_err());
        assert!(AdaptationConfig::from_text("nonsense.key = 1").is_err());
        assert!(AdaptationConfig::from_text("stage2.lambda_nm = -1").is_err());
        assert!(AdaptationConfig::from_text("just a line").is_err());
        assert!(AdaptationConfig::from_text("model.backbone = conv2-8").is_err());
    }

    #[test]
    fn attention_backbone_and_constant_schedule_parse() {
        let cfg = AdaptationConfig::from_text(
            "model.backbone = attn2-p4-e16-h2-m32\noptim.schedule = constant\nstage3.fixed_lambda = 1",
        )
        .unwrap();
        assert!(matches!(
            cfg.backbone,
            BackboneSpec::Attention { depth: 2, .. }
        ));
        assert_eq!(cfg.optim.schedule, Schedule::Constant);
        assert!(!cfg.canonical().contains("optim.gamma"));
        assert_eq!(cfg.stage3.fixed_lambda, Some(1.0));
        assert_eq!(AdaptationConfig::from_text(&cfg.canonical()).unwrap(), cfg);
    }

    #[test]
    fn synthetic_spec_follows_presets() {
        let cfg = AdaptationConfig::from_text(
            "data.synthetic.corruptions = color, none\ndata.synthetic.magnitude = 0.5",
        )
        .unwrap();
        let spec = cfg.synthetic_spec().unwrap();
        assert_eq!(spec.num_domains(), 3);
        assert!(spec.corruptions[2].is_none());
        assert_eq!(
            spec.corruptions[1],
            Corruption::preset("color").unwrap().scaled(0.5)
        );
    }
}
