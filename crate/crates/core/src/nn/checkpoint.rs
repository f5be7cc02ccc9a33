//! Single-file checkpoint: a JSON archive holding metadata plus one blob list per parameter group.
//!
//! Each tensor is stored as base64 of its little-endian `f64` bytes, so a save/load
//! round trip is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{ArchSpec, NetworkAssembly};
use super::params::{Group, Param, ParamKind, ParamStore};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "sfda-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub stage: u8,
    pub source_domain: String,
    pub target_domain: Option<String>,
    pub epoch: usize,
    pub config_hash: String,
    pub backbone_id: String,
    pub num_classes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Blob {
    name: String,
    kind: ParamKind,
    shape: Vec<usize>,
    data: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Archive {
    format: String,
    meta: CheckpointMeta,
    arch: ArchSpec,
    groups: BTreeMap<Group, Vec<Blob>>,
}

/// Serialized parameters of a network plus provenance metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub arch: ArchSpec,
    pub params: ParamStore,
}

fn encode(data: &[f64]) -> String {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    B64.encode(bytes)
}

fn decode(s: &str, expected: usize, name: &str) -> Result<Vec<f64>> {
    let bytes = B64.decode(s).map_err(|e| Error::Parse {
        context: format!("checkpoint blob {name}"),
        message: e.to_string(),
    })?;
    if bytes.len() != expected * 8 {
        return Err(Error::CheckpointMismatch(format!(
            "blob {name} holds {} bytes, shape needs {}",
            bytes.len(),
            expected * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

impl Checkpoint {
    pub fn from_network(net: &NetworkAssembly, meta: CheckpointMeta) -> Self {
        Checkpoint {
            meta,
            arch: net.arch().clone(),
            params: net.params().clone(),
        }
    }

    pub fn to_network(&self) -> Result<NetworkAssembly> {
        NetworkAssembly::from_parts(self.arch.clone(), self.params.clone())
    }

    /// Fails unless the checkpoint was produced for `backbone_id` with `num_classes` outputs.
    pub fn validate(&self, backbone_id: &str, num_classes: usize) -> Result<()> {
        if self.meta.backbone_id != backbone_id {
            return Err(Error::CheckpointMismatch(format!(
                "backbone `{}` in checkpoint, expected `{backbone_id}`",
                self.meta.backbone_id
            )));
        }
        if self.meta.num_classes != num_classes || self.arch.num_classes != num_classes {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint has {} classes, expected {num_classes}",
                self.meta.num_classes
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut groups: BTreeMap<Group, Vec<Blob>> = BTreeMap::new();
        for p in self.params.iter() {
            groups.entry(p.group).or_default().push(Blob {
                name: p.name.clone(),
                kind: p.kind,
                shape: p.shape.clone(),
                data: encode(&p.data),
            });
        }
        let archive = Archive {
            format: CHECKPOINT_FORMAT.to_string(),
            meta: self.meta.clone(),
            arch: self.arch.clone(),
            groups,
        };
        Ok(serde_json::to_string_pretty(&archive)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let archive: Archive = serde_json::from_str(text)?;
        if archive.format != CHECKPOINT_FORMAT {
            return Err(Error::CheckpointMismatch(format!(
                "unknown format `{}`",
                archive.format
            )));
        }
        // Rebuild the declared layout, then fill it from the blobs by name.
        let template = NetworkAssembly::new(archive.arch.clone(), 0)?;
        let mut by_name: BTreeMap<&str, (&Group, &Blob)> = BTreeMap::new();
        for (group, blobs) in &archive.groups {
            for b in blobs {
                by_name.insert(b.name.as_str(), (group, b));
            }
        }
        let mut store = template.params().clone();
        for p in store.iter_mut() {
            let (group, blob) = by_name.get(p.name.as_str()).ok_or_else(|| {
                Error::CheckpointMismatch(format!("missing parameter {}", p.name))
            })?;
            if **group != p.group || blob.shape != p.shape || blob.kind != p.kind {
                return Err(Error::CheckpointMismatch(format!(
                    "parameter {} has a different layout",
                    p.name
                )));
            }
            p.data = decode(&blob.data, p.data.len(), &p.name)?;
        }
        if by_name.len() != store.len() {
            return Err(Error::CheckpointMismatch(
                "checkpoint holds unexpected parameters".into(),
            ));
        }
        if archive.meta.num_classes != archive.arch.num_classes {
            return Err(Error::CheckpointMismatch(
                "metadata and architecture disagree on K".into(),
            ));
        }
        Ok(Checkpoint {
            meta: archive.meta,
            arch: archive.arch,
            params: store,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// First 16 hex digits of the SHA-256 of the serialized archive.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_json()?.as_bytes());
        Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn group_params(&self, group: Group) -> impl Iterator<Item = &Param> {
        self.params.iter().filter(move |p| p.group == group)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::backbone::BackboneSpec;

    fn sample() -> Checkpoint {
        let arch = ArchSpec {
            image_size: 8,
            channels: 3,
            backbone: BackboneSpec::Conv {
                channels: vec![4, 4],
            },
            bottleneck_dim: 5,
            num_classes: 3,
        };
        let net = NetworkAssembly::new(arch, 42).unwrap();
        Checkpoint::from_network(
            &net,
            CheckpointMeta {
                stage: 1,
                source_domain: "d0".into(),
                target_domain: None,
                epoch: 3,
                config_hash: "abc".into(),
                backbone_id: net.arch().backbone.id(),
                num_classes: 3,
            },
        )
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn validation_rejects_wrong_backbone_or_classes() {
        let ck = sample();
        assert!(ck.validate(&ck.meta.backbone_id, 3).is_ok());
        assert!(matches!(
            ck.validate("attn4", 3),
            Err(Error::CheckpointMismatch(_))
        ));
        assert!(matches!(
            ck.validate(&ck.meta.backbone_id, 4),
            Err(Error::CheckpointMismatch(_))
        ));
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let ck = sample();
        let json = ck.to_json().unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["groups"]["classifier"][0]["data"] = serde_json::Value::String(B64.encode([0u8; 8]));
        assert!(Checkpoint::from_json(&v.to_string()).is_err());
    }
}
