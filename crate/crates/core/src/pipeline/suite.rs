//! Resolves configured domain names to datasets, synthetic or from image folders.

use super::config::{AdaptationConfig, DataKind};
use crate::data::{check_suite, make_synthetic_suite, DomainDataset};
use crate::error::{Error, Result};

/// Loads the named domains in order.
///
/// Folder data overrides `data.synthetic.num_classes` with the class count found on disk.
pub fn load_domains(config: &mut AdaptationConfig, names: &[&str]) -> Result<Vec<DomainDataset>> {
    let out = match config.data.kind {
        DataKind::Synthetic => {
            let mut suite = make_synthetic_suite(&config.synthetic_spec()?)?;
            let mut out = Vec::with_capacity(names.len());
            for name in names {
                let i = suite
                    .iter()
                    .position(|d| d.domain_id() == *name)
                    .ok_or_else(|| {
                        Error::validation(format!(
                            "synthetic suite has no domain `{name}` (source, target1..target{})",
                            config.data.corruptions.len()
                        ))
                    })?;
                out.push(suite[i].clone());
            }
            suite.clear();
            out
        }
        DataKind::Folder => load_folders(config, names)?,
    };
    check_suite(&out)?;
    if let Some(first) = out.first() {
        config.data.num_classes = first.num_classes();
    }
    Ok(out)
}

#[cfg(feature = "image-io")]
fn load_folders(config: &AdaptationConfig, names: &[&str]) -> Result<Vec<DomainDataset>> {
    names
        .iter()
        .map(|n| crate::data::load_image_folder(&config.data.root, n, config.data.image_size))
        .collect()
}

#[cfg(not(feature = "image-io"))]
fn load_folders(_: &AdaptationConfig, _: &[&str]) -> Result<Vec<DomainDataset>> {
    Err(Error::validation(
        "folder data needs the `image-io` feature",
    ))
}
