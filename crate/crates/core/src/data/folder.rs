//! `root/<domain>/<class_name>/<image files>` trees, read and written as 8-bit RGB PNG.

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{ImageBuffer, Rgb, RgbImage};

use super::dataset::DomainDataset;
use super::image::Image;
use crate::error::{Error, Result};

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "bmp", "ppm"];

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn decode(path: &Path, size: usize) -> Result<Image> {
    let img = image::open(path).map_err(|e| Error::Parse {
        context: format!("image {}", path.display()),
        message: e.to_string(),
    })?;
    let mut rgb = img.to_rgb8();
    if rgb.width() as usize != size || rgb.height() as usize != size {
        rgb = image::imageops::resize(&rgb, size as u32, size as u32, FilterType::Triangle);
    }
    let data = rgb.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
    Image::new(size, size, 3, data)
}

/// Loads one domain, resizing every image to `size x size`.
///
/// Classes are the sorted sub-directory names; samples are ordered by path and
/// keyed `class_name/file_name`.
pub fn load_image_folder(
    root: impl AsRef<Path>,
    domain_id: &str,
    size: usize,
) -> Result<DomainDataset> {
    let dir = root.as_ref().join(domain_id);
    if !dir.is_dir() {
        return Err(Error::validation(format!(
            "domain directory {} not found",
            dir.display()
        )));
    }
    let class_dirs: Vec<PathBuf> = sorted_entries(&dir)?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    let mut class_names = Vec::new();
    let mut samples = Vec::new();
    for (label, class_dir) in class_dirs.iter().enumerate() {
        let name = class_dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| {
                Error::validation(format!("non-UTF-8 class directory {}", class_dir.display()))
            })?
            .to_string();
        let files: Vec<PathBuf> = sorted_entries(class_dir)?
            .into_iter()
            .filter(|p| is_image(p))
            .collect();
        if files.is_empty() {
            return Err(Error::validation(format!(
                "class directory {} holds no images",
                class_dir.display()
            )));
        }
        for f in files {
            let file = f.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            samples.push((format!("{name}/{file}"), decode(&f, size)?, Some(label)));
        }
        class_names.push(name);
    }
    DomainDataset::new(domain_id, class_names, samples)
}

fn to_rgb8(im: &Image) -> Result<RgbImage> {
    if im.channels != 3 {
        return Err(Error::validation("only 3-channel images can be exported"));
    }
    let bytes = im
        .data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    ImageBuffer::<Rgb<u8>, _>::from_raw(im.width as u32, im.height as u32, bytes)
        .ok_or_else(|| Error::validation("image buffer size mismatch"))
}

/// Writes a labelled domain into the folder layout, one PNG per sample.
///
/// Pixels are quantized to 8 bits, so a reload matches to within 1/255.
pub fn export_image_folder(dataset: &DomainDataset, root: impl AsRef<Path>) -> Result<PathBuf> {
    let labels = dataset.labeled()?.labels();
    let dir = root.as_ref().join(dataset.domain_id());
    for name in dataset.class_names() {
        let d = dir.join(name);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    for (i, key) in dataset.keys().iter().enumerate() {
        let stem = key.rsplit('/').next().unwrap_or(key);
        let path = dir
            .join(&dataset.class_names()[labels[i]])
            .join(format!("{stem}.png"));
        to_rgb8(dataset.image(i))?
            .save(&path)
            .map_err(|e| Error::Parse {
                context: format!("writing {}", path.display()),
                message: e.to_string(),
            })?;
    }
    Ok(dir)
}
