//! Domain datasets, the synthetic shift generator, augmentation and folder I/O.

pub mod augment;
pub mod dataset;
#[cfg(feature = "image-io")]
pub mod folder;
pub mod image;
pub mod synthetic;

pub use augment::{augment_pair, AugOp, AugmentationPair, Pipeline};
pub use dataset::{check_suite, DomainDataset, LabeledView, UnlabeledView};
#[cfg(feature = "image-io")]
pub use folder::{export_image_folder, load_image_folder};
pub use image::{stack, Image};
pub use synthetic::{make_synthetic_suite, render_shape, Corruption, SyntheticShiftSpec, SHAPES};
