//! Source-free domain adaptation toolkit.
//!
//! A model is trained once on labelled source data, then adapted to each
//! unlabelled target domain without ever touching source samples again:
//! nuclear-norm maximization keeps predictions confident and diverse,
//! clustering-based pseudo-labels are refined across epochs with a
//! consensus matrix, and weak/strong augmentation pairs are kept consistent.
//! Per-target teachers are finally distilled into one domain-agnostic
//! student with mixup over images and teacher pseudo-labels.

pub mod analysis;
pub mod data;
pub mod error;
pub mod math;
pub mod nn;
pub mod objectives;
pub mod pipeline;
pub mod pseudo_labels;

pub use error::{Error, Result};
