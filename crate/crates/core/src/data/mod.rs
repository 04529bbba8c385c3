//! Annotation types, the synthetic polyp-like corpus, augmentation and the
//! on-disk corpus format.

mod augment;
mod convert;
mod corpus;
pub(crate) mod pnm;
mod synth;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

pub use augment::{augment, Transform};
pub use convert::{box_to_mask, mask_to_box, mask_to_scribble};
pub use corpus::{read_corpus, write_corpus, MANIFEST_FILE, SCHEMA_VERSION};
pub use synth::{gen_sample, generate_corpus, sample_rng, CorpusCounts, SynthConfig, SynthSample};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("mask has no {0} pixels to scribble on")]
    MissingClass(&'static str),
    #[error("box {bbox:?} does not fit a {width}×{height} image")]
    BoxOutOfBounds { bbox: BoxAnnotation, width: usize, height: usize },
    #[error("scribble coverage {0} outside (0, 0.2]")]
    InvalidCoverage(f64),
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("sample {id}: missing file {path}")]
    MissingFile { id: String, path: PathBuf },
    #[error("sample {id}: checksum mismatch for {file}")]
    Checksum { id: String, file: String },
    #[error("sample {id}: invalid scribble code {code}")]
    InvalidScribbleCode { id: String, code: u8 },
    #[error("sample {id}: {msg}")]
    BadSample { id: String, msg: String },
    #[error("io error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Binary per-pixel mask, row-major, values in `{0, 1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelMask {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self, DataError> {
        if values.len() != width * height {
            return Err(DataError::InvalidConfig(format!(
                "mask of {} values for {width}×{height}",
                values.len()
            )));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(DataError::InvalidConfig("mask values must be 0 or 1".into()));
        }
        Ok(Self { width, height, values })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![0; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.values[y * self.width + x] == 1
    }

    pub fn set(&mut self, y: usize, x: usize, on: bool) {
        self.values[y * self.width + x] = on as u8;
    }

    pub fn area(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    /// `H×W` tensor of 0.0 / 1.0.
    pub fn to_tensor<T: crate::tensor::Real>(&self) -> Tensor<T> {
        let data = self.values.iter().map(|&v| T::of(v as f64)).collect();
        Tensor::new(vec![self.height, self.width], data).expect("mask dimensions")
    }
}

/// Inclusive pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxAnnotation {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoxAnnotation {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x0 <= self.x1 && self.y0 <= self.y1 && self.x1 < width && self.y1 < height
    }

    pub fn area(&self) -> usize {
        (self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ScribbleLabel {
    #[default]
    Unlabeled = 0,
    Background = 128,
    Foreground = 255,
}

impl ScribbleLabel {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::Unlabeled),
            128 => Some(Self::Background),
            255 => Some(Self::Foreground),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Sparse scribble labels: set S is every labeled pixel, set U the rest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScribbleAnnotation {
    width: usize,
    height: usize,
    labels: Vec<ScribbleLabel>,
}

impl ScribbleAnnotation {
    /// Fails when no pixel is labeled.
    pub fn new(width: usize, height: usize, labels: Vec<ScribbleLabel>) -> Result<Self, DataError> {
        if labels.len() != width * height {
            return Err(DataError::InvalidConfig(format!(
                "scribble of {} labels for {width}×{height}",
                labels.len()
            )));
        }
        if labels.iter().all(|&l| l == ScribbleLabel::Unlabeled) {
            return Err(DataError::InvalidConfig("scribble labels no pixel".into()));
        }
        Ok(Self { width, height, labels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[ScribbleLabel] {
        &self.labels
    }

    pub fn get(&self, y: usize, x: usize) -> ScribbleLabel {
        self.labels[y * self.width + x]
    }

    /// `|S|`.
    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != ScribbleLabel::Unlabeled).count()
    }

    pub fn count(&self, label: ScribbleLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationKind {
    Pixel,
    Box,
    Scribble,
}

impl std::fmt::Display for AnnotationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AnnotationKind::Pixel => "pixel",
            AnnotationKind::Box => "box",
            AnnotationKind::Scribble => "scribble",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Annotation {
    Pixel(PixelMask),
    Box(BoxAnnotation),
    Scribble(ScribbleAnnotation),
}

impl Annotation {
    pub fn kind(&self) -> AnnotationKind {
        match self {
            Annotation::Pixel(_) => AnnotationKind::Pixel,
            Annotation::Box(_) => AnnotationKind::Box,
            Annotation::Scribble(_) => AnnotationKind::Scribble,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One image with exactly one annotation. `truth_mask` is kept for
/// evaluation and auditing; training code only reads it for pixel samples,
/// where it equals the annotation.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub split: Split,
    /// `3×H×W`, values in `[0, 1]` on the 1/255 grid.
    pub image: Tensor<f32>,
    pub annotation: Annotation,
    pub truth_mask: PixelMask,
}

impl Sample {
    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }

    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn kind(&self) -> AnnotationKind {
        self.annotation.kind()
    }
}
