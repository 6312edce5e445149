//! Labeled cell images: synthetic generation, ground truth from tracks,
//! label-preserving augmentation, fold splits and on-disk datasets.

mod augment;
mod folds;
mod io;
mod synth;
mod track;
mod warp;

pub use augment::{augment, AugmentConfig, AugmentParams};
pub use folds::{make_folds, FoldSplit};
pub use io::{load_dataset, read_pgm, save_dataset, write_pgm, LABELS_FILE};
pub use synth::{generate_cell, generate_dataset, render_cell, CellGeometry, BACKGROUND, NOISE_SIGMA};
pub use track::{track_to_label, Track, TrackLabel, MIN_DISPLACEMENT_UM};
pub use warp::{background_level, rotate_image, warp_affine, Affine};

use std::path::PathBuf;

use thiserror::Error;

use crate::angle::Angle;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: byte {offset}: {message}", file.display())]
    Parse { file: PathBuf, offset: u64, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Circular(#[from] crate::angle::CircularError),
}

/// A square grayscale image with values in `[0, 1]` and its ground-truth
/// direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub id: String,
    pub size: usize,
    /// Row-major, `size * size` values.
    pub pixels: Vec<f64>,
    pub label: Angle,
}

impl LabeledImage {
    pub fn new(id: impl Into<String>, size: usize, pixels: Vec<f64>, label: Angle) -> Result<Self, DataError> {
        if pixels.len() != size * size {
            return Err(DataError::Config(format!("{} pixels for a {size}x{size} image", pixels.len())));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(DataError::Config(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { id: id.into(), size, pixels, label })
    }
}

/// Intensity-weighted centroid of `pixels` above `floor`, as `(x, y)`.
pub fn intensity_centroid(pixels: &[f64], size: usize, floor: f64) -> Option<(f64, f64)> {
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (i, &v) in pixels.iter().enumerate() {
        let w = (v - floor).max(0.0);
        sw += w;
        sx += w * (i % size) as f64;
        sy += w * (i / size) as f64;
    }
    (sw > 0.0).then(|| (sx / sw, sy / sw))
}
