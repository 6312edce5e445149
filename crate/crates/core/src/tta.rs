//! Rotation test-time augmentation: predict on rotated copies, undo each
//! rotation on the prediction and fuse the results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::angle::{fuse_predictions, wrap, Angle, PredictionSet};
use crate::data::{rotate_image, LabeledImage};
use crate::nn::{Model, NnError};
use crate::train_eval::{e_deg, EvalError, EvalReport};

/// Prediction counts reported by [`tta_eval`] by default.
pub const TTA_COUNTS: [usize; 5] = [1, 2, 6, 10, 14];

#[derive(Debug, Error)]
pub enum TtaError {
    #[error("TTA needs at least one prediction")]
    ZeroCopies,
    #[error("image has {got} pixels, the model expects {expected}")]
    Size { expected: usize, got: usize },
    #[error("every copy produced a degenerate output")]
    AllDegenerate,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Anything that maps square images to directions.
pub trait DirectionPredictor: Sync {
    fn input_size(&self) -> usize;

    /// One entry per image; `None` when the output cannot be decoded.
    fn predict(&self, images: &[&[f64]]) -> Result<Vec<Option<Angle>>, TtaError>;
}

impl DirectionPredictor for Model {
    fn input_size(&self) -> usize {
        Model::input_size(self)
    }

    fn predict(&self, images: &[&[f64]]) -> Result<Vec<Option<Angle>>, TtaError> {
        Ok(self.predict_angles(images)?.into_iter().map(Result::ok).collect())
    }
}

/// `n` predictions in total: the original image and `n - 1` rotated copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TtaConfig {
    pub n: usize,
    pub seed: u64,
}

/// The `n - 1` rotation angles, uniform in `[0, 2π)`, drawn from `cfg.seed`.
pub fn tta_rotations(cfg: &TtaConfig) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (1..cfg.n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect()
}

/// Predicts on the original and on each rotated copy, corrects copy `j` to
/// `wrap(p_j - θ_j)` and fuses everything with the min-span mean. Copies
/// with degenerate outputs are dropped.
pub fn tta_predict<P: DirectionPredictor + ?Sized>(predictor: &P, pixels: &[f64], cfg: &TtaConfig) -> Result<Angle, TtaError> {
    if cfg.n == 0 {
        return Err(TtaError::ZeroCopies);
    }
    let size = predictor.input_size();
    if pixels.len() != size * size {
        return Err(TtaError::Size { expected: size * size, got: pixels.len() });
    }
    let thetas = tta_rotations(cfg);
    let rotated: Vec<Vec<f64>> = thetas.iter().map(|&t| rotate_image(pixels, size, t)).collect();
    let copies: Vec<&[f64]> = std::iter::once(pixels).chain(rotated.iter().map(Vec::as_slice)).collect();
    let predictions = predictor.predict(&copies)?;

    let corrected: Vec<Angle> = predictions
        .into_iter()
        .zip(std::iter::once(0.0).chain(thetas))
        .filter_map(|(p, theta)| p.map(|a| wrap(a.radians() - theta).expect("finite angle")))
        .collect();
    let set = PredictionSet::new(corrected).map_err(|_| TtaError::AllDegenerate)?;
    Ok(fuse_predictions(&set))
}

/// E_deg with `n` predictions per image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TtaRow {
    pub n: usize,
    pub e_deg: f64,
    /// Images where every copy was degenerate; they count as angle 0.
    pub failed_images: usize,
}

/// Evaluates `images` once per entry of `counts`. Image `i` draws its
/// rotations from seed `seed + i`, the same for every `n`.
pub fn tta_eval<P: DirectionPredictor + ?Sized>(
    predictor: &P,
    images: &[&LabeledImage],
    counts: &[usize],
    seed: u64,
) -> Result<Vec<TtaRow>, TtaError> {
    let labels: Vec<Angle> = images.iter().map(|img| img.label).collect();
    counts
        .iter()
        .map(|&n| {
            let outcomes: Vec<Result<Angle, TtaError>> = images
                .par_iter()
                .enumerate()
                .map(|(i, img)| tta_predict(predictor, &img.pixels, &TtaConfig { n, seed: seed.wrapping_add(i as u64) }))
                .collect();
            let mut failed_images = 0;
            let mut preds = Vec::with_capacity(outcomes.len());
            for o in outcomes {
                match o {
                    Ok(a) => preds.push(a),
                    Err(TtaError::AllDegenerate) => {
                        failed_images += 1;
                        preds.push(Angle::ZERO);
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(TtaRow { n, e_deg: e_deg(&preds, &labels)?, failed_images })
        })
        .collect()
}

/// Combines per-fold [`tta_eval`] rows into one report per `n`.
pub fn tta_summary(per_fold: &[Vec<TtaRow>]) -> Result<Vec<(usize, EvalReport)>, TtaError> {
    let Some(first) = per_fold.first() else {
        return Ok(Vec::new());
    };
    first
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let values = per_fold.iter().map(|rows| rows[k].e_deg).collect();
            Ok((row.n, EvalReport::from_folds(values)?))
        })
        .collect()
}
