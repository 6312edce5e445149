use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::angle::{cyclic_distance, Angle};

/// Mean cyclic deviation between predictions and targets, in degrees.
pub fn e_deg(predictions: &[Angle], targets: &[Angle]) -> Result<f64, EvalError> {
    if predictions.len() != targets.len() {
        return Err(EvalError::Length { predictions: predictions.len(), targets: targets.len() });
    }
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let total: f64 = predictions.iter().zip(targets).map(|(&p, &t)| cyclic_distance(p, t)).sum();
    Ok((total / predictions.len() as f64).to_degrees())
}

/// Across-fold summary of test E_deg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_fold: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over the folds.
    pub std: f64,
    /// `mean + 3 * std`.
    pub max_error_bound: f64,
}

impl EvalReport {
    pub fn from_folds(per_fold: Vec<f64>) -> Result<Self, EvalError> {
        if per_fold.is_empty() {
            return Err(EvalError::Empty);
        }
        let n = per_fold.len() as f64;
        let mean = per_fold.iter().sum::<f64>() / n;
        let std = (per_fold.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Ok(Self { per_fold, mean, std, max_error_bound: mean + 3.0 * std })
    }
}
