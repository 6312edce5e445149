use std::f64::consts::PI;

use serde::Serialize;

use super::EvalError;

/// Outcome distribution of a four-quadrant classifier: the correct quadrant,
/// its two neighbors and the opposite one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadrantBaseline {
    pub accuracy: f64,
    pub neighbor1: f64,
    pub neighbor2: f64,
    pub opposite: f64,
}

impl QuadrantBaseline {
    pub fn new(accuracy: f64, neighbor1: f64, neighbor2: f64, opposite: f64) -> Result<Self, EvalError> {
        let parts = [accuracy, neighbor1, neighbor2, opposite];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(EvalError::Config(format!("fractions {parts:?} must lie in [0, 1]")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EvalError::Config(format!("fractions sum to {sum}, not 1")));
        }
        Ok(Self { accuracy, neighbor1, neighbor2, opposite })
    }

    /// Spreads the misclassified share evenly over the three wrong quadrants.
    pub fn equal_thirds(accuracy: f64) -> Result<Self, EvalError> {
        let rest = (1.0 - accuracy) / 3.0;
        Self::new(accuracy, rest, rest, rest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaselineInaccuracy {
    pub avg_deg: f64,
    pub max_deg: f64,
}

/// Best achievable angular error of a quadrant classifier that always
/// answers the middle of its predicted quadrant.
///
/// Per outcome the average error is π/8, π/2, π/2 and 7π/8 and the maximum
/// is π/4, 3π/4, 3π/4 and π.
pub fn quadrant_baseline(b: &QuadrantBaseline) -> BaselineInaccuracy {
    let neighbors = b.neighbor1 + b.neighbor2;
    let avg = b.accuracy * PI / 8.0 + neighbors * PI / 2.0 + b.opposite * 7.0 * PI / 8.0;
    let max = b.accuracy * PI / 4.0 + neighbors * 3.0 * PI / 4.0 + b.opposite * PI;
    BaselineInaccuracy { avg_deg: avg.to_degrees(), max_deg: max.to_degrees() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn published_averages() {
        let nih = quadrant_baseline(&QuadrantBaseline::equal_thirds(0.8789).unwrap());
        assert!((nih.avg_deg - 33.41).abs() < 0.05, "{nih:?}");
        let u373 = quadrant_baseline(&QuadrantBaseline::equal_thirds(0.8186).unwrap());
        assert!((u373.avg_deg - 38.84).abs() < 0.05, "{u373:?}");
    }

    #[test]
    fn perfect_classifier() {
        let r = quadrant_baseline(&QuadrantBaseline::equal_thirds(1.0).unwrap());
        assert!((r.avg_deg - 22.5).abs() < 1e-12);
        assert!((r.max_deg - 45.0).abs() < 1e-12);
    }

    #[test]
    fn max_follows_per_case_maxima() {
        // 0.8789 π/4 + 0.0404 (3π/4 + 3π/4 + π) in units of π.
        let r = quadrant_baseline(&QuadrantBaseline::equal_thirds(0.8789).unwrap());
        let rest = (1.0 - 0.8789) / 3.0;
        assert!((r.max_deg / 180.0 - (0.8789 / 4.0 + rest * 2.5)).abs() < 1e-12);
    }

    #[test]
    fn fractions_must_sum_to_one() {
        assert!(QuadrantBaseline::new(0.8, 0.1, 0.05, 0.04).is_err());
        assert!(QuadrantBaseline::new(0.8, 0.1, 0.05, 0.05).is_ok());
        assert!(QuadrantBaseline::new(1.2, -0.1, -0.05, -0.05).is_err());
    }

    proptest! {
        #[test]
        fn max_at_least_avg(w in prop::array::uniform4(0.0..1.0f64)) {
            let s: f64 = w.iter().sum();
            prop_assume!(s > 1e-6);
            let b = QuadrantBaseline::new(w[0] / s, w[1] / s, w[2] / s, 1.0 - (w[0] + w[1] + w[2]) / s).unwrap();
            let r = quadrant_baseline(&b);
            prop_assert!(r.max_deg >= r.avg_deg);
        }
    }
}
