//! Wrapped angles, the two direction encodings, cyclic distance and the
//! circular averages used to fuse several predictions into one direction.
//!
//! All angles share one convention: image coordinates with `+x` to the right
//! and `+y` downward, measured from `+x` toward `+y`. An angle of 90° therefore
//! points *down* in a rendered image.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `x² + y² − 1` for a validated [`UnitDirection`].
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Pairs closer than this to the origin carry no direction.
pub const DEGENERATE_RADIUS: f64 = 1e-12;

/// Mean resultant lengths at or below this have no defined circular mean.
pub const MIN_RESULTANT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CircularError {
    #[error("angle must be finite, got {0}")]
    NonFinite(f64),
    #[error("({x}, {y}) is too close to the origin to define a direction")]
    Degenerate { x: f64, y: f64 },
    #[error("({x}, {y}) is not on the unit circle")]
    NotUnit { x: f64, y: f64 },
    #[error("prediction set is empty")]
    Empty,
    #[error("resultant length {0} is too small for a circular mean")]
    VanishingResultant(f64),
}

/// A direction in radians, always in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    /// Wraps any finite real into `[0, 2π)`.
    pub fn new(radians: f64) -> Result<Self, CircularError> {
        wrap(radians)
    }

    pub fn from_degrees(degrees: f64) -> Result<Self, CircularError> {
        wrap(degrees.to_radians())
    }

    #[inline]
    pub fn radians(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }

    /// Rotates by `theta` radians and wraps.
    pub fn rotate(self, theta: f64) -> Result<Self, CircularError> {
        wrap(self.0 + theta)
    }
}

impl TryFrom<f64> for Angle {
    type Error = CircularError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        wrap(value)
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> f64 {
        a.0
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} rad ({:.2}°)", self.0, self.degrees())
    }
}

/// Mathematical (non-negative) modulo 2π.
pub fn wrap(x: f64) -> Result<Angle, CircularError> {
    if !x.is_finite() {
        return Err(CircularError::NonFinite(x));
    }
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs.
    Ok(Angle(if r >= TAU { 0.0 } else { r }))
}

/// A point on the unit circle, the two-neuron encoding of a direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitDirection {
    x: f64,
    y: f64,
}

impl UnitDirection {
    pub fn new(x: f64, y: f64) -> Result<Self, CircularError> {
        if !(x * x + y * y - 1.0).abs().le(&UNIT_TOLERANCE) {
            return Err(CircularError::NotUnit { x, y });
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }
}

pub fn angle_to_unit(a: Angle) -> UnitDirection {
    let (y, x) = a.radians().sin_cos();
    UnitDirection { x, y }
}

/// Decodes a raw two-neuron output by the direction of the vector; the pair
/// does not need to be normalized.
pub fn unit_to_angle(x: f64, y: f64) -> Result<Angle, CircularError> {
    if !x.is_finite() || !y.is_finite() {
        return Err(CircularError::NonFinite(if x.is_finite() { y } else { x }));
    }
    if x.hypot(y) <= DEGENERATE_RADIUS {
        return Err(CircularError::Degenerate { x, y });
    }
    wrap(y.atan2(x))
}

/// Shortest arc between two angles, in `[0, π]`.
pub fn cyclic_distance(a: Angle, b: Angle) -> f64 {
    let d = (a.0 - b.0).abs();
    d.min(TAU - d)
}

/// A non-empty collection of angle predictions for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet(Vec<Angle>);

impl PredictionSet {
    pub fn new(angles: Vec<Angle>) -> Result<Self, CircularError> {
        if angles.is_empty() {
            return Err(CircularError::Empty);
        }
        Ok(Self(angles))
    }

    pub fn from_radians(values: &[f64]) -> Result<Self, CircularError> {
        let angles = values.iter().map(|&v| wrap(v)).collect::<Result<Vec<_>, _>>()?;
        Self::new(angles)
    }

    pub fn angles(&self) -> &[Angle] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Min-span fusion of several predictions.
///
/// The predictions are sorted ascending. Each of the `n` circular
/// arrangements is then visited by repeatedly moving the smallest element up
/// by 2π; the arrangement with the smallest spread `last - first` wins (the
/// first one seen on ties) and its arithmetic mean, wrapped, is returned.
pub fn fuse_predictions(preds: &PredictionSet) -> Angle {
    let mut sorted: Vec<f64> = preds.0.iter().map(|a| a.0).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();

    // Arrangement k is sorted[k..] followed by sorted[..k] + 2π.
    let span = |k: usize| {
        if k == 0 {
            sorted[n - 1] - sorted[0]
        } else {
            (sorted[k - 1] + TAU) - sorted[k]
        }
    };
    let mut best = 0;
    let mut best_span = span(0);
    for k in 1..n {
        let d = span(k);
        if d < best_span {
            best = k;
            best_span = d;
        }
    }

    let sum = sorted[best..].iter().copied().chain(sorted[..best].iter().map(|p| p + TAU)).fold(0.0, |acc, p| acc + p);
    // finite inputs in [0, 2π) keep the mean finite
    wrap(sum / n as f64).expect("mean of finite angles")
}

/// Standard circular mean: direction of the summed unit vectors.
pub fn circular_mean_oracle(preds: &PredictionSet) -> Result<Angle, CircularError> {
    let (s, c) = preds
        .0
        .iter()
        .fold((0.0, 0.0), |(s, c), a| {
            let (sa, ca) = a.0.sin_cos();
            (s + sa, c + ca)
        });
    let resultant = s.hypot(c) / preds.len() as f64;
    if resultant <= MIN_RESULTANT {
        return Err(CircularError::VanishingResultant(resultant));
    }
    wrap(s.atan2(c))
}
