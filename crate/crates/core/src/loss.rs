//! Output activations and the seven direction losses, each with an analytic
//! (sub)gradient with respect to the prediction.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle::{angle_to_unit, unit_to_angle, wrap, Angle, CircularError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("{kind} expects {expected} values per prediction and target, got {prediction} and {target}")]
    Arity { kind: LossKind, expected: usize, prediction: usize, target: usize },
    #[error("expected {expected} network outputs, got {got}")]
    OutputArity { expected: usize, got: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("{predictions} predictions but {targets} targets")]
    BatchLength { predictions: usize, targets: usize },
    #[error("activation {activation} cannot drive a {encoding} head")]
    Incompatible { activation: ActivationKind, encoding: Encoding },
    #[error(transparent)]
    Circular(#[from] CircularError),
}

/// How a direction is represented at the network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Encoding {
    /// One neuron holding the angle itself.
    #[serde(rename = "1N")]
    Angle,
    /// Two neurons holding a point on the unit circle.
    #[serde(rename = "2N")]
    Circle,
}

impl Encoding {
    pub fn arity(self) -> usize {
        match self {
            Encoding::Angle => 1,
            Encoding::Circle => 2,
        }
    }

    /// Regression target for a ground-truth direction.
    pub fn target(self, label: Angle) -> Vec<f64> {
        match self {
            Encoding::Angle => vec![label.radians()],
            Encoding::Circle => {
                let u = angle_to_unit(label);
                vec![u.x(), u.y()]
            }
        }
    }

    /// Reads a direction back out of a (post-activation) network output.
    pub fn decode(self, output: &[f64]) -> Result<Angle, LossError> {
        match (self, output) {
            (Encoding::Angle, [a]) => Ok(wrap(*a)?),
            (Encoding::Circle, [x, y]) => Ok(unit_to_angle(*x, *y)?),
            _ => Err(LossError::OutputArity { expected: self.arity(), got: output.len() }),
        }
    }

    pub fn loss_kinds(self) -> &'static [LossKind] {
        match self {
            Encoding::Angle => &[LossKind::Linear, LossKind::LinearSq, LossKind::Cyclic, LossKind::CyclicSq, LossKind::Cos],
            Encoding::Circle => &[LossKind::Dist, LossKind::DistSq],
        }
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Encoding::Angle => "1N",
            Encoding::Circle => "2N",
        })
    }
}

impl FromStr for Encoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1N" | "1n" => Ok(Encoding::Angle),
            "2N" | "2n" => Ok(Encoding::Circle),
            _ => Err(format!("unknown encoding {s:?} (expected 1N or 2N)")),
        }
    }
}

/// Activation of the output layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    /// `z mod 2π`, for the angle encoding.
    Cyclic,
    Identity,
    /// `(e^z - 1) / (e^z + 1)`, which is `tanh(z / 2)`.
    SigmoidLike,
}

impl ActivationKind {
    pub fn supports(self, encoding: Encoding) -> bool {
        matches!(
            (self, encoding),
            (ActivationKind::Cyclic, Encoding::Angle)
                | (ActivationKind::Identity | ActivationKind::SigmoidLike, Encoding::Circle)
        )
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActivationKind::Cyclic => "cyclic",
            ActivationKind::Identity => "identity",
            ActivationKind::SigmoidLike => "sigmoid",
        })
    }
}

impl FromStr for ActivationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cyclic" => Ok(ActivationKind::Cyclic),
            "identity" => Ok(ActivationKind::Identity),
            "sigmoid" | "sigmoid_like" => Ok(ActivationKind::SigmoidLike),
            _ => Err(format!("unknown activation {s:?}")),
        }
    }
}

/// Applies an output activation, returning `(value, derivative)`.
///
/// The cyclic activation reports a derivative of 1 everywhere, ignoring the
/// jumps at multiples of 2π.
pub fn activate(kind: ActivationKind, z: f64) -> Result<(f64, f64), LossError> {
    if !z.is_finite() {
        return Err(LossError::NonFinite(z));
    }
    Ok(match kind {
        ActivationKind::Cyclic => (wrap(z)?.radians(), 1.0),
        ActivationKind::Identity => (z, 1.0),
        ActivationKind::SigmoidLike => {
            // Evaluate with e^{-|z|} so nothing overflows.
            let e = (-z.abs()).exp();
            let v = ((1.0 - e) / (1.0 + e)).copysign(z);
            (v, 0.5 * (1.0 - v * v))
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Linear,
    LinearSq,
    Cyclic,
    CyclicSq,
    Cos,
    Dist,
    DistSq,
}

impl LossKind {
    pub const ALL: [LossKind; 7] = [
        LossKind::Linear,
        LossKind::LinearSq,
        LossKind::Cyclic,
        LossKind::CyclicSq,
        LossKind::Cos,
        LossKind::Dist,
        LossKind::DistSq,
    ];

    pub fn encoding(self) -> Encoding {
        match self {
            LossKind::Dist | LossKind::DistSq => Encoding::Circle,
            _ => Encoding::Angle,
        }
    }

    pub fn arity(self) -> usize {
        self.encoding().arity()
    }

    /// Whether `prediction` sits within `tol` of a point where the loss is
    /// not differentiable.
    ///
    /// For the angle losses those are `|α - β| ∈ {0, π, 2π}` (the cosine loss
    /// is smooth everywhere); for the coordinate losses, `x₁ = x₂` or `y₁ = y₂`.
    pub fn near_kink(self, prediction: &[f64], target: &[f64], tol: f64) -> bool {
        match self {
            LossKind::Cos => false,
            LossKind::Dist | LossKind::DistSq => prediction.iter().zip(target).any(|(p, t)| (p - t).abs() < tol),
            _ => {
                let d = (prediction[0] - target[0]).abs();
                [0.0, PI, TAU].iter().any(|k| (d - k).abs() < tol)
            }
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Linear => "linear",
            LossKind::LinearSq => "linear_sq",
            LossKind::Cyclic => "cyclic",
            LossKind::CyclicSq => "cyclic_sq",
            LossKind::Cos => "cos",
            LossKind::Dist => "dist",
            LossKind::DistSq => "dist_sq",
        })
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| format!("unknown loss {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// Gradient with respect to the prediction only.
    pub grad: Vec<f64>,
}

/// Sign with `sign(0) = 0`, the subgradient of `|u|` chosen at the kink.
fn sign(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else if u < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Evaluates one loss on a single prediction/target pair.
///
/// Angle losses compare the activated output to the target as they are, with
/// no extra wrapping.
pub fn loss(kind: LossKind, prediction: &[f64], target: &[f64]) -> Result<LossResult, LossError> {
    let expected = kind.arity();
    if prediction.len() != expected || target.len() != expected {
        return Err(LossError::Arity { kind, expected, prediction: prediction.len(), target: target.len() });
    }
    if let Some(&bad) = prediction.iter().chain(target).find(|v| !v.is_finite()) {
        return Err(LossError::NonFinite(bad));
    }

    let (value, grad) = match kind {
        LossKind::Linear | LossKind::LinearSq => {
            let u = prediction[0] - target[0];
            if kind == LossKind::Linear {
                (u.abs(), vec![sign(u)])
            } else {
                (u * u, vec![2.0 * u])
            }
        }
        LossKind::Cyclic | LossKind::CyclicSq => {
            let u = prediction[0] - target[0];
            let d = u.abs();
            // On the tie d = π the direct branch wins.
            let (delta, slope) = if d <= TAU - d { (d, sign(u)) } else { (TAU - d, -sign(u)) };
            if kind == LossKind::Cyclic {
                (delta, vec![slope])
            } else {
                (delta * delta, vec![2.0 * delta * slope])
            }
        }
        LossKind::Cos => {
            let (s, c) = (prediction[0] - target[0]).sin_cos();
            (-c, vec![s])
        }
        LossKind::Dist | LossKind::DistSq => {
            let dx = prediction[0] - target[0];
            let dy = prediction[1] - target[1];
            let dist = dx.abs() + dy.abs();
            if kind == LossKind::Dist {
                (dist, vec![sign(dx), sign(dy)])
            } else {
                (dist * dist, vec![2.0 * dist * sign(dx), 2.0 * dist * sign(dy)])
            }
        }
    };
    Ok(LossResult { value, grad })
}

/// Mean loss and mean gradient over a mini-batch.
pub fn batch_loss<P, T>(kind: LossKind, predictions: &[P], targets: &[T]) -> Result<LossResult, LossError>
where
    P: AsRef<[f64]>,
    T: AsRef<[f64]>,
{
    if predictions.len() != targets.len() {
        return Err(LossError::BatchLength { predictions: predictions.len(), targets: targets.len() });
    }
    if predictions.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let mut total = LossResult { value: 0.0, grad: vec![0.0; kind.arity()] };
    for (p, t) in predictions.iter().zip(targets) {
        let r = loss(kind, p.as_ref(), t.as_ref())?;
        total.value += r.value;
        total.grad.iter_mut().zip(&r.grad).for_each(|(acc, g)| *acc += g);
    }
    let n = predictions.len() as f64;
    total.value /= n;
    total.grad.iter_mut().for_each(|g| *g /= n);
    Ok(total)
}
