use std::fmt;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::loss::{ActivationKind, Encoding, LossKind};
use crate::nn::{HeadConfig, Scale};

/// One training run's settings, read from JSON with no extra keys allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub encoding: Encoding,
    pub activation: ActivationKind,
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub scale: Scale,
    /// Augmented copies of each training image per epoch; 0 trains on the
    /// original images only.
    pub augment_multiplier: usize,
}

impl RunConfig {
    /// The optimal configuration: circle encoding, sigmoid-like head,
    /// squared distance loss.
    pub fn optimal() -> Self {
        Self {
            encoding: Encoding::Circle,
            activation: ActivationKind::SigmoidLike,
            loss: LossKind::DistSq,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            scale: Scale::Desk,
            augment_multiplier: 1,
        }
    }

    /// All nine valid (encoding, activation, loss) combinations, in table
    /// order, sharing the remaining settings of `self`.
    pub fn nine(&self) -> Vec<RunConfig> {
        let mut out = Vec::with_capacity(9);
        for (encoding, activations) in [
            (Encoding::Angle, &[ActivationKind::Cyclic][..]),
            (Encoding::Circle, &[ActivationKind::Identity, ActivationKind::SigmoidLike][..]),
        ] {
            for &activation in activations {
                for &loss in encoding.loss_kinds() {
                    out.push(RunConfig { encoding, activation, loss, ..*self });
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<HeadConfig, EvalError> {
        if !self.activation.supports(self.encoding) || self.loss.encoding() != self.encoding {
            return Err(EvalError::Config(format!("{self} is not a valid combination")));
        }
        if self.batch_size == 0 {
            return Err(EvalError::Config("batch_size must be positive".into()));
        }
        HeadConfig::new(self.encoding, self.activation).map_err(|e| EvalError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| EvalError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.encoding, self.activation, self.loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactly_nine_valid_combinations() {
        let nine = RunConfig::optimal().nine();
        assert_eq!(nine.len(), 9);
        assert!(nine.iter().all(|c| c.validate().is_ok()));
        let mut valid = 0;
        for encoding in [Encoding::Angle, Encoding::Circle] {
            for activation in [ActivationKind::Cyclic, ActivationKind::Identity, ActivationKind::SigmoidLike] {
                for loss in LossKind::ALL {
                    let c = RunConfig { encoding, activation, loss, ..RunConfig::optimal() };
                    valid += c.validate().is_ok() as usize;
                }
            }
        }
        assert_eq!(valid, 9);
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let cfg = RunConfig::optimal();
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"encoding\":\"2N\"") && text.contains("\"loss\":\"dist_sq\""));
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
        let typo = text.replace("\"epochs\"", "\"epoch\"");
        assert!(RunConfig::from_json(&typo).is_err());
        let bad = text.replace("dist_sq", "cos");
        assert!(matches!(RunConfig::from_json(&bad), Err(EvalError::Config(_))));
    }
}
