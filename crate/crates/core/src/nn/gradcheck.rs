//! Finite-difference verification of the backward pass.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::TAU;
use std::hash::Hasher;

use serde::Serialize;

use super::{Model, NnError, Tensor};
use crate::angle::Angle;
use crate::loss::{loss, ActivationKind, LossKind};

/// Largest model the checker accepts.
pub const MAX_PARAMS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Pass iff every relative error is below this.
    pub tolerance: f64,
    /// Samples whose output lies this close to a non-smooth point of the
    /// loss or the cyclic head are skipped.
    pub kink_margin: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self { step: 1e-4, tolerance: 1e-4, kink_margin: 1e-3 }
    }
}

/// Location of one parameter: layer index and offset into that layer's
/// weights followed by its biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamRef {
    pub layer: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    pub worst_param: Option<ParamRef>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub checked: usize,
    /// Parameters whose ±step perturbation flipped a ReLU, a pooling argmax
    /// or the cyclic head's period, so the difference quotient straddles a kink.
    pub skipped_params: usize,
    /// Set when the whole sample sits on a non-smooth locus.
    pub skipped_sample: Option<String>,
    pub passed: bool,
}

fn eval_from(model: &Model, start: usize, input: &[f64], kind: LossKind, target: &[f64]) -> Result<(f64, u64), NnError> {
    let mut sig = DefaultHasher::new();
    let out = model.run_from(start, input.to_vec(), 1, None, Some(&mut sig))?;
    Ok((loss(kind, out.sample(0), target)?.value, sig.finish()))
}

/// Compares every analytic parameter gradient of `loss_kind` on a single
/// `(image, label)` sample with central differences.
///
/// The relative error is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn gradcheck(
    model: &Model,
    loss_kind: LossKind,
    image: &[f64],
    label: Angle,
    opts: &GradcheckOptions,
) -> Result<GradcheckReport, NnError> {
    if model.param_count() >= MAX_PARAMS {
        return Err(NnError::Config(format!("{} parameters is too many to finite-difference", model.param_count())));
    }
    let head = model.head();
    if loss_kind.encoding() != head.encoding {
        return Err(NnError::Config(format!("{loss_kind} loss does not fit a {} head", head.encoding)));
    }

    let mut m = model.clone();
    let x = Tensor::from_images(m.input_size(), [image])?;
    let out = m.forward(&x)?;
    let target = head.encoding.target(label);

    let mut report = GradcheckReport {
        max_rel_err: 0.0,
        worst_param: None,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        checked: 0,
        skipped_params: 0,
        skipped_sample: None,
        passed: true,
    };

    if loss_kind.near_kink(out.sample(0), &target, opts.kink_margin) {
        report.skipped_sample = Some(format!("{loss_kind} loss is not smooth at output {:?} for target {:?}", out.sample(0), target));
        return Ok(report);
    }
    let trace = m.trace().ok_or(NnError::NoForward)?;
    if head.activation == ActivationKind::Cyclic {
        let z = trace[trace.len() - 1].z[0];
        let r = z.rem_euclid(TAU);
        if r.min(TAU - r) < opts.kink_margin {
            report.skipped_sample = Some(format!("cyclic head input {z} is at a wrap point"));
            return Ok(report);
        }
    }
    let inputs: Vec<Vec<f64>> = trace.iter().map(|t| t.input.clone()).collect();

    let grad = loss(loss_kind, out.sample(0), &target)?.grad;
    m.backward(&Tensor::new(vec![1, grad.len()], grad)?)?;
    for (li, layer) in m.layers.iter().enumerate() {
        if layer.grad_w.iter().chain(&layer.grad_b).any(|g| !g.is_finite()) {
            return Err(NnError::NonFinite { layer: li });
        }
    }

    for li in 0..m.layers.len() {
        let (nw, nb) = (m.layers[li].weights.len(), m.layers[li].bias.len());
        if nw + nb == 0 {
            continue;
        }
        let (_, base_sig) = eval_from(&m, li, &inputs[li], loss_kind, &target)?;
        for k in 0..nw + nb {
            let (original, analytic) = if k < nw {
                (m.layers[li].weights[k], m.layers[li].grad_w[k])
            } else {
                (m.layers[li].bias[k - nw], m.layers[li].grad_b[k - nw])
            };
            let probe = |value: f64, m: &mut Model| {
                let layer = &mut m.layers[li];
                if k < nw {
                    layer.weights[k] = value;
                } else {
                    layer.bias[k - nw] = value;
                }
            };
            let (up, down) = (original + opts.step, original - opts.step);
            probe(up, &mut m);
            let (l_up, sig_up) = eval_from(&m, li, &inputs[li], loss_kind, &target)?;
            probe(down, &mut m);
            let (l_down, sig_down) = eval_from(&m, li, &inputs[li], loss_kind, &target)?;
            probe(original, &mut m);

            if sig_up != base_sig || sig_down != base_sig {
                report.skipped_params += 1;
                continue;
            }
            let numeric = (l_up - l_down) / (up - down);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_err || report.worst_param.is_none() {
                report.max_rel_err = rel;
                report.worst_param = Some(ParamRef { layer: li, index: k });
                report.analytic_at_worst = analytic;
                report.numeric_at_worst = numeric;
            }
        }
    }
    report.passed = report.max_rel_err < opts.tolerance;
    Ok(report)
}
