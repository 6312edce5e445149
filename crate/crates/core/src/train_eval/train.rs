use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{e_deg, EvalError, RunConfig};
use crate::angle::Angle;
use crate::data::{AugmentConfig, AugmentParams, FoldSplit, LabeledImage};
use crate::loss::loss;
use crate::nn::{probing_cnn, Model, NnError, Optimizer, OptimizerKind, Tensor};

const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch; absent for the initial model.
    pub train_loss: Option<f64>,
    pub val_e_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub fold: usize,
    /// Epoch whose weights were kept; 0 is the untrained model.
    pub best_epoch: usize,
    pub val_e_deg: f64,
    pub test_e_deg: f64,
    /// Test images whose two-neuron output was too close to the origin to
    /// decode; they count as predicting angle 0.
    pub degenerate_outputs: usize,
    pub history: Vec<EpochStats>,
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub model: Model,
    pub report: RunReport,
}

/// Predicts every image, decoding degenerate outputs as angle 0.
/// Returns the angles and how many fell back.
pub fn predict_dataset(model: &Model, images: &[&LabeledImage]) -> Result<(Vec<Angle>, usize), EvalError> {
    let mut angles = Vec::with_capacity(images.len());
    let mut fallbacks = 0;
    for chunk in images.chunks(EVAL_BATCH) {
        let pixels: Vec<&[f64]> = chunk.iter().map(|img| img.pixels.as_slice()).collect();
        for decoded in model.predict_angles(&pixels)? {
            angles.push(decoded.unwrap_or_else(|_| {
                fallbacks += 1;
                Angle::ZERO
            }));
        }
    }
    Ok((angles, fallbacks))
}

/// E_deg of `model` on `images` and the number of fallback decodes.
pub fn evaluate(model: &Model, images: &[&LabeledImage]) -> Result<(f64, usize), EvalError> {
    let (pred, fallbacks) = predict_dataset(model, images)?;
    let labels: Vec<Angle> = images.iter().map(|img| img.label).collect();
    Ok((e_deg(&pred, &labels)?, fallbacks))
}

fn resolve<'a>(
    ids: &[String],
    index: &HashMap<&str, &'a LabeledImage>,
    part: &str,
) -> Result<Vec<&'a LabeledImage>, EvalError> {
    if ids.is_empty() {
        return Err(EvalError::Config(format!("the {part} split is empty")));
    }
    ids.iter()
        .map(|id| index.get(id.as_str()).copied().ok_or_else(|| EvalError::Config(format!("{part} id {id:?} is not in the dataset"))))
        .collect()
}

/// Trains the probing CNN on the fold's training split, keeps the weights of
/// the epoch with the lowest validation E_deg (ties keep the earlier epoch)
/// and reports E_deg on the test split.
///
/// Each epoch visits every training image `augment_multiplier` times, each
/// time freshly augmented, in a shuffled order.
pub fn train(config: &RunConfig, dataset: &[LabeledImage], fold: &FoldSplit) -> Result<TrainedRun, EvalError> {
    let head = config.validate()?;
    let size = dataset.first().ok_or(EvalError::Empty)?.size;
    if dataset.iter().any(|img| img.size != size) {
        return Err(EvalError::Config("images differ in size".into()));
    }
    let index: HashMap<&str, &LabeledImage> = dataset.iter().map(|img| (img.id.as_str(), img)).collect();
    let train_set = resolve(&fold.train, &index, "train")?;
    let val_set = resolve(&fold.val, &index, "validation")?;
    let test_set = resolve(&fold.test, &index, "test")?;

    let mut model = probing_cnn(size, config.scale, head, config.seed)?;
    let mut opt = Optimizer::new(OptimizerKind::default(), &model);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7472_6169_6e00);
    let aug = AugmentConfig { seed: config.seed, ..AugmentConfig::default() };

    let (val0, _) = evaluate(&model, &val_set)?;
    let mut history = vec![EpochStats { epoch: 0, train_loss: None, val_e_deg: val0 }];
    let (mut best_epoch, mut best_val, mut best_params) = (0, val0, model.params_flat());

    let copies = config.augment_multiplier.max(1);
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).flat_map(|i| std::iter::repeat_n(i, copies)).collect();
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let samples: Vec<LabeledImage> = batch
                .iter()
                .map(|&i| {
                    let img = train_set[i];
                    if config.augment_multiplier == 0 {
                        img.clone()
                    } else {
                        AugmentParams::sample(&aug, &mut rng).apply(img)
                    }
                })
                .collect();
            let x = Tensor::from_images(size, samples.iter().map(|s| s.pixels.as_slice()))?;
            let out = model.forward(&x).map_err(|e| diverged(e, epoch))?;
            let mut grads = Vec::with_capacity(out.data().len());
            for (k, s) in samples.iter().enumerate() {
                let r = loss(config.loss, out.sample(k), &config.encoding.target(s.label))
                    .map_err(|_| EvalError::Diverged { epoch })?;
                total_loss += r.value;
                grads.extend(r.grad);
            }
            model.backward(&Tensor::new(out.shape().to_vec(), grads)?)?;
            if model.grads_flat().iter().any(|g| !g.is_finite()) {
                return Err(EvalError::Diverged { epoch });
            }
            opt.step(&mut model);
        }
        let train_loss = total_loss / order.len() as f64;
        if !train_loss.is_finite() {
            return Err(EvalError::Diverged { epoch });
        }
        let (val, _) = evaluate(&model, &val_set).map_err(|e| match e {
            EvalError::Nn(n) => diverged(n, epoch),
            other => other,
        })?;
        log::debug!("{config} fold {}: epoch {epoch} loss {train_loss:.4} val {val:.2} deg", fold.fold_index);
        history.push(EpochStats { epoch, train_loss: Some(train_loss), val_e_deg: val });
        if val < best_val {
            (best_epoch, best_val, best_params) = (epoch, val, model.params_flat());
        }
    }

    model.set_params_flat(&best_params)?;
    let (test_e_deg, degenerate_outputs) = evaluate(&model, &test_set)?;
    log::info!("{config} fold {}: best epoch {best_epoch}, val {best_val:.2}, test {test_e_deg:.2} deg", fold.fold_index);
    Ok(TrainedRun {
        model,
        report: RunReport {
            config: *config,
            fold: fold.fold_index,
            best_epoch,
            val_e_deg: best_val,
            test_e_deg,
            degenerate_outputs,
            history,
        },
    })
}

fn diverged(e: NnError, epoch: usize) -> EvalError {
    match e {
        NnError::NonFinite { .. } => EvalError::Diverged { epoch },
        other => other.into(),
    }
}
