use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Layer, LayerTrace};
use super::{Activation, LayerSpec, NnError, Tensor};
use crate::angle::Angle;
use crate::loss::{ActivationKind, Encoding, LossError};

/// Output head: how many neurons and which activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub encoding: Encoding,
    pub activation: ActivationKind,
}

impl HeadConfig {
    pub fn new(encoding: Encoding, activation: ActivationKind) -> Result<Self, NnError> {
        if !activation.supports(encoding) {
            return Err(LossError::Incompatible { activation, encoding }.into());
        }
        Ok(Self { encoding, activation })
    }
}

/// Width of the probing network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// 16/32 conv channels, 256/16 dense units.
    Paper,
    /// Half the channels and units of the first three layers, for fast runs.
    Desk,
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            _ => Err(format!("unknown scale {s:?} (expected paper or desk)")),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Paper => "paper",
            Scale::Desk => "desk",
        })
    }
}

/// Builds the two-conv, three-dense probing network for square grayscale
/// inputs of `input_size` (32, 64 or 128 pixels).
pub fn probing_cnn(input_size: usize, scale: Scale, head: HeadConfig, seed: u64) -> Result<Model, NnError> {
    if ![32, 64, 128].contains(&input_size) {
        return Err(NnError::Config(format!("input size {input_size} not supported (32, 64 or 128)")));
    }
    let (c1, c2, d1, d2) = match scale {
        Scale::Paper => (16, 32, 256, 16),
        Scale::Desk => (8, 16, 128, 16),
    };
    let relu = Activation::Relu;
    let specs = [
        LayerSpec::Conv2d { kernel_h: 5, kernel_w: 5, out_channels: c1, activation: relu },
        LayerSpec::MaxPool2d,
        LayerSpec::Conv2d { kernel_h: 3, kernel_w: 3, out_channels: c2, activation: relu },
        LayerSpec::MaxPool2d,
        LayerSpec::Flatten,
        LayerSpec::Dense { units: d1, activation: relu },
        LayerSpec::Dense { units: d2, activation: relu },
        LayerSpec::Dense { units: head.encoding.arity(), activation: Activation::Head(head.activation) },
    ];
    Model::new(input_size, &specs, head, seed)
}

/// One row of a model summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerSummary {
    pub name: String,
    pub output_shape: Vec<usize>,
    pub params: usize,
}

/// A sequential network over `[n, size, size, 1]` images ending in a
/// direction head.
#[derive(Debug, Clone)]
pub struct Model {
    pub(crate) layers: Vec<Layer>,
    input_shape: Vec<usize>,
    head: HeadConfig,
    seed: u64,
    trace: Option<Vec<LayerTrace>>,
}

impl Model {
    /// Builds the network and initializes it from `seed`: He-uniform weights
    /// for ReLU layers, Xavier-uniform for the head, zero biases.
    pub fn new(input_size: usize, specs: &[LayerSpec], head: HeadConfig, seed: u64) -> Result<Self, NnError> {
        let mut model = Self::uninitialized(input_size, specs, head, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut model.layers {
            let limit = match layer.spec.activation() {
                Some(Activation::Relu) => (6.0 / layer.fan_in() as f64).sqrt(),
                Some(Activation::Head(_)) => (6.0 / (layer.fan_in() + layer.out_shape[layer.out_shape.len() - 1]) as f64).sqrt(),
                None => continue,
            };
            layer.weights.iter_mut().for_each(|w| *w = rng.random_range(-limit..limit));
        }
        Ok(model)
    }

    /// Same architecture with every parameter zero.
    pub(crate) fn uninitialized(input_size: usize, specs: &[LayerSpec], head: HeadConfig, seed: u64) -> Result<Self, NnError> {
        let head = HeadConfig::new(head.encoding, head.activation)?;
        match specs.last() {
            Some(LayerSpec::Dense { units, activation: Activation::Head(kind) })
                if *units == head.encoding.arity() && *kind == head.activation => {}
            _ => {
                return Err(NnError::Config(format!(
                    "last layer must be a {}-unit dense layer with the {} head activation",
                    head.encoding.arity(),
                    head.activation
                )))
            }
        }
        if input_size == 0 {
            return Err(NnError::Config("input size must be positive".into()));
        }
        let input_shape = vec![input_size, input_size, 1];
        let mut shape = input_shape.clone();
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let layer = Layer::new(*spec, shape)?;
            shape = layer.out_shape.clone();
            layers.push(layer);
        }
        Ok(Self { layers, input_shape, head, seed, trace: None })
    }

    pub fn input_size(&self) -> usize {
        self.input_shape[0]
    }

    pub fn head(&self) -> HeadConfig {
        self.head
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn summary(&self) -> Vec<LayerSummary> {
        self.layers
            .iter()
            .map(|l| LayerSummary {
                name: l.spec.to_string(),
                output_shape: l.out_shape.clone(),
                params: l.weights.len() + l.bias.len(),
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters in layer order, weights before biases.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, values: &[f64]) -> Result<(), NnError> {
        if values.len() != self.param_count() {
            return Err(NnError::Shape { expected: vec![self.param_count()], got: vec![values.len()] });
        }
        let mut rest = values;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    /// Gradients in the same order as [`Model::params_flat`].
    pub fn grads_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.grad_w);
            out.extend_from_slice(&l.grad_b);
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            l.grad_w.iter_mut().for_each(|g| *g = 0.0);
            l.grad_b.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// `(parameters, gradients)` pairs, one per weight or bias buffer.
    pub(crate) fn buffers_mut(&mut self) -> impl Iterator<Item = (&mut [f64], &[f64])> {
        self.layers.iter_mut().flat_map(|l| {
            [(l.weights.as_mut_slice(), l.grad_w.as_slice()), (l.bias.as_mut_slice(), l.grad_b.as_slice())]
        })
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize, NnError> {
        let n = batch.batch_len();
        let expected: Vec<usize> = std::iter::once(n).chain(self.input_shape.iter().copied()).collect();
        if batch.shape() != expected.as_slice() {
            return Err(NnError::Shape { expected, got: batch.shape().to_vec() });
        }
        if let Some((index, &value)) = batch.data().iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(NnError::InputRange { index, value });
        }
        Ok(n)
    }

    /// Runs layers `start..` on `input` (the input of layer `start`).
    pub(crate) fn run_from(
        &self,
        start: usize,
        input: Vec<f64>,
        n: usize,
        mut trace: Option<&mut Vec<LayerTrace>>,
        mut signature: Option<&mut DefaultHasher>,
    ) -> Result<Tensor, NnError> {
        let mut x = input;
        for (i, layer) in self.layers.iter().enumerate().skip(start) {
            let mut t = LayerTrace::default();
            let y = layer.forward(&x, n, &mut t, signature.as_deref_mut())?;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite { layer: i });
            }
            if let Some(trace) = trace.as_deref_mut() {
                t.input = x;
                trace.push(t);
            }
            x = y;
        }
        let out_len = self.layers.last().map_or(0, |l| l.out_len());
        Tensor::new(vec![n, out_len], x)
    }

    /// Forward pass that keeps what [`Model::backward`] needs.
    pub fn forward(&mut self, batch: &Tensor) -> Result<Tensor, NnError> {
        let n = self.check_batch(batch)?;
        self.trace = None;
        let mut trace = Vec::with_capacity(self.layers.len());
        let out = self.run_from(0, batch.data().to_vec(), n, Some(&mut trace), None)?;
        self.trace = Some(trace);
        Ok(out)
    }

    /// Forward pass without side effects.
    pub fn infer(&self, batch: &Tensor) -> Result<Tensor, NnError> {
        let n = self.check_batch(batch)?;
        self.run_from(0, batch.data().to_vec(), n, None, None)
    }

    pub(crate) fn trace(&self) -> Option<&[LayerTrace]> {
        self.trace.as_deref()
    }

    /// Backpropagates `loss_grad`, the per-sample gradient of the loss with
    /// respect to the network output (shape `[n, arity]`), through the last
    /// forward pass. Afterwards the parameter gradients are those of the
    /// *mean* loss over the batch; previous gradients are overwritten.
    pub fn backward(&mut self, loss_grad: &Tensor) -> Result<(), NnError> {
        let trace = self.trace.take().ok_or(NnError::NoForward)?;
        let n = trace[0].input.len() / self.layers[0].in_len();
        let expected = vec![n, self.head.encoding.arity()];
        if loss_grad.shape() != expected.as_slice() {
            self.trace = Some(trace);
            return Err(NnError::Shape { expected, got: loss_grad.shape().to_vec() });
        }
        self.zero_grad();
        let inv_n = 1.0 / n as f64;
        let mut dy: Vec<f64> = loss_grad.data().iter().map(|g| g * inv_n).collect();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            match layer.backward(&trace[i], &dy, n, i > 0) {
                Some(dx) => dy = dx,
                None => break,
            }
        }
        self.trace = Some(trace);
        Ok(())
    }

    /// Raw post-activation outputs for a set of images.
    pub fn predict_outputs(&self, images: &[&[f64]]) -> Result<Tensor, NnError> {
        let batch = Tensor::from_images(self.input_size(), images.iter().copied())?;
        self.infer(&batch)
    }

    /// Decoded directions; a degenerate two-neuron output yields an error
    /// for that image only.
    pub fn predict_angles(&self, images: &[&[f64]]) -> Result<Vec<Result<Angle, LossError>>, NnError> {
        let out = self.predict_outputs(images)?;
        Ok((0..out.batch_len()).map(|i| self.head.encoding.decode(out.sample(i))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{loss, LossKind};

    fn head2() -> HeadConfig {
        HeadConfig::new(Encoding::Circle, ActivationKind::SigmoidLike).unwrap()
    }

    fn toy(head: HeadConfig, seed: u64) -> Model {
        let specs = [
            LayerSpec::Conv2d { kernel_h: 3, kernel_w: 3, out_channels: 3, activation: Activation::Relu },
            LayerSpec::MaxPool2d,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: head.encoding.arity(), activation: Activation::Head(head.activation) },
        ];
        Model::new(8, &specs, head, seed).unwrap()
    }

    fn images(n: usize, size: usize, salt: f64) -> Tensor {
        let data = (0..n * size * size).map(|i| 0.5 + 0.45 * (i as f64 * 0.731 + salt).sin()).collect();
        Tensor::new(vec![n, size, size, 1], data).unwrap()
    }

    #[test]
    fn full_width_layer_shapes_and_counts() {
        let m = probing_cnn(128, Scale::Paper, head2(), 0).unwrap();
        let s = m.summary();
        let shapes: Vec<Vec<usize>> = s.iter().map(|r| r.output_shape.clone()).collect();
        assert_eq!(
            shapes,
            vec![
                vec![124, 124, 16],
                vec![62, 62, 16],
                vec![60, 60, 32],
                vec![30, 30, 32],
                vec![28800],
                vec![256],
                vec![16],
                vec![2]
            ]
        );
        let params: Vec<usize> = s.iter().map(|r| r.params).collect();
        assert_eq!(params, vec![416, 0, 4640, 0, 0, 7373056, 4112, 34]);
        assert_eq!(m.param_count(), 7382258);

        let m1 = probing_cnn(128, Scale::Paper, HeadConfig::new(Encoding::Angle, ActivationKind::Cyclic).unwrap(), 0).unwrap();
        assert_eq!(m1.summary().last().unwrap().params, 17);
    }

    #[test]
    fn desk_scale_shapes() {
        for size in [32, 64, 128] {
            let m = probing_cnn(size, Scale::Desk, head2(), 0).unwrap();
            let s = m.summary();
            let c1 = size - 4;
            let c2 = c1 / 2 - 2;
            assert_eq!(s[0].output_shape, vec![c1, c1, 8]);
            assert_eq!(s[1].output_shape, vec![c1 / 2, c1 / 2, 8]);
            assert_eq!(s[2].output_shape, vec![c2, c2, 16]);
            assert_eq!(s[3].output_shape, vec![c2 / 2, c2 / 2, 16]);
            assert_eq!(s[5].output_shape, vec![128]);
        }
        assert!(matches!(probing_cnn(48, Scale::Desk, head2(), 0), Err(NnError::Config(_))));
    }

    #[test]
    fn head_must_match_encoding() {
        assert!(HeadConfig::new(Encoding::Angle, ActivationKind::SigmoidLike).is_err());
        assert!(HeadConfig::new(Encoding::Circle, ActivationKind::Cyclic).is_err());
        let bad = [LayerSpec::Flatten, LayerSpec::Dense { units: 1, activation: Activation::Head(ActivationKind::Identity) }];
        assert!(Model::new(8, &bad, head2(), 0).is_err());
    }

    #[test]
    fn zero_model_outputs_zero() {
        let head = HeadConfig::new(Encoding::Circle, ActivationKind::Identity).unwrap();
        let m = Model::uninitialized(32, &probing_cnn(32, Scale::Desk, head, 0).unwrap().specs(), head, 0).unwrap();
        let out = m.infer(&Tensor::zeros(vec![3, 32, 32, 1])).unwrap();
        assert_eq!(out.shape(), &[3, 2]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_deterministic_and_pure() {
        let mut m = toy(head2(), 3);
        let x = images(4, 8, 0.2);
        let a = m.infer(&x).unwrap();
        let b = m.forward(&x).unwrap();
        let c = m.infer(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
        assert_eq!(toy(head2(), 3).params_flat(), m.params_flat());
    }

    #[test]
    fn input_validation() {
        let m = toy(head2(), 0);
        assert!(matches!(m.infer(&Tensor::zeros(vec![1, 9, 9, 1])), Err(NnError::Shape { .. })));
        let mut x = images(1, 8, 0.0);
        x.data_mut()[5] = 1.5;
        assert!(matches!(m.infer(&x), Err(NnError::InputRange { index: 5, .. })));
    }

    #[test]
    fn backward_requires_forward() {
        let mut m = toy(head2(), 0);
        assert!(matches!(m.backward(&Tensor::zeros(vec![1, 2])), Err(NnError::NoForward)));
        m.forward(&images(2, 8, 0.0)).unwrap();
        assert!(matches!(m.backward(&Tensor::zeros(vec![3, 2])), Err(NnError::Shape { .. })));
        assert!(m.backward(&Tensor::zeros(vec![2, 2])).is_ok());
    }

    #[test]
    fn zero_loss_gradient_gives_zero_parameter_gradients() {
        let mut m = toy(head2(), 1);
        m.forward(&images(3, 8, 1.0)).unwrap();
        m.backward(&Tensor::new(vec![3, 2], vec![0.3; 6]).unwrap()).unwrap();
        assert!(m.grads_flat().iter().any(|&g| g != 0.0));
        m.backward(&Tensor::zeros(vec![3, 2])).unwrap();
        assert!(m.grads_flat().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_is_linear_in_loss_gradient() {
        let mut m = toy(head2(), 2);
        m.forward(&images(3, 8, 2.0)).unwrap();
        let g = Tensor::new(vec![3, 2], vec![0.4, -1.1, 0.2, 0.7, -0.3, 0.05]).unwrap();
        m.backward(&g).unwrap();
        let once = m.grads_flat();
        let mut g2 = g.clone();
        g2.scale(2.0);
        m.backward(&g2).unwrap();
        for (a, b) in once.iter().zip(m.grads_flat()) {
            assert!((2.0 * a - b).abs() <= 1e-10);
        }
    }

    // Central differences (h = 1e-4) on every parameter of an 8x8 toy model
    // against the mean batch loss.
    #[test]
    fn toy_gradients_match_finite_differences() {
        for (head, kind) in [
            (head2(), LossKind::DistSq),
            (HeadConfig::new(Encoding::Angle, ActivationKind::Cyclic).unwrap(), LossKind::Cos),
        ] {
            let mut m = toy(head, 5);
            let x = images(2, 8, 0.9);
            let targets: Vec<Vec<f64>> = [1.0, 4.0].iter().map(|&a| head.encoding.target(Angle::new(a).unwrap())).collect();
            let mean_loss = |m: &Model| -> f64 {
                let out = m.infer(&x).unwrap();
                (0..2).map(|i| loss(kind, out.sample(i), &targets[i]).unwrap().value).sum::<f64>() / 2.0
            };
            let out = m.forward(&x).unwrap();
            let grads: Vec<f64> = (0..2).flat_map(|i| loss(kind, out.sample(i), &targets[i]).unwrap().grad).collect();
            m.backward(&Tensor::new(vec![2, head.encoding.arity()], grads).unwrap()).unwrap();
            let analytic = m.grads_flat();

            let params = m.params_flat();
            let h = 1e-4;
            for (k, a) in analytic.iter().enumerate() {
                let mut p = params.clone();
                p[k] += h;
                m.set_params_flat(&p).unwrap();
                let up = mean_loss(&m);
                p[k] -= 2.0 * h;
                m.set_params_flat(&p).unwrap();
                let down = mean_loss(&m);
                let numeric = (up - down) / (2.0 * h);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                assert!(rel < 1e-4, "{kind} param {k}: analytic {a} numeric {numeric}");
            }
            m.set_params_flat(&params).unwrap();
        }
    }
}
