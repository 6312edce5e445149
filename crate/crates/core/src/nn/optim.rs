use serde::{Deserialize, Serialize};

use super::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer with per-parameter state mirroring the model's buffers.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    // momentum (SGD) or first moment (Adam)
    first: Vec<Vec<f64>>,
    // second moment, Adam only
    second: Vec<Vec<f64>>,
    step: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, model: &Model) -> Self {
        let shapes: Vec<usize> = model.layers.iter().flat_map(|l| [l.weights.len(), l.bias.len()]).collect();
        let zeros = || shapes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        let second = match kind {
            OptimizerKind::Adam { .. } => zeros(),
            OptimizerKind::Sgd { .. } => Vec::new(),
        };
        Self { kind, first: zeros(), second, step: 0 }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently stored in `model`.
    pub fn step(&mut self, model: &mut Model) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd { lr, momentum } => {
                for ((params, grads), v) in model.buffers_mut().zip(&mut self.first) {
                    for ((p, g), v) in params.iter_mut().zip(grads).zip(v.iter_mut()) {
                        *v = momentum * *v + g;
                        *p -= lr * *v;
                    }
                }
            }
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((params, grads), m), v) in model.buffers_mut().zip(&mut self.first).zip(&mut self.second) {
                    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{ActivationKind, Encoding};
    use crate::nn::{Activation, HeadConfig, LayerSpec, Tensor};

    fn tiny() -> Model {
        let head = HeadConfig::new(Encoding::Circle, ActivationKind::Identity).unwrap();
        let specs = [LayerSpec::Flatten, LayerSpec::Dense { units: 2, activation: Activation::Head(head.activation) }];
        Model::new(2, &specs, head, 9).unwrap()
    }

    #[test]
    fn sgd_single_step() {
        let mut m = tiny();
        let mut p = vec![0.0; m.param_count()];
        p[0] = 1.0;
        m.set_params_flat(&p).unwrap();
        m.layers[1].grad_w[0] = 0.5;
        let mut opt = Optimizer::new(OptimizerKind::Sgd { lr: 0.1, momentum: 0.0 }, &m);
        opt.step(&mut m);
        assert!((m.params_flat()[0] - 0.95).abs() < 1e-15);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn zero_gradients_leave_parameters() {
        for kind in [OptimizerKind::Sgd { lr: 0.1, momentum: 0.9 }, OptimizerKind::default()] {
            let mut m = tiny();
            let before = m.params_flat();
            let mut opt = Optimizer::new(kind, &m);
            for _ in 0..5 {
                opt.step(&mut m);
            }
            for (a, b) in before.iter().zip(m.params_flat()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut m = tiny();
            let mut opt = Optimizer::new(OptimizerKind::default(), &m);
            let x = Tensor::new(vec![2, 2, 2, 1], vec![0.1, 0.9, 0.3, 0.4, 0.8, 0.2, 0.6, 0.5]).unwrap();
            for _ in 0..10 {
                let out = m.forward(&x).unwrap();
                m.backward(&out).unwrap();
                opt.step(&mut m);
            }
            m.params_flat()
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
