use std::f64::consts::TAU;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::{axpy, dot, NnError};
use crate::loss::{activate, ActivationKind};

/// Activation applied after a convolution or dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Output activation of the network head.
    Head(ActivationKind),
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> Result<f64, crate::loss::LossError> {
        match self {
            Activation::Relu => Ok(z.max(0.0)),
            Activation::Head(kind) => Ok(activate(kind, z)?.0),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            // z was finite when the forward pass accepted it
            Activation::Head(kind) => activate(kind, z).map(|(_, d)| d).unwrap_or(0.0),
        }
    }

    /// Feeds the branch each pre-activation falls on into `state`: the ReLU
    /// sign, or which 2π period the cyclic head wrapped from.
    fn hash_branches<H: Hasher>(self, z: &[f64], state: &mut H) {
        match self {
            Activation::Relu => {
                for chunk in z.chunks(64) {
                    let bits = chunk.iter().enumerate().fold(0u64, |acc, (i, v)| acc | (u64::from(*v > 0.0) << i));
                    bits.hash(state);
                }
            }
            Activation::Head(ActivationKind::Cyclic) => {
                for v in z {
                    ((v / TAU).floor() as i64).hash(state);
                }
            }
            Activation::Head(_) => {}
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Relu => f.write_str("ReLU"),
            Activation::Head(kind) => write!(f, "{kind}"),
        }
    }
}

/// One layer of a sequential network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Valid (unpadded) stride-1 convolution.
    Conv2d { kernel_h: usize, kernel_w: usize, out_channels: usize, activation: Activation },
    /// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
    MaxPool2d,
    Flatten,
    Dense { units: usize, activation: Activation },
}

impl LayerSpec {
    /// Per-sample output shape, or an error if the layer cannot accept `input`.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let spatial = |what: &str| -> Result<(usize, usize, usize), NnError> {
            match *input {
                [h, w, c] => Ok((h, w, c)),
                _ => Err(NnError::Config(format!("{what} needs a [h, w, c] input, got {input:?}"))),
            }
        };
        match *self {
            LayerSpec::Conv2d { kernel_h, kernel_w, out_channels, .. } => {
                let (h, w, _) = spatial("Conv2D")?;
                if kernel_h == 0 || kernel_w == 0 || out_channels == 0 || kernel_h > h || kernel_w > w {
                    return Err(NnError::Config(format!("{kernel_h}x{kernel_w} kernel does not fit a {h}x{w} input")));
                }
                Ok(vec![h - kernel_h + 1, w - kernel_w + 1, out_channels])
            }
            LayerSpec::MaxPool2d => {
                let (h, w, c) = spatial("MaxPooling2D")?;
                if h < 2 || w < 2 {
                    return Err(NnError::Config(format!("cannot pool a {h}x{w} input")));
                }
                Ok(vec![h / 2, w / 2, c])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { units, .. } => match *input {
                [_] if units > 0 => Ok(vec![units]),
                [_] => Err(NnError::Config("dense layer needs at least one unit".into())),
                _ => Err(NnError::Config(format!("Dense must follow Flatten, got input {input:?}"))),
            },
        }
    }

    /// `(weights, biases)` for the given per-sample input shape.
    pub fn param_counts(&self, input: &[usize]) -> (usize, usize) {
        match *self {
            LayerSpec::Conv2d { kernel_h, kernel_w, out_channels, .. } => {
                (kernel_h * kernel_w * input[2] * out_channels, out_channels)
            }
            LayerSpec::Dense { units, .. } => (input[0] * units, units),
            LayerSpec::MaxPool2d | LayerSpec::Flatten => (0, 0),
        }
    }

    pub fn activation(&self) -> Option<Activation> {
        match *self {
            LayerSpec::Conv2d { activation, .. } | LayerSpec::Dense { activation, .. } => Some(activation),
            _ => None,
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv2d { kernel_h, kernel_w, activation, .. } => {
                write!(f, "Conv2D ({kernel_h}x{kernel_w}), activation={activation}")
            }
            LayerSpec::MaxPool2d => f.write_str("MaxPooling2D"),
            LayerSpec::Flatten => f.write_str("Flatten"),
            LayerSpec::Dense { activation, .. } => write!(f, "Dense, activation={activation}"),
        }
    }
}

/// A layer with its parameters and gradient buffers.
///
/// Convolution weights are stored `[out_channels][kernel_h][kernel_w][in_channels]`,
/// dense weights `[units][inputs]`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layer {
    pub spec: LayerSpec,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_w: Vec<f64>,
    pub grad_b: Vec<f64>,
}

/// What the backward pass needs from one layer's forward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct LayerTrace {
    pub input: Vec<f64>,
    /// Pre-activations for conv/dense layers.
    pub z: Vec<f64>,
    /// Flat input index of each pooled maximum.
    pub argmax: Vec<usize>,
}

impl Layer {
    pub fn new(spec: LayerSpec, in_shape: Vec<usize>) -> Result<Self, NnError> {
        let out_shape = spec.output_shape(&in_shape)?;
        let (nw, nb) = spec.param_counts(&in_shape);
        Ok(Self {
            spec,
            in_shape,
            out_shape,
            weights: vec![0.0; nw],
            bias: vec![0.0; nb],
            grad_w: vec![0.0; nw],
            grad_b: vec![0.0; nb],
        })
    }

    pub fn in_len(&self) -> usize {
        self.in_shape.iter().product()
    }

    pub fn out_len(&self) -> usize {
        self.out_shape.iter().product()
    }

    pub fn fan_in(&self) -> usize {
        match self.spec {
            LayerSpec::Conv2d { kernel_h, kernel_w, .. } => kernel_h * kernel_w * self.in_shape[2],
            LayerSpec::Dense { .. } => self.in_shape[0],
            _ => 0,
        }
    }

    /// Runs the layer on a batch of `n` samples. Pre-activations and pooling
    /// indices are written into `trace`; `signature`, when given, receives
    /// the activation branches taken.
    pub fn forward<H: Hasher>(
        &self,
        input: &[f64],
        n: usize,
        trace: &mut LayerTrace,
        signature: Option<&mut H>,
    ) -> Result<Vec<f64>, crate::loss::LossError> {
        let (in_len, out_len) = (self.in_len(), self.out_len());
        match self.spec {
            LayerSpec::Flatten => Ok(input.to_vec()),
            LayerSpec::MaxPool2d => {
                let mut out = vec![0.0; n * out_len];
                trace.argmax = vec![0; n * out_len];
                for s in 0..n {
                    self.pool_sample(
                        &input[s * in_len..(s + 1) * in_len],
                        &mut out[s * out_len..(s + 1) * out_len],
                        &mut trace.argmax[s * out_len..(s + 1) * out_len],
                        s * in_len,
                    );
                }
                if let Some(sig) = signature {
                    trace.argmax.hash(sig);
                }
                Ok(out)
            }
            LayerSpec::Conv2d { activation, .. } | LayerSpec::Dense { activation, .. } => {
                let mut z = vec![0.0; n * out_len];
                for s in 0..n {
                    let x = &input[s * in_len..(s + 1) * in_len];
                    let zs = &mut z[s * out_len..(s + 1) * out_len];
                    if matches!(self.spec, LayerSpec::Dense { .. }) {
                        self.dense_sample(x, zs);
                    } else {
                        self.conv_sample(x, zs);
                    }
                }
                if let Some(sig) = signature {
                    activation.hash_branches(&z, sig);
                }
                let out = z.iter().map(|&v| activation.apply(v)).collect::<Result<Vec<_>, _>>()?;
                trace.z = z;
                Ok(out)
            }
        }
    }

    fn dense_sample(&self, x: &[f64], z: &mut [f64]) {
        let fan_in = x.len();
        for (j, zj) in z.iter_mut().enumerate() {
            *zj = self.bias[j] + dot(&self.weights[j * fan_in..(j + 1) * fan_in], x);
        }
    }

    fn conv_geometry(&self) -> (usize, usize, usize, usize, usize, usize, usize) {
        let (kh, kw) = match self.spec {
            LayerSpec::Conv2d { kernel_h, kernel_w, .. } => (kernel_h, kernel_w),
            _ => unreachable!("not a convolution"),
        };
        let (w, cin) = (self.in_shape[1], self.in_shape[2]);
        let (oh, ow, cout) = (self.out_shape[0], self.out_shape[1], self.out_shape[2]);
        (kh, kw, w, cin, oh, ow, cout)
    }

    fn gather_patch(x: &[f64], patch: &mut [f64], oy: usize, ox: usize, kh: usize, row: usize, w: usize, cin: usize) {
        for ky in 0..kh {
            let start = ((oy + ky) * w + ox) * cin;
            patch[ky * row..(ky + 1) * row].copy_from_slice(&x[start..start + row]);
        }
    }

    fn conv_sample(&self, x: &[f64], z: &mut [f64]) {
        let (kh, kw, w, cin, oh, ow, cout) = self.conv_geometry();
        let row = kw * cin;
        let plen = kh * row;
        let mut patch = vec![0.0; plen];
        for oy in 0..oh {
            for ox in 0..ow {
                Self::gather_patch(x, &mut patch, oy, ox, kh, row, w, cin);
                let zo = &mut z[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout];
                for (oc, v) in zo.iter_mut().enumerate() {
                    *v = self.bias[oc] + dot(&self.weights[oc * plen..(oc + 1) * plen], &patch);
                }
            }
        }
    }

    fn pool_sample(&self, x: &[f64], out: &mut [f64], argmax: &mut [usize], offset: usize) {
        let (w, c) = (self.in_shape[1], self.in_shape[2]);
        let (oh, ow) = (self.out_shape[0], self.out_shape[1]);
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best_idx = (2 * oy * w + 2 * ox) * c + ch;
                    let mut best = x[best_idx];
                    // Scan order (0,0), (0,1), (1,0), (1,1); strict > keeps the first maximum.
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                    let o = (oy * ow + ox) * c + ch;
                    out[o] = best;
                    argmax[o] = offset + best_idx;
                }
            }
        }
    }

    /// Accumulates parameter gradients from `dy` (gradient w.r.t. this
    /// layer's output) and returns the gradient w.r.t. its input when
    /// `want_dx` is set.
    pub fn backward(&mut self, trace: &LayerTrace, dy: &[f64], n: usize, want_dx: bool) -> Option<Vec<f64>> {
        let (in_len, out_len) = (self.in_len(), self.out_len());
        match self.spec {
            LayerSpec::Flatten => Some(dy.to_vec()),
            LayerSpec::MaxPool2d => {
                let mut dx = vec![0.0; n * in_len];
                for (g, &idx) in dy.iter().zip(&trace.argmax) {
                    dx[idx] += g;
                }
                Some(dx)
            }
            LayerSpec::Conv2d { activation, .. } | LayerSpec::Dense { activation, .. } => {
                let dz: Vec<f64> = dy.iter().zip(&trace.z).map(|(g, &z)| g * activation.derivative(z)).collect();
                let mut dx = if want_dx { vec![0.0; n * in_len] } else { Vec::new() };
                for s in 0..n {
                    let x = &trace.input[s * in_len..(s + 1) * in_len];
                    let g = &dz[s * out_len..(s + 1) * out_len];
                    let dxs = if want_dx { Some(&mut dx[s * in_len..(s + 1) * in_len]) } else { None };
                    if matches!(self.spec, LayerSpec::Dense { .. }) {
                        self.dense_backward(x, g, dxs);
                    } else {
                        self.conv_backward(x, g, dxs);
                    }
                }
                want_dx.then_some(dx)
            }
        }
    }

    fn dense_backward(&mut self, x: &[f64], g: &[f64], mut dx: Option<&mut [f64]>) {
        let fan_in = x.len();
        for (j, &gj) in g.iter().enumerate() {
            if gj == 0.0 {
                continue;
            }
            self.grad_b[j] += gj;
            axpy(&mut self.grad_w[j * fan_in..(j + 1) * fan_in], gj, x);
            if let Some(dx) = dx.as_deref_mut() {
                axpy(dx, gj, &self.weights[j * fan_in..(j + 1) * fan_in]);
            }
        }
    }

    fn conv_backward(&mut self, x: &[f64], g: &[f64], mut dx: Option<&mut [f64]>) {
        let (kh, kw, w, cin, oh, ow, cout) = self.conv_geometry();
        let row = kw * cin;
        let plen = kh * row;
        let mut patch = vec![0.0; plen];
        let mut dpatch = vec![0.0; plen];
        for oy in 0..oh {
            for ox in 0..ow {
                let go = &g[(oy * ow + ox) * cout..(oy * ow + ox + 1) * cout];
                if go.iter().all(|&v| v == 0.0) {
                    continue;
                }
                Self::gather_patch(x, &mut patch, oy, ox, kh, row, w, cin);
                dpatch.iter_mut().for_each(|v| *v = 0.0);
                for (oc, &gv) in go.iter().enumerate() {
                    if gv == 0.0 {
                        continue;
                    }
                    self.grad_b[oc] += gv;
                    axpy(&mut self.grad_w[oc * plen..(oc + 1) * plen], gv, &patch);
                    if dx.is_some() {
                        axpy(&mut dpatch, gv, &self.weights[oc * plen..(oc + 1) * plen]);
                    }
                }
                if let Some(dx) = dx.as_deref_mut() {
                    for ky in 0..kh {
                        let start = ((oy + ky) * w + ox) * cin;
                        for (d, p) in dx[start..start + row].iter_mut().zip(&dpatch[ky * row..(ky + 1) * row]) {
                            *d += p;
                        }
                    }
                }
            }
        }
    }
}
