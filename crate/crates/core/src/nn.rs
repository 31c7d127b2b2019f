//! Small fully-connected networks with hand-written backpropagation.
//!
//! A network is a chain of dense layers `out = act(x · W + b)` with `W`
//! stored `in × out`. [`Mlp::forward`] returns a [`ForwardCache`] holding the
//! per-layer inputs and pre-activations, which [`Mlp::backward`] consumes to
//! produce exact parameter and input gradients.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{matmul, matmul_t, t_matmul, Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Linear,
    Sigmoid,
    Softplus,
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
pub fn elu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Elementwise ELU.
pub fn elu_matrix(m: &Matrix) -> Matrix {
    m.map(elu)
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => elu(x),
            Activation::Linear => x,
            Activation::Sigmoid => sigmoid(x),
            Activation::Softplus => softplus(x),
        }
    }

    /// Derivative with respect to the pre-activation.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                let d = elu_derivative(x);
                if fault::elu_flipped() {
                    -d
                } else {
                    d
                }
            }
            Activation::Linear => 1.0,
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Softplus => sigmoid(x),
        }
    }
}

/// Deliberate derivative corruption used to check that the gradient checker
/// catches broken backward passes. The flag is per thread.
#[doc(hidden)]
pub mod fault {
    use std::cell::Cell;

    thread_local! {
        static FLIP_ELU: Cell<bool> = const { Cell::new(false) };
    }

    /// Run `f` with the ELU derivative sign-flipped on this thread.
    pub fn with_flipped_elu<R>(f: impl FnOnce() -> R) -> R {
        struct Reset(bool);
        impl Drop for Reset {
            fn drop(&mut self) {
                FLIP_ELU.with(|c| c.set(self.0));
            }
        }
        let _reset = Reset(FLIP_ELU.with(|c| c.replace(true)));
        f()
    }

    #[inline]
    pub(crate) fn elu_flipped() -> bool {
        FLIP_ELU.with(|c| c.get())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `in × out`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// A dense feed-forward network. Zero layers is the identity map.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input_dim: usize,
    layers: Vec<Layer>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    dims: Vec<(usize, usize)>,
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    batch: usize,
}

/// Parameter-shaped gradient (or moment) buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// Gaussian init with standard deviation `√(1/fan_in)`, zero biases.
    /// `widths` lists every layer's output width; hidden layers use
    /// `hidden`, the last layer uses `output`.
    pub fn new(input_dim: usize, widths: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input_dim;
        for (i, &w) in widths.iter().enumerate() {
            let std = (1.0 / fan_in.max(1) as f64).sqrt();
            let data = (0..fan_in * w).map(|_| std * rng.normal()).collect();
            layers.push(Layer {
                weight: Matrix::new(fan_in, w, data).expect("sized"),
                bias: vec![0.0; w],
                activation: if i + 1 == widths.len() { output } else { hidden },
            });
            fan_in = w;
        }
        Self { input_dim, layers }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            input_dim: dim,
            layers: Vec::new(),
        }
    }

    pub fn from_layers(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        let mut d = input_dim;
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim() != d || l.bias.len() != l.out_dim() {
                return Err(Error::InvalidArgument(format!(
                    "layer {i} expects input {} (bias {}), chain provides {d}",
                    l.in_dim(),
                    l.bias.len()
                )));
            }
            d = l.out_dim();
        }
        Ok(Self { input_dim, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, Layer::out_dim)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn is_identity(&self) -> bool {
        self.layers.is_empty()
    }

    fn dims(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.in_dim(), l.out_dim())).collect()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if x.cols() != self.input_dim {
            return Err(Error::Shape {
                op: "mlp forward",
                left: x.shape(),
                right: (self.input_dim, self.output_dim()),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for l in &self.layers {
            let z = affine(&a, l)?;
            let next = z.map(|v| l.activation.apply(v));
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        let cache = ForwardCache {
            dims: self.dims(),
            inputs,
            pre,
            batch: x.rows(),
        };
        Ok((a, cache))
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim {
            return Err(Error::Shape {
                op: "mlp forward",
                left: x.shape(),
                right: (self.input_dim, self.output_dim()),
            });
        }
        let mut a = x.clone();
        for l in &self.layers {
            a = affine(&a, l)?.map(|v| l.activation.apply(v));
        }
        Ok(a)
    }

    pub fn backward(&self, cache: &ForwardCache, output_grad: &Matrix) -> Result<(Gradients, Matrix)> {
        if cache.dims != self.dims() {
            return Err(Error::InvalidArgument(
                "forward cache was produced by a network of a different shape".into(),
            ));
        }
        if output_grad.shape() != (cache.batch, self.output_dim()) {
            return Err(Error::Shape {
                op: "mlp backward",
                left: output_grad.shape(),
                right: (cache.batch, self.output_dim()),
            });
        }
        let mut grads = Gradients::zeros_like(self);
        let mut g = output_grad.clone();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre[i];
            let mut gz = g;
            for (gv, &zv) in gz.data_mut().iter_mut().zip(z.data()) {
                *gv *= l.activation.derivative(zv);
            }
            grads.weights[i] = t_matmul(&cache.inputs[i], &gz)?;
            grads.biases[i] = gz.col_sums();
            g = matmul_t(&gz, &l.weight)?;
        }
        Ok((grads, g))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.data().len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer, weights (row-major) then bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.weight.data().len();
            l.weight.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
            let b = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + b]);
            off += b;
        }
        Ok(())
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_sq_norm(&self) -> f64 {
        self.layers.iter().map(|l| l.weight.sum_sq()).sum()
    }

    /// Gradient of [`Mlp::weight_sq_norm`] scaled by `scale`.
    pub fn weight_sq_norm_grad(&self, scale: f64) -> Gradients {
        Gradients {
            weights: self.layers.iter().map(|l| l.weight.scale(2.0 * scale)).collect(),
            biases: self.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|v| v.is_finite()))
    }

    pub fn to_doc(&self) -> ParamDoc {
        let mut tensors = BTreeMap::new();
        for (i, l) in self.layers.iter().enumerate() {
            tensors.insert(
                format!("layer.{i}.weight"),
                TensorDoc {
                    shape: vec![l.in_dim(), l.out_dim()],
                    values: l.weight.data().to_vec(),
                },
            );
            tensors.insert(
                format!("layer.{i}.bias"),
                TensorDoc {
                    shape: vec![l.out_dim()],
                    values: l.bias.clone(),
                },
            );
        }
        ParamDoc {
            input_dim: self.input_dim,
            activations: self.layers.iter().map(|l| l.activation).collect(),
            tensors,
        }
    }

    pub fn from_doc(doc: &ParamDoc) -> Result<Self> {
        let mut layers = Vec::with_capacity(doc.activations.len());
        for (i, &activation) in doc.activations.iter().enumerate() {
            let w = doc
                .tensors
                .get(&format!("layer.{i}.weight"))
                .ok_or_else(|| Error::Schema(format!("missing layer.{i}.weight")))?;
            let b = doc
                .tensors
                .get(&format!("layer.{i}.bias"))
                .ok_or_else(|| Error::Schema(format!("missing layer.{i}.bias")))?;
            if w.shape.len() != 2 || b.shape.len() != 1 || b.shape[0] != b.values.len() {
                return Err(Error::Schema(format!("layer {i} has malformed shapes")));
            }
            layers.push(Layer {
                weight: Matrix::new(w.shape[0], w.shape[1], w.values.clone())?,
                bias: b.values.clone(),
                activation,
            });
        }
        if doc.tensors.len() != 2 * layers.len() {
            return Err(Error::Schema("unexpected tensors in parameter document".into()));
        }
        Mlp::from_layers(doc.input_dim, layers)
    }
}

fn affine(a: &Matrix, l: &Layer) -> Result<Matrix> {
    let mut z = matmul(a, &l.weight)?;
    let cols = z.cols();
    for r in 0..z.rows() {
        for (v, b) in z.row_mut(r).iter_mut().zip(&l.bias) {
            *v += b;
        }
    }
    debug_assert_eq!(cols, l.bias.len());
    Ok(z)
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.in_dim(), l.out_dim()))
                .collect(),
            biases: mlp.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if self.weights.len() != other.weights.len() {
            return Err(Error::InvalidArgument("gradient layer counts differ".into()));
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.add_assign(b)?;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Same ordering as [`Mlp::params_flat`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.flat().iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

fn adam_update(cfg: &AdamConfig, step: u64, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
    let c1 = 1.0 - cfg.beta1.powi(step as i32);
    let c2 = 1.0 - cfg.beta2.powi(step as i32);
    for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let mh = *m / c1;
        let vh = *v / c2;
        *p -= cfg.learning_rate * mh / (vh.sqrt() + cfg.eps);
    }
}

/// ADAM moment buffers for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Gradients,
    v: Gradients,
}

impl AdamState {
    pub fn new(mlp: &Mlp, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Gradients::zeros_like(mlp),
            v: Gradients::zeros_like(mlp),
        }
    }

    /// One bias-corrected ADAM update of `params` in place.
    pub fn step(&mut self, params: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.weights.len() != params.layers.len() || self.m.weights.len() != params.layers.len() {
            return Err(Error::InvalidArgument("optimizer, parameters and gradients disagree on layer count".into()));
        }
        for (i, (w, b)) in grads.weights.iter().zip(&grads.biases).enumerate() {
            let l = &params.layers[i];
            if w.shape() != l.weight.shape() || b.len() != l.bias.len() {
                return Err(Error::Shape {
                    op: "adam step",
                    left: w.shape(),
                    right: l.weight.shape(),
                });
            }
            if !w.is_finite() || !b.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteGradient { layer: i });
            }
        }
        self.step += 1;
        let (cfg, step) = (self.config, self.step);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| adam_update(&cfg, step, p, g, m, v);
        for (i, l) in params.layers.iter_mut().enumerate() {
            update(
                l.weight.data_mut(),
                grads.weights[i].data(),
                self.m.weights[i].data_mut(),
                self.v.weights[i].data_mut(),
            );
            update(
                &mut l.bias,
                &grads.biases[i],
                &mut self.m.biases[i],
                &mut self.v.biases[i],
            );
        }
        Ok(())
    }
}

/// `|a − n| / max(|a|, |n|, floor)`; the floor keeps coordinates whose true
/// gradient is ~0 from turning rounding noise into a large ratio.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    const FLOOR: f64 = 1e-6;
    let denom = analytic.abs().max(numeric.abs()).max(FLOOR);
    (analytic - numeric).abs() / denom
}

/// Worst relative error between `analytic` and central differences of `f`
/// around `params`.
pub fn grad_check(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], analytic: &[f64], step: f64) -> f64 {
    assert!(step > 0.0, "finite-difference step must be positive");
    assert_eq!(params.len(), analytic.len(), "analytic gradient length");
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + step;
        let up = f(&p);
        p[i] = orig - step;
        let down = f(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDoc {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Flat key → tensor document for one network. Keys are
/// `layer.<index>.weight` (shape `[in, out]`, row-major) and
/// `layer.<index>.bias` (shape `[out]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDoc {
    pub input_dim: usize,
    pub activations: Vec<Activation>,
    pub tensors: BTreeMap<String, TensorDoc>,
}
