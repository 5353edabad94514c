use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Identity => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Fully connected layer `y = act(x W + b)` with `W` stored `in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weights: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
            activation,
        }
    }

    pub fn input_width(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_width(&self) -> usize {
        self.weights.ncols()
    }
}

/// Dense feed-forward network: tanh hidden layers, identity output layer.
/// `version` counts optimiser steps applied to the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    version: u64,
}

/// Scaled random matrix with orthonormal columns (or rows, when wide).
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Array2<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let mut a = Array2::<f64>::from_shape_fn((tall, short), |_| rng.sample(StandardNormal));
    // Modified Gram-Schmidt over columns.
    for j in 0..short {
        for i in 0..j {
            let proj = a.column(i).dot(&a.column(j));
            let qi = a.column(i).to_owned();
            a.column_mut(j).scaled_add(-proj, &qi);
        }
        let norm = a.column(j).dot(&a.column(j)).sqrt();
        a.column_mut(j).mapv_inplace(|v| v / norm);
    }
    let q = if rows >= cols { a } else { a.reversed_axes().as_standard_layout().to_owned() };
    q * gain
}

impl Mlp {
    /// Orthogonal-initialised network with zero biases. Hidden layers use gain
    /// `sqrt(2)`; the output layer uses `output_gain`.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: &[usize], output: usize, output_gain: f64, rng: &mut R) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let last = i + 1 == n;
                let gain = if last { output_gain } else { 2f64.sqrt() };
                Dense {
                    weights: orthogonal(widths[i], widths[i + 1], gain, rng),
                    bias: Array1::zeros(widths[i + 1]),
                    activation: if last { Activation::Identity } else { Activation::Tanh },
                }
            })
            .collect();
        Self { layers, version: 0 }
    }

    pub fn from_layers(layers: Vec<Dense>, version: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("network needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_width() != pair[1].input_width() {
                return Err(Error::contract(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].output_width(),
                    i + 1,
                    pair[1].input_width()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_width() {
                return Err(Error::contract(format!("layer {i} bias width mismatch")));
            }
        }
        Ok(Self { layers, version })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.layers.iter().map(Dense::output_width));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("non-empty").output_width()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// All parameters in declared layer order (weights row-major, then bias).
    pub fn params_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
            .collect()
    }

    /// Inverse of [`Mlp::params_flat`]. Leaves the version untouched.
    pub fn set_params_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::contract(format!(
                "{} parameter values for a network with {}",
                values.len(),
                self.num_params()
            )));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_width() {
            return Err(Error::WidthMismatch {
                expected: format!("input width {}", self.input_width()),
                found: format!("input width {}", x.ncols()),
            });
        }
        Ok(())
    }

    /// Batched forward pass, one row per sample.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for layer in &self.layers {
            h = apply(layer, &h);
        }
        Ok(h)
    }

    /// Forward pass that keeps every layer's activations for [`Mlp::backward`].
    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        for layer in &self.layers {
            let next = apply(layer, activations.last().expect("non-empty"));
            activations.push(next);
        }
        Ok(ForwardCache { activations })
    }

    /// Reverse-mode gradients of a scalar loss given `upstream = dL/d(output)`
    /// for every row of the cached batch.
    pub fn backward(&self, cache: &ForwardCache, upstream: ArrayView2<f64>) -> Result<Gradients> {
        let out = cache.output();
        if upstream.dim() != out.dim() {
            return Err(Error::contract(format!(
                "upstream gradient shape {:?} differs from output shape {:?}",
                upstream.dim(),
                out.dim()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let y = &cache.activations[i + 1];
            if layer.activation == Activation::Tanh {
                delta.zip_mut_with(y, |d, &a| *d *= 1.0 - a * a);
            }
            let x = &cache.activations[i];
            let dw = x.t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            if i > 0 {
                delta = delta.dot(&layer.weights.t());
            }
            grads.push((dw, db));
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}

fn apply(layer: &Dense, x: &Array2<f64>) -> Array2<f64> {
    let mut z = x.dot(&layer.weights) + &layer.bias;
    if layer.activation == Activation::Tanh {
        z.mapv_inplace(f64::tanh);
    }
    z
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("non-empty")
    }
}

/// Gradient (or optimiser moment) with the same shapes as an [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len())))
                .collect(),
        }
    }

    /// Same-shaped record filled from a flat slice in declared layer order.
    pub fn from_flat(net: &Mlp, values: &[f64]) -> Result<Self> {
        let mut g = Self::zeros_like(net);
        if values.len() != net.num_params() {
            return Err(Error::contract(format!(
                "{} gradient values for a network with {}",
                values.len(),
                net.num_params()
            )));
        }
        let mut it = values.iter().copied();
        for (w, b) in &mut g.layers {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v = it.next().expect("length checked");
            }
        }
        Ok(g)
    }

    pub fn matches(&self, net: &Mlp) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|((w, b), l)| w.dim() == l.weights.dim() && b.len() == l.bias.len())
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|(w, b)| w.iter().chain(b.iter()).map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in &mut self.layers {
            *w *= factor;
            *b *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().chain(b.iter()).all(|v| v.is_finite()))
    }

    /// Rescale to at most `max_norm`; returns the norm before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.norm();
        if norm > max_norm && norm.is_finite() {
            self.scale(max_norm / norm);
        }
        norm
    }

    /// Flat view in declared layer order (weights row-major, then bias).
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
            .collect()
    }
}
