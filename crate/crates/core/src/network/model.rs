//! Trainable classifier: parameters, inference and exact gradients of the
//! softmax negative log-likelihood.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layers::{self, ConvGeom};
use super::spec::{Activation, LayerKind, NetworkSpec, Regularizer, Shape};
use super::tensor::Tensor;
use crate::augment::Patch;
use crate::error::{Error, Result};

/// Weight and bias of a conv or fc layer. Conv weights are
/// `out x in_channels x k x k`, fc weights are `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Per-layer gradients, shaped like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<Params>>,
}

impl Gradients {
    pub fn zeros_like(net: &TrainedNetwork) -> Self {
        Gradients {
            layers: net
                .params
                .iter()
                .map(|p| {
                    p.as_ref().map(|p| Params {
                        weight: Tensor::zeros(p.weight.shape()),
                        bias: Tensor::zeros(p.bias.shape()),
                    })
                })
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, s: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a, b) {
                a.weight.add_scaled(&b.weight, s);
                a.bias.add_scaled(&b.bias, s);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for p in self.layers.iter_mut().flatten() {
            p.weight.scale(s);
            p.bias.scale(s);
        }
    }

    /// All values flattened in layer order, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|p| p.weight.data().iter().chain(p.bias.data()).copied())
            .collect()
    }
}

/// Anything that maps a patch to a probability vector over K classes.
pub trait Classifier: Sync {
    fn num_classes(&self) -> usize;
    fn predict(&self, patch: &Patch) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNetwork {
    spec: NetworkSpec,
    shapes: Vec<Shape>,
    params: Vec<Option<Params>>,
    /// Mean pixel (after division by the white level) subtracted from every
    /// input.
    input_mean: [f64; 3],
}

struct Cache {
    /// Input of every layer, plus the final output.
    inputs: Vec<Vec<f64>>,
    /// Post-activation, pre-dropout output of layers with ReLU.
    activated: Vec<Option<Vec<f64>>>,
    dropout_masks: Vec<Option<Vec<f64>>>,
    cols: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
    lrn_scale: Vec<Vec<f64>>,
}

impl TrainedNetwork {
    /// He-initialized weights (Gaussian with variance 2 / fan-in), zero biases.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(spec, |fan_in, n| {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        })
    }

    /// All weights and biases zero.
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        Self::build(spec, |_, n| vec![0.0; n])
    }

    fn build(spec: NetworkSpec, mut weights: impl FnMut(usize, usize) -> Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.shapes()?;
        let mut params = Vec::with_capacity(spec.layers.len());
        let mut prev = Shape::Spatial {
            c: spec.input_channels,
            h: spec.input_side,
            w: spec.input_side,
        };
        for (l, &s) in spec.layers.iter().zip(&shapes) {
            let p = match (l.kind, prev) {
                (LayerKind::Conv, Shape::Spatial { c, .. }) => {
                    let fan_in = c * l.kernel * l.kernel;
                    Some(Params {
                        weight: Tensor::from_vec(
                            &[l.outputs, c, l.kernel, l.kernel],
                            weights(fan_in, l.outputs * fan_in),
                        )?,
                        bias: Tensor::zeros(&[l.outputs]),
                    })
                }
                (LayerKind::Fc, p) => {
                    let fan_in = p.len();
                    Some(Params {
                        weight: Tensor::from_vec(&[l.outputs, fan_in], weights(fan_in, l.outputs * fan_in))?,
                        bias: Tensor::zeros(&[l.outputs]),
                    })
                }
                _ => None,
            };
            params.push(p);
            prev = s;
        }
        Ok(TrainedNetwork {
            spec,
            shapes,
            params,
            input_mean: [0.0; 3],
        })
    }

    /// Assembles a network from explicit parameters, checking their shapes.
    pub fn from_params(spec: NetworkSpec, params: Vec<Option<Params>>, input_mean: [f64; 3]) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape(format!(
                "{} parameter slots for {} layers",
                params.len(),
                net.params.len()
            )));
        }
        for (i, (have, want)) in params.iter().zip(&net.params).enumerate() {
            let ok = match (have, want) {
                (None, None) => true,
                (Some(a), Some(b)) => a.weight.shape() == b.weight.shape() && a.bias.shape() == b.bias.shape(),
                _ => false,
            };
            if !ok {
                return Err(Error::Shape(format!("layer {i} parameters do not match the spec")));
            }
        }
        net.params = params;
        net.input_mean = input_mean;
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn class_count(&self) -> usize {
        self.spec.num_classes
    }

    pub fn params(&self) -> &[Option<Params>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Option<Params>] {
        &mut self.params
    }

    pub fn input_mean(&self) -> [f64; 3] {
        self.input_mean
    }

    pub fn set_input_mean(&mut self, mean: [f64; 3]) {
        self.input_mean = mean;
    }

    /// Parameters flattened like [`Gradients::flatten`].
    pub fn flat_params(&self) -> Vec<f64> {
        self.params
            .iter()
            .flatten()
            .flat_map(|p| p.weight.data().iter().chain(p.bias.data()).copied())
            .collect()
    }

    /// Mutable access to parameter `index` of the flattened order.
    pub fn flat_param_mut(&mut self, mut index: usize) -> Option<&mut f64> {
        for p in self.params.iter_mut().flatten() {
            let nw = p.weight.len();
            if index < nw {
                return Some(&mut p.weight.data_mut()[index]);
            }
            index -= nw;
            let nb = p.bias.len();
            if index < nb {
                return Some(&mut p.bias.data_mut()[index]);
            }
            index -= nb;
        }
        None
    }

    /// CHW input tensor: pixels divided by the white level, minus the mean.
    pub fn input_tensor(&self, patch: &Patch) -> Result<Vec<f64>> {
        if patch.side != self.spec.input_side || self.spec.input_channels != 3 {
            return Err(Error::Shape(format!(
                "patch side {} for network input {}",
                patch.side, self.spec.input_side
            )));
        }
        let plane = patch.side * patch.side;
        let mut out = vec![0.0; 3 * plane];
        for (i, px) in patch.pixels.iter().enumerate() {
            for c in 0..3 {
                out[c * plane + i] = px[c] / patch.white_level - self.input_mean[c];
            }
        }
        Ok(out)
    }

    fn geom(&self, i: usize) -> ConvGeom {
        let l = &self.spec.layers[i];
        let (c, h, w) = match self.in_shape(i) {
            Shape::Spatial { c, h, w } => (c, h, w),
            Shape::Flat(_) => unreachable!("validated spec"),
        };
        let (oh, ow) = match self.shapes[i] {
            Shape::Spatial { h, w, .. } => (h, w),
            Shape::Flat(_) => unreachable!("validated spec"),
        };
        ConvGeom {
            c,
            h,
            w,
            kernel: l.kernel,
            stride: l.stride,
            pad: l.pad,
            oh,
            ow,
        }
    }

    fn in_shape(&self, i: usize) -> Shape {
        if i == 0 {
            Shape::Spatial {
                c: self.spec.input_channels,
                h: self.spec.input_side,
                w: self.spec.input_side,
            }
        } else {
            self.shapes[i - 1]
        }
    }

    fn run<R: Rng>(&self, input: &[f64], mut dropout: Option<&mut R>) -> Result<Cache> {
        let expected = self.in_shape(0).len();
        if input.len() != expected {
            return Err(Error::Shape(format!(
                "input has {} values, network expects {expected}",
                input.len()
            )));
        }
        let n = self.spec.layers.len();
        let mut cache = Cache {
            inputs: Vec::with_capacity(n + 1),
            activated: Vec::with_capacity(n),
            dropout_masks: Vec::with_capacity(n),
            cols: vec![Vec::new(); n],
            argmax: vec![Vec::new(); n],
            lrn_scale: vec![Vec::new(); n],
        };
        cache.inputs.push(input.to_vec());
        for (i, l) in self.spec.layers.iter().enumerate() {
            let x = cache.inputs.last().expect("input pushed");
            let mut out = vec![0.0; self.shapes[i].len()];
            match l.kind {
                LayerKind::Conv => {
                    let p = self.params[i].as_ref().expect("conv has params");
                    let g = self.geom(i);
                    layers::conv_forward(x, &g, p.weight.data(), p.bias.data(), &mut cache.cols[i], &mut out);
                }
                LayerKind::Fc => {
                    let p = self.params[i].as_ref().expect("fc has params");
                    layers::fc_forward(x, p.weight.data(), p.bias.data(), &mut out);
                }
                LayerKind::Maxpool => {
                    let g = self.geom(i);
                    layers::maxpool_forward(x, &g, &mut out, &mut cache.argmax[i]);
                }
                LayerKind::Lrn => {
                    let g = self.geom(i);
                    layers::lrn_forward(x, g.c, g.h * g.w, &self.spec.lrn, &mut out, &mut cache.lrn_scale[i]);
                }
            }
            if l.activation == Activation::Relu {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
                cache.activated.push(Some(out.clone()));
            } else {
                cache.activated.push(None);
            }
            let mut mask = None;
            if let (Regularizer::Dropout { p }, Some(rng)) = (l.regularizer, dropout.as_deref_mut()) {
                if p > 0.0 {
                    let keep = 1.0 / (1.0 - p);
                    let m: Vec<f64> = (0..out.len())
                        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                        .collect();
                    out.iter_mut().zip(&m).for_each(|(v, s)| *v *= s);
                    mask = Some(m);
                }
            }
            cache.dropout_masks.push(mask);
            cache.inputs.push(out);
        }
        Ok(cache)
    }

    /// Final-layer outputs before softmax. Dropout is inactive.
    pub fn logits(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut cache = self.run::<ChaCha8Rng>(input, None)?;
        Ok(cache.inputs.pop().expect("output present"))
    }

    /// Class probabilities for a patch.
    pub fn forward(&self, patch: &Patch) -> Result<Vec<f64>> {
        Ok(layers::softmax(&self.logits(&self.input_tensor(patch)?)?))
    }

    /// Loss and gradients for one preprocessed input. With `dropout` set,
    /// fresh dropout masks are drawn from it.
    pub fn loss_and_gradients<R: Rng>(
        &self,
        input: &[f64],
        class: usize,
        dropout: Option<&mut R>,
    ) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros_like(self);
        let loss = self.accumulate(input, class, dropout, &mut grads)?;
        Ok((loss, grads))
    }

    /// Adds this sample's gradients into `grads` and returns its loss.
    pub(crate) fn accumulate<R: Rng>(
        &self,
        input: &[f64],
        class: usize,
        dropout: Option<&mut R>,
        grads: &mut Gradients,
    ) -> Result<f64> {
        if class >= self.class_count() {
            return Err(Error::Shape(format!(
                "class {class} out of range for {} classes",
                self.class_count()
            )));
        }
        let cache = self.run(input, dropout)?;
        let logits = cache.inputs.last().expect("output present");
        let loss = layers::log_sum_exp(logits) - logits[class];
        let mut grad = layers::softmax(logits);
        grad[class] -= 1.0;

        for i in (0..self.spec.layers.len()).rev() {
            let l = &self.spec.layers[i];
            if let Some(m) = &cache.dropout_masks[i] {
                grad.iter_mut().zip(m).for_each(|(g, s)| *g *= s);
            }
            if let Some(act) = &cache.activated[i] {
                grad.iter_mut().zip(act).for_each(|(g, &a)| {
                    if a <= 0.0 {
                        *g = 0.0
                    }
                });
            }
            let x = &cache.inputs[i];
            let need_input_grad = i > 0;
            let mut gin = if need_input_grad { vec![0.0; x.len()] } else { Vec::new() };
            match l.kind {
                LayerKind::Conv => {
                    let p = self.params[i].as_ref().expect("conv has params");
                    let gp = grads.layers[i].as_mut().expect("conv has grads");
                    let g = self.geom(i);
                    layers::conv_backward(
                        &grad,
                        &g,
                        p.weight.data(),
                        &cache.cols[i],
                        gp.weight.data_mut(),
                        gp.bias.data_mut(),
                        need_input_grad.then_some(gin.as_mut_slice()),
                    );
                }
                LayerKind::Fc => {
                    let p = self.params[i].as_ref().expect("fc has params");
                    let gp = grads.layers[i].as_mut().expect("fc has grads");
                    layers::fc_backward(
                        &grad,
                        x,
                        p.weight.data(),
                        gp.weight.data_mut(),
                        gp.bias.data_mut(),
                        need_input_grad.then_some(gin.as_mut_slice()),
                    );
                }
                LayerKind::Maxpool => {
                    if need_input_grad {
                        layers::maxpool_backward(&grad, &cache.argmax[i], &mut gin);
                    }
                }
                LayerKind::Lrn => {
                    if need_input_grad {
                        let g = self.geom(i);
                        layers::lrn_backward(
                            &grad,
                            x,
                            &cache.lrn_scale[i],
                            g.c,
                            g.h * g.w,
                            &self.spec.lrn,
                            &mut gin,
                        );
                    }
                }
            }
            grad = gin;
        }
        Ok(loss)
    }

    /// Exact gradients of the loss for one patch, dropout disabled.
    pub fn backward(&self, patch: &Patch, class: usize) -> Result<(f64, Gradients)> {
        self.loss_and_gradients::<ChaCha8Rng>(&self.input_tensor(patch)?, class, None)
    }

    /// As [`backward`](Self::backward) with dropout masks drawn from `rng`.
    pub fn backward_train<R: Rng>(&self, patch: &Patch, class: usize, rng: &mut R) -> Result<(f64, Gradients)> {
        self.loss_and_gradients(&self.input_tensor(patch)?, class, Some(rng))
    }

    /// Loss for a preprocessed input with dropout disabled.
    pub fn loss_of(&self, input: &[f64], class: usize) -> Result<f64> {
        let logits = self.logits(input)?;
        Ok(layers::log_sum_exp(&logits) - logits[class])
    }
}

impl Classifier for TrainedNetwork {
    fn num_classes(&self) -> usize {
        self.class_count()
    }

    fn predict(&self, patch: &Patch) -> Result<Vec<f64>> {
        self.forward(patch)
    }
}

/// Negative log-likelihood of class `c` under probabilities `probs`.
pub fn loss(probs: &[f64], c: usize) -> f64 {
    -probs[c].ln()
}

/// Same loss computed from logits, finite for any finite logits.
pub fn loss_from_logits(logits: &[f64], c: usize) -> f64 {
    layers::log_sum_exp(logits) - logits[c]
}
