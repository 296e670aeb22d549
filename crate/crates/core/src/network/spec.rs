//! Layer-graph descriptions and shape inference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Maxpool,
    /// Local response normalization across channels.
    Lrn,
    Fc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    #[default]
    None,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    #[default]
    None,
    Dropout { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(default)]
    pub kernel: usize,
    #[serde(default)]
    pub stride: usize,
    #[serde(default)]
    pub pad: usize,
    /// Output channels (conv) or features (fc). Ignored for pooling and LRN,
    /// which keep their input channel count.
    #[serde(default)]
    pub outputs: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub regularizer: Regularizer,
    #[serde(default = "one")]
    pub lr_multiplier: f64,
}

fn one() -> f64 {
    1.0
}

impl LayerSpec {
    pub fn conv(kernel: usize, stride: usize, pad: usize, outputs: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Conv,
            kernel,
            stride,
            pad,
            outputs,
            activation: Activation::Relu,
            regularizer: Regularizer::None,
            lr_multiplier: 1.0,
        }
    }

    pub fn maxpool(kernel: usize, stride: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Maxpool,
            kernel,
            stride,
            pad: 0,
            outputs: 0,
            activation: Activation::None,
            regularizer: Regularizer::None,
            lr_multiplier: 1.0,
        }
    }

    pub fn lrn() -> Self {
        LayerSpec {
            kind: LayerKind::Lrn,
            ..LayerSpec::maxpool(0, 0)
        }
    }

    pub fn fc(outputs: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Fc,
            kernel: 0,
            stride: 0,
            pad: 0,
            outputs,
            activation: Activation::Relu,
            regularizer: Regularizer::None,
            lr_multiplier: 1.0,
        }
    }

    pub fn with_activation(mut self, a: Activation) -> Self {
        self.activation = a;
        self
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.regularizer = Regularizer::Dropout { p };
        self
    }

    pub fn with_lr_multiplier(mut self, m: f64) -> Self {
        self.lr_multiplier = m;
        self
    }

    pub fn has_params(&self) -> bool {
        matches!(self.kind, LayerKind::Conv | LayerKind::Fc)
    }
}

/// Cross-channel LRN: `b_c = a_c / (k + alpha/size * sum a_j^2)^beta` over a
/// window of `size` channels centered on `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrnParams {
    pub size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
}

impl Default for LrnParams {
    fn default() -> Self {
        LrnParams {
            size: 5,
            alpha: 1e-4,
            beta: 0.75,
            k: 2.0,
        }
    }
}

/// Activation shape between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Spatial { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_side: usize,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
    #[serde(default)]
    pub lrn: LrnParams,
}

fn window_out(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    (kernel >= 1 && stride >= 1 && padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

impl NetworkSpec {
    /// Output shape of every layer, validating the chain.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let err = |i: usize, m: String| Err(Error::Shape(format!("layer {i}: {m}")));
        if self.input_channels == 0 || self.input_side == 0 {
            return Err(Error::Shape("empty input".into()));
        }
        let mut cur = Shape::Spatial {
            c: self.input_channels,
            h: self.input_side,
            w: self.input_side,
        };
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            if let Regularizer::Dropout { p } = l.regularizer {
                if !(0.0..1.0).contains(&p) {
                    return err(i, format!("dropout p = {p} outside [0, 1)"));
                }
            }
            if l.activation == Activation::Softmax && i + 1 != self.layers.len() {
                return err(i, "softmax is only allowed on the final layer".into());
            }
            if !(l.lr_multiplier.is_finite() && l.lr_multiplier >= 0.0) {
                return err(i, format!("bad lr multiplier {}", l.lr_multiplier));
            }
            cur = match (l.kind, cur) {
                (LayerKind::Conv, Shape::Spatial { h, w, .. }) => {
                    if l.outputs == 0 {
                        return err(i, "conv needs outputs >= 1".into());
                    }
                    match (
                        window_out(h, l.kernel, l.stride, l.pad),
                        window_out(w, l.kernel, l.stride, l.pad),
                    ) {
                        (Some(oh), Some(ow)) => Shape::Spatial { c: l.outputs, h: oh, w: ow },
                        _ => return err(i, format!("conv {}x{} does not fit {h}x{w}", l.kernel, l.kernel)),
                    }
                }
                (LayerKind::Maxpool, Shape::Spatial { c, h, w }) => {
                    match (
                        window_out(h, l.kernel, l.stride, l.pad),
                        window_out(w, l.kernel, l.stride, l.pad),
                    ) {
                        (Some(oh), Some(ow)) => Shape::Spatial { c, h: oh, w: ow },
                        _ => return err(i, format!("pool {}x{} does not fit {h}x{w}", l.kernel, l.kernel)),
                    }
                }
                (LayerKind::Lrn, s @ Shape::Spatial { .. }) => {
                    if self.lrn.size == 0 {
                        return err(i, "LRN window must be at least 1".into());
                    }
                    s
                }
                (LayerKind::Fc, _) => {
                    if l.outputs == 0 {
                        return err(i, "fc needs outputs >= 1".into());
                    }
                    Shape::Flat(l.outputs)
                }
                (kind, Shape::Flat(_)) => {
                    return err(i, format!("{kind:?} cannot follow a fully-connected layer"));
                }
            };
            out.push(cur);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes()?;
        let last = self
            .layers
            .last()
            .ok_or_else(|| Error::Shape("network has no layers".into()))?;
        if last.kind != LayerKind::Fc
            || last.activation != Activation::Softmax
            || last.outputs != self.num_classes
        {
            return Err(Error::Shape(format!(
                "final layer must be fc with {} outputs and softmax",
                self.num_classes
            )));
        }
        if self.num_classes < 1 {
            return Err(Error::Shape("need at least one class".into()));
        }
        Ok(())
    }

    /// Sets `p` on every dropout layer.
    pub fn with_dropout(mut self, p: f64) -> Self {
        for l in &mut self.layers {
            if let Regularizer::Dropout { .. } = l.regularizer {
                l.regularizer = Regularizer::Dropout { p };
            }
        }
        self
    }

    pub fn param_count(&self) -> usize {
        let Ok(shapes) = self.shapes() else { return 0 };
        let mut prev = Shape::Spatial {
            c: self.input_channels,
            h: self.input_side,
            w: self.input_side,
        };
        let mut n = 0;
        for (l, s) in self.layers.iter().zip(shapes) {
            n += match (l.kind, prev) {
                (LayerKind::Conv, Shape::Spatial { c, .. }) => l.outputs * (c * l.kernel * l.kernel + 1),
                (LayerKind::Fc, p) => l.outputs * (p.len() + 1),
                _ => 0,
            };
            prev = s;
        }
        n
    }
}

/// The full eight-layer configuration: five convolution stages (the first two
/// followed by max-pooling and LRN) and three fully-connected layers, on a
/// 227-pixel input. The first convolution and the last two fully-connected
/// layers learn 10x faster.
pub fn paper_architecture(k: usize) -> NetworkSpec {
    NetworkSpec {
        input_side: 227,
        input_channels: 3,
        layers: vec![
            LayerSpec::conv(11, 4, 0, 96).with_lr_multiplier(10.0),
            LayerSpec::maxpool(3, 2),
            LayerSpec::lrn(),
            LayerSpec::conv(5, 1, 2, 256),
            LayerSpec::maxpool(3, 2),
            LayerSpec::lrn(),
            LayerSpec::conv(3, 1, 1, 384),
            LayerSpec::conv(3, 1, 1, 384),
            LayerSpec::conv(3, 1, 1, 256),
            LayerSpec::fc(4096).with_dropout(0.5),
            LayerSpec::fc(4096).with_dropout(0.5).with_lr_multiplier(10.0),
            LayerSpec::fc(k)
                .with_activation(Activation::Softmax)
                .with_lr_multiplier(10.0),
        ],
        num_classes: k,
        lrn: LrnParams::default(),
    }
}

/// Reduced profile for CPU runs on a 64-pixel input, without LRN.
pub fn toy_architecture(k: usize) -> NetworkSpec {
    NetworkSpec {
        input_side: 64,
        input_channels: 3,
        layers: vec![
            LayerSpec::conv(5, 2, 0, 16).with_lr_multiplier(10.0),
            LayerSpec::maxpool(3, 2),
            LayerSpec::conv(3, 1, 1, 32),
            LayerSpec::maxpool(3, 2),
            LayerSpec::fc(128).with_dropout(0.5).with_lr_multiplier(10.0),
            LayerSpec::fc(k)
                .with_activation(Activation::Softmax)
                .with_lr_multiplier(10.0),
        ],
        num_classes: k,
        lrn: LrnParams::default(),
    }
}
