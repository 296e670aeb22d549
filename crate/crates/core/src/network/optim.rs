//! SGD with momentum, weight decay, per-layer learning-rate multipliers and
//! step decay.

use serde::{Deserialize, Serialize};

use super::model::{Gradients, Params, TrainedNetwork};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Multiply the rate by `factor` every `every_n_iters` iterations. When
/// `every_n_iters` is absent the step is a third of `max_iters`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub factor: f64,
    #[serde(default)]
    pub every_n_iters: Option<usize>,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            factor: 0.1,
            every_n_iters: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub base_lr: f64,
    pub lr_schedule: LrSchedule,
    pub max_iters: usize,
    pub dropout_p: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 100,
            momentum: 0.9,
            weight_decay: 0.0005,
            base_lr: 1e-3,
            lr_schedule: LrSchedule::default(),
            max_iters: 3000,
            dropout_p: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("negative weight decay {}", self.weight_decay)));
        }
        if !(self.base_lr.is_finite() && self.base_lr >= 0.0) {
            return Err(Error::Config(format!("bad base_lr {}", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p {} outside [0, 1)", self.dropout_p)));
        }
        Ok(())
    }

    /// Learning-rate factor from the step schedule at `iter`.
    pub fn schedule(&self, iter: usize) -> f64 {
        let every = self
            .lr_schedule
            .every_n_iters
            .unwrap_or(self.max_iters / 3);
        if every == 0 {
            return 1.0;
        }
        self.lr_schedule.factor.powi((iter / every) as i32)
    }
}

/// Momentum buffers, one per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    velocity: Gradients,
}

impl SgdState {
    pub fn new(net: &TrainedNetwork) -> Self {
        SgdState {
            velocity: Gradients::zeros_like(net),
        }
    }
}

fn update(w: &mut Tensor, g: &Tensor, v: &mut Tensor, lr: f64, momentum: f64, decay: f64) {
    for ((w, g), v) in w.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
        *v = momentum * *v - lr * (g + decay * *w);
        *w += *v;
    }
}

/// One update: `v <- momentum * v - lr_layer * (g + decay * w)`, `w <- w + v`,
/// with `lr_layer = base_lr * multiplier * schedule(iter)`. Biases get no
/// weight decay.
pub fn sgd_step(
    net: &mut TrainedNetwork,
    grads: &Gradients,
    cfg: &TrainConfig,
    iter: usize,
    state: &mut SgdState,
) {
    let sched = cfg.schedule(iter);
    let multipliers: Vec<f64> = net.spec().layers.iter().map(|l| l.lr_multiplier).collect();
    for (((p, g), v), mult) in net
        .params_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.velocity.layers)
        .zip(multipliers)
    {
        if let (Some(Params { weight, bias }), Some(g), Some(v)) = (p, g, v) {
            let lr = cfg.base_lr * mult * sched;
            update(weight, &g.weight, &mut v.weight, lr, cfg.momentum, cfg.weight_decay);
            update(bias, &g.bias, &mut v.bias, lr, cfg.momentum, 0.0);
        }
    }
}
