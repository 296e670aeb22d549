//! Mini-batch training loop.

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::{Gradients, TrainedNetwork};
use super::optim::{sgd_step, SgdState, TrainConfig};
use super::spec::NetworkSpec;
use crate::augment::{make_patch, Patch, PatchSpec};
use crate::error::{Error, Result};
use crate::imaging::LinearImage;

/// Labeled training examples addressable by index.
pub trait TrainingSet: Sync {
    fn len(&self) -> usize;
    fn example(&self, index: usize) -> Result<(Patch, usize)>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, index: usize) -> Result<usize> {
        Ok(self.example(index)?.1)
    }
}

impl TrainingSet for [(Patch, usize)] {
    fn len(&self) -> usize {
        <[_]>::len(self)
    }

    fn example(&self, index: usize) -> Result<(Patch, usize)> {
        Ok(self[index].clone())
    }

    fn label(&self, index: usize) -> Result<usize> {
        Ok(self[index].1)
    }
}

impl TrainingSet for Vec<(Patch, usize)> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn example(&self, index: usize) -> Result<(Patch, usize)> {
        self.as_slice().example(index)
    }

    fn label(&self, index: usize) -> Result<usize> {
        Ok(self[index].1)
    }
}

/// Patches generated on demand from labeled images: example `i` is patch
/// `i % patch_count` of image `i / patch_count`.
pub struct PatchBank<'a> {
    images: Vec<(&'a LinearImage, u64, usize)>,
    spec: &'a PatchSpec,
}

impl<'a> PatchBank<'a> {
    /// `images` holds `(image, patch seed, label)` triples.
    pub fn new(images: Vec<(&'a LinearImage, u64, usize)>, spec: &'a PatchSpec) -> Result<Self> {
        spec.validate()?;
        Ok(PatchBank { images, spec })
    }
}

impl TrainingSet for PatchBank<'_> {
    fn len(&self) -> usize {
        self.images.len() * self.spec.patch_count
    }

    fn example(&self, index: usize) -> Result<(Patch, usize)> {
        let (img, seed, label) = self.images[index / self.spec.patch_count];
        let patch = make_patch(img, self.spec, seed, index % self.spec.patch_count)?;
        Ok((patch, label))
    }

    fn label(&self, index: usize) -> Result<usize> {
        Ok(self.images[index / self.spec.patch_count].2)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// Mean batch loss per iteration.
    pub losses: Vec<f64>,
}

// Fixed partition of a batch for the parallel reduction: partial sums are
// always formed over the same slots and combined in slot order.
const REDUCE_CHUNKS: usize = 8;

fn dropout_rng(seed: u64, iter: usize, slot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd20f_0a7e_5eed_0001);
    rng.set_stream(((iter as u64) << 24) | slot as u64);
    rng
}

/// Mean loss and mean gradients over `batch`, identical at any thread count.
pub fn batch_gradients(
    net: &TrainedNetwork,
    data: &dyn TrainingSet,
    batch: &[usize],
    dropout_seed: Option<(u64, usize)>,
) -> Result<(f64, Gradients)> {
    let chunk = batch.len().div_ceil(REDUCE_CHUNKS).max(1);
    let partials: Vec<Result<(f64, Gradients)>> = batch
        .par_chunks(chunk)
        .enumerate()
        .map(|(ci, idxs)| {
            let mut g = Gradients::zeros_like(net);
            let mut loss = 0.0;
            for (j, &idx) in idxs.iter().enumerate() {
                let (patch, label) = data.example(idx)?;
                let input = net.input_tensor(&patch)?;
                let l = match dropout_seed {
                    Some((seed, iter)) => {
                        let mut rng = dropout_rng(seed, iter, ci * chunk + j);
                        net.accumulate(&input, label, Some(&mut rng), &mut g)?
                    }
                    None => net.accumulate::<ChaCha8Rng>(&input, label, None, &mut g)?,
                };
                loss += l;
            }
            Ok((loss, g))
        })
        .collect();
    let mut total = Gradients::zeros_like(net);
    let mut loss = 0.0;
    for p in partials {
        let (l, g) = p?;
        loss += l;
        total.add_scaled(&g, 1.0);
    }
    let n = batch.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

/// Per-channel mean of unmasked pixels over a set of images, each divided
/// by its white level.
pub fn mean_pixel<'a>(images: impl IntoIterator<Item = &'a LinearImage>) -> [f64; 3] {
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    for img in images {
        let wl = img.white_level();
        for p in img.unmasked_pixels() {
            for c in 0..3 {
                sum[c] += p[c] / wl;
            }
            n += 1;
        }
    }
    if n == 0 {
        return [0.0; 3];
    }
    sum.map(|s| s / n as f64)
}

/// Trains a freshly initialized network; `cfg.dropout_p` replaces the rate
/// of every dropout layer in `spec`.
pub fn train(
    data: &dyn TrainingSet,
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    input_mean: [f64; 3],
) -> Result<(TrainedNetwork, TrainLog)> {
    let mut net = TrainedNetwork::init(spec.clone().with_dropout(cfg.dropout_p), cfg.seed)?;
    net.set_input_mean(input_mean);
    let log = train_from(&mut net, data, cfg)?;
    Ok((net, log))
}

/// Continues training `net` in place for `cfg.max_iters` iterations.
pub fn train_from(
    net: &mut TrainedNetwork,
    data: &dyn TrainingSet,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    let mut log = TrainLog::default();
    if cfg.max_iters == 0 {
        return Ok(log);
    }
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let k = net.class_count();
    let mut seen = vec![false; k];
    for i in 0..data.len() {
        let label = data.label(i)?;
        if label >= k {
            return Err(Error::Shape(format!("label {label} out of range for {k} classes")));
        }
        seen[label] = true;
    }
    let missing: Vec<usize> = (0..k).filter(|&c| !seen[c]).collect();
    if !missing.is_empty() {
        warn!("classes {missing:?} have no training examples");
    }

    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order_rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut order_rng);
    let mut cursor = 0;
    let mut state = SgdState::new(net);
    let batch_size = cfg.batch_size.min(data.len());
    let mut batch = Vec::with_capacity(batch_size);

    for iter in 0..cfg.max_iters {
        batch.clear();
        while batch.len() < batch_size {
            if cursor == order.len() {
                order.shuffle(&mut order_rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let (loss, grads) = batch_gradients(net, data, &batch, Some((cfg.seed, iter)))?;
        if !loss.is_finite() {
            return Err(Error::Divergence { iter, loss });
        }
        debug!("iter {iter}: loss {loss:.6}");
        log.losses.push(loss);
        sgd_step(net, &grads, cfg, iter, &mut state);
    }
    Ok(log)
}
