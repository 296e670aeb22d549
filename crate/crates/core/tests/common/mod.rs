//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use ccnet::augment::{CropWindow, Patch, Provenance};
use ccnet::dataset::FoldScheme;
use ccnet::eval::{lights_on_arc, random_scene, RunConfig, SceneStyle};
use ccnet::imaging::{Illuminant, LinearImage};
use ccnet::network::{Activation, LayerSpec, LrnParams, NetworkSpec, TrainConfig, TrainedNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_illuminant<R: Rng>(rng: &mut R) -> Illuminant {
    loop {
        let v = [0; 3].map(|_| rng.random_range(0.0..1.0));
        if let Ok(l) = Illuminant::new(v) {
            return l;
        }
    }
}

pub fn patch_from(side: usize, pixels: Vec<[f64; 3]>) -> Patch {
    Patch {
        side,
        pixels,
        white_level: 1.0,
        provenance: Provenance {
            sample_id: String::new(),
            window: CropWindow {
                center: [side as f64 / 2.0; 2],
                size: side as f64,
                rotation_deg: 0.0,
            },
            flipped: false,
            scale: 1.0,
        },
    }
}

pub fn random_patch<R: Rng>(rng: &mut R, side: usize) -> Patch {
    patch_from(side, (0..side * side).map(|_| [0; 3].map(|_| rng.random_range(0.0..1.0))).collect())
}

/// A network of at most three layers on an input of at most 8x8 pixels.
pub fn random_small_spec<R: Rng>(rng: &mut R) -> NetworkSpec {
    let side = rng.random_range(4..=8);
    let k = rng.random_range(2..=5);
    let c = rng.random_range(2..=6);
    let act = |rng: &mut R| {
        if rng.random_bool(0.7) {
            Activation::Relu
        } else {
            Activation::None
        }
    };
    let head = LayerSpec::fc(k).with_activation(Activation::Softmax);
    let layers = match rng.random_range(0..6) {
        0 => vec![head],
        1 => vec![LayerSpec::conv(3, 1, 1, c).with_activation(act(rng)), head],
        2 => vec![LayerSpec::conv(3, 1, 0, c).with_activation(act(rng)), LayerSpec::maxpool(2, 2), head],
        3 => vec![LayerSpec::conv(3, 2, 1, c).with_activation(act(rng)), LayerSpec::lrn(), head],
        4 => vec![
            LayerSpec::fc(rng.random_range(3..=10)).with_activation(act(rng)),
            LayerSpec::fc(rng.random_range(3..=10)).with_activation(act(rng)),
            head,
        ],
        _ => vec![
            LayerSpec::conv(2, 1, 0, c).with_activation(act(rng)),
            LayerSpec::conv(2, 1, 1, c).with_activation(act(rng)),
            head,
        ],
    };
    NetworkSpec {
        input_side: side,
        input_channels: 3,
        layers,
        num_classes: k,
        lrn: LrnParams::default(),
    }
}

/// Random weights and biases, unit-scale inputs.
pub fn random_small_net<R: Rng>(rng: &mut R) -> (TrainedNetwork, Vec<f64>, usize) {
    let spec = random_small_spec(rng);
    let k = spec.num_classes;
    let n_in = 3 * spec.input_side * spec.input_side;
    let mut net = TrainedNetwork::init(spec, rng.random()).unwrap();
    let n = net.flat_params().len();
    for j in 0..n {
        let v: f64 = StandardNormal.sample(rng);
        *net.flat_param_mut(j).unwrap() += 0.1 * v;
    }
    let input = (0..n_in).map(|_| StandardNormal.sample(rng)).collect();
    (net, input, rng.random_range(0..k))
}

pub fn central_difference(net: &mut TrainedNetwork, input: &[f64], class: usize, j: usize, eps: f64) -> f64 {
    let orig = *net.flat_param_mut(j).unwrap();
    *net.flat_param_mut(j).unwrap() = orig + eps;
    let up = net.loss_of(input, class).unwrap();
    *net.flat_param_mut(j).unwrap() = orig - eps;
    let down = net.loss_of(input, class).unwrap();
    *net.flat_param_mut(j).unwrap() = orig;
    (up - down) / (2.0 * eps)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs())
    }
}

pub enum GradOutcome {
    /// Largest component relative error and parameter count.
    Checked(f64, usize),
    /// The loss is not differentiable within `eps` of the drawn point.
    Kink,
}

/// Compares every analytic parameter derivative with a central difference
/// at `eps`. A component that disagrees is re-measured at `eps / 4`; if
/// the two difference quotients disagree with each other as well, the
/// finite difference straddles a ReLU or max-pool switch and the draw is
/// reported as a kink.
pub fn gradient_check(net: &mut TrainedNetwork, input: &[f64], class: usize, eps: f64, tol: f64) -> GradOutcome {
    let (_, grads) = net.loss_and_gradients::<ChaCha8Rng>(input, class, None).unwrap();
    let analytic = grads.flatten();
    let mut worst = 0.0_f64;
    for (j, &a) in analytic.iter().enumerate() {
        let fd = central_difference(net, input, class, j, eps);
        let rel = relative_error(a, fd);
        if rel >= tol {
            let fine = central_difference(net, input, class, j, eps / 4.0);
            if relative_error(fd, fine) >= tol {
                return GradOutcome::Kink;
            }
        }
        worst = worst.max(rel);
    }
    GradOutcome::Checked(worst, analytic.len())
}

/// True when `v` is a non-negative combination of `centers`, decided by
/// searching every subset of at most three centers.
pub fn in_conic_hull(v: [f64; 3], centers: &[[f64; 3]], tol: f64) -> bool {
    let norm = |x: [f64; 3]| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let scale = |a: [f64; 3], s: f64| a.map(|x| x * s);
    let add = |a: [f64; 3], b: [f64; 3]| [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
    let cross = |a: [f64; 3], b: [f64; 3]| {
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    };
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let vn = norm(v);
    for a in centers {
        let t = dot(v, *a) / dot(*a, *a);
        if t >= -tol && norm(sub(v, scale(*a, t))) <= tol * vn {
            return true;
        }
    }
    for (i, a) in centers.iter().enumerate() {
        for b in &centers[i + 1..] {
            let (aa, ab, bb) = (dot(*a, *a), dot(*a, *b), dot(*b, *b));
            let (va, vb) = (dot(v, *a), dot(v, *b));
            let det = aa * bb - ab * ab;
            if det.abs() < 1e-15 {
                continue;
            }
            let x = (va * bb - vb * ab) / det;
            let y = (vb * aa - va * ab) / det;
            if x >= -tol && y >= -tol && norm(sub(v, add(scale(*a, x), scale(*b, y)))) <= tol * vn {
                return true;
            }
        }
    }
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            for k in j + 1..centers.len() {
                let (a, b, c) = (centers[i], centers[j], centers[k]);
                let det = dot(a, cross(b, c));
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = dot(v, cross(b, c)) / det;
                let y = dot(a, cross(v, c)) / det;
                let z = dot(a, cross(b, v)) / det;
                if x >= -tol && y >= -tol && z >= -tol {
                    return true;
                }
            }
        }
    }
    false
}

/// Summary statistics recomputed from their definitions: ranks by pairwise
/// counting, running sums in rank order, halves and quarter blocks taken
/// by index arithmetic.
pub struct OracleStats {
    pub mean: f64,
    pub median: f64,
    pub trimean: f64,
    pub best25: f64,
    pub worst25: f64,
}

pub fn oracle_statistics(xs: &[f64]) -> OracleStats {
    let n = xs.len();
    let mut sorted = vec![0.0; n];
    for (i, &x) in xs.iter().enumerate() {
        let rank = xs.iter().filter(|&&y| y < x).count() + xs[..i].iter().filter(|&&y| y == x).count();
        sorted[rank] = x;
    }
    let mid = |s: &[f64]| {
        let m = s.len();
        if m % 2 == 1 {
            s[(m - 1) / 2]
        } else {
            (s[m / 2 - 1] + s[m / 2]) / 2.0
        }
    };
    let avg = |s: &[f64]| {
        let mut acc = 0.0;
        for v in s {
            acc += v;
        }
        let m = acc / s.len() as f64;
        m.max(s[0]).min(s[s.len() - 1])
    };
    let q = (n + 3) / 4;
    let best25 = avg(&sorted[..q]);
    let worst25 = avg(&sorted[n - q..]);
    let median = mid(&sorted);
    let lower = &sorted[..(n + 1) / 2];
    let upper = &sorted[n - (n + 1) / 2..];
    let (q1, q3) = (mid(lower), mid(upper));
    let trimean = (median + ((q1 - median) + (q3 - median)) / 4.0).max(q1).min(q3);
    OracleStats {
        mean: avg(&sorted).max(best25).min(worst25),
        median,
        trimean,
        best25,
        worst25,
    }
}

/// Scenes whose dominant surfaces are strongly colored, with small neutral
/// specks throughout.
pub fn colored_scenes(count: usize, side: usize) -> Vec<LinearImage> {
    (0..count as u64)
        .map(|s| random_scene(100 + s, side, side, SceneStyle::ColoredDominant))
        .collect()
}

pub fn arc_lights(count: usize, spread_deg: f64) -> Vec<Illuminant> {
    lights_on_arc(count, spread_deg).unwrap()
}

/// Toy-profile settings used for the end-to-end synthetic experiment.
pub fn synthetic_config(manifest: &std::path::Path, k: usize, iters: usize) -> RunConfig {
    let mut cfg = RunConfig::new(manifest, FoldScheme::ByClip { folds: 3 }, k);
    cfg.methods = vec!["cnn".into(), "grey_world".into()];
    cfg.train = TrainConfig {
        batch_size: 32,
        base_lr: 0.01,
        max_iters: iters,
        ..TrainConfig::default()
    };
    cfg.master_seed = 7;
    cfg
}
