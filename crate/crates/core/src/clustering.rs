//! Spherical K-means over illuminant directions with angular distance.
//!
//! Each Lloyd iteration assigns every illuminant to its nearest center by
//! angle, then moves each center to the L2-normalized mean of its members.
//! The inertia tracked here is the plain sum of angles, which the normalized
//! mean does not minimize exactly, so a center move is only kept when it does
//! not raise the total. That makes the recorded inertia non-increasing at
//! every iteration.

use std::fs;
use std::path::Path;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Illuminant;

/// Cluster centers (unit-norm illuminants).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClusterFile", into = "ClusterFile")]
pub struct ClusterModel {
    centers: Vec<Illuminant>,
}

#[derive(Serialize, Deserialize)]
struct ClusterFile {
    k: usize,
    centers: Vec<[f64; 3]>,
}

impl TryFrom<ClusterFile> for ClusterModel {
    type Error = Error;

    fn try_from(f: ClusterFile) -> Result<Self> {
        if f.k != f.centers.len() {
            return Err(Error::Config(format!(
                "cluster file says k = {} but lists {} centers",
                f.k,
                f.centers.len()
            )));
        }
        let centers = f
            .centers
            .into_iter()
            .map(Illuminant::new)
            .collect::<Result<Vec<_>>>()?;
        ClusterModel::new(centers)
    }
}

impl From<ClusterModel> for ClusterFile {
    fn from(m: ClusterModel) -> Self {
        ClusterFile {
            k: m.k(),
            centers: m.centers.iter().map(|c| c.rgb()).collect(),
        }
    }
}

impl ClusterModel {
    pub fn new(centers: Vec<Illuminant>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InfeasibleClusters("K must be at least 1".into()));
        }
        Ok(ClusterModel { centers })
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[Illuminant] {
        &self.centers
    }

    /// Nearest center by angle; ties go to the lowest index.
    pub fn assign_label(&self, light: &Illuminant) -> usize {
        nearest(&self.centers, light).0
    }

    /// Same model with centers reordered so that new center `i` is old
    /// center `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> ClusterModel {
        ClusterModel {
            centers: order.iter().map(|&i| self.centers[i]).collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).expect("cluster model serializes");
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

pub fn assign_label(model: &ClusterModel, light: &Illuminant) -> usize {
    model.assign_label(light)
}

fn nearest(centers: &[Illuminant], light: &Illuminant) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = light.angle_to(c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iters: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            seed,
            restarts: 10,
            max_iters: 300,
        }
    }
}

/// Result of a clustering fit.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub model: ClusterModel,
    /// Label of each input illuminant, in input order.
    pub labels: Vec<usize>,
    /// Sum of angular distances (radians) to the assigned centers.
    pub inertia: f64,
    /// Restart that produced the returned model.
    pub restart: usize,
}

/// Trace of one Lloyd run.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydRun {
    pub centers: Vec<Illuminant>,
    pub labels: Vec<usize>,
    /// Inertia after initial assignment, then after every iteration.
    pub inertia_history: Vec<f64>,
    pub converged: bool,
}

impl LloydRun {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().expect("history is never empty")
    }
}

/// Number of pairwise-distinct directions (angle above 1e-12 rad).
pub fn distinct_directions(illums: &[Illuminant]) -> usize {
    let mut reps: Vec<Illuminant> = Vec::new();
    for l in illums {
        if !reps.iter().any(|r| r.angle_to(l) <= 1e-12) {
            reps.push(*l);
        }
    }
    reps.len()
}

pub fn kmeans_angular(illums: &[Illuminant], cfg: &KMeansConfig) -> Result<KMeansFit> {
    if cfg.k == 0 {
        return Err(Error::InfeasibleClusters("K must be at least 1".into()));
    }
    if illums.len() < cfg.k {
        return Err(Error::InfeasibleClusters(format!(
            "{} illuminants for K = {}",
            illums.len(),
            cfg.k
        )));
    }
    let distinct = distinct_directions(illums);
    if distinct < cfg.k {
        return Err(Error::InfeasibleClusters(format!(
            "only {distinct} distinct directions for K = {}",
            cfg.k
        )));
    }
    let restarts = cfg.restarts.max(1);
    let runs: Vec<LloydRun> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(cfg.seed, r);
            let init = plus_plus_init(illums, cfg.k, &mut rng);
            lloyd(illums, init, cfg.max_iters)
        })
        .collect();
    let (restart, best) = runs
        .into_iter()
        .enumerate()
        .reduce(|a, b| if b.1.inertia() < a.1.inertia() { b } else { a })
        .expect("at least one restart");
    Ok(KMeansFit {
        inertia: best.inertia(),
        model: ClusterModel {
            centers: best.centers,
        },
        labels: best.labels,
        restart,
    })
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// K-means++ seeding with probability proportional to squared angular
/// distance to the nearest chosen center.
pub fn plus_plus_init<R: Rng>(illums: &[Illuminant], k: usize, rng: &mut R) -> Vec<Illuminant> {
    let mut centers = vec![illums[rng.random_range(0..illums.len())]];
    let mut d2: Vec<f64> = illums
        .iter()
        .map(|l| l.angle_to(&centers[0]).powi(2))
        .collect();
    while centers.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => illums[dist.sample(rng)],
            // every remaining point coincides with a center
            Err(_) => illums[rng.random_range(0..illums.len())],
        };
        centers.push(next);
        for (d, l) in d2.iter_mut().zip(illums) {
            *d = d.min(l.angle_to(&next).powi(2));
        }
    }
    centers
}

fn mean_direction(illums: &[Illuminant], labels: &[usize], cluster: usize) -> Option<Illuminant> {
    let mut sum = [0.0; 3];
    let mut any = false;
    for (l, _) in illums.iter().zip(labels).filter(|(_, &c)| c == cluster) {
        let v = l.rgb();
        for c in 0..3 {
            sum[c] += v[c];
        }
        any = true;
    }
    if any {
        Illuminant::new(sum).ok()
    } else {
        None
    }
}

// Summed in input order so that termwise decreases give a decrease of the
// floating-point total.
fn total_distance(illums: &[Illuminant], labels: &[usize], centers: &[Illuminant]) -> f64 {
    illums
        .iter()
        .zip(labels)
        .map(|(l, &c)| l.angle_to(&centers[c]))
        .sum()
}

/// Lloyd iterations from the given initial centers.
pub fn lloyd(illums: &[Illuminant], init: Vec<Illuminant>, max_iters: usize) -> LloydRun {
    let k = init.len();
    let mut centers = init;
    let mut labels: Vec<usize> = illums.iter().map(|l| nearest(&centers, l).0).collect();
    let mut history = vec![total_distance(illums, &labels, &centers)];
    let mut converged = false;

    for _ in 0..max_iters {
        // update step
        let mut current = total_distance(illums, &labels, &centers);
        let mut counts = vec![0usize; k];
        for &c in &labels {
            counts[c] += 1;
        }
        let mut used_for_repair = Vec::new();
        for j in 0..k {
            if counts[j] == 0 {
                // empty cluster: jump to the point farthest from its center
                let far = illums
                    .iter()
                    .zip(&labels)
                    .enumerate()
                    .filter(|(i, _)| !used_for_repair.contains(i))
                    .map(|(i, (l, &c))| (i, l.angle_to(&centers[c])))
                    .fold((usize::MAX, -1.0), |a, b| if b.1 > a.1 { b } else { a });
                if far.0 != usize::MAX {
                    used_for_repair.push(far.0);
                    centers[j] = illums[far.0];
                }
                continue;
            }
            if let Some(candidate) = mean_direction(illums, &labels, j) {
                let previous = centers[j];
                centers[j] = candidate;
                let moved = total_distance(illums, &labels, &centers);
                if moved <= current {
                    current = moved;
                } else {
                    centers[j] = previous;
                }
            }
        }

        // assignment step
        let new_labels: Vec<usize> = illums.iter().map(|l| nearest(&centers, l).0).collect();
        let changed = new_labels != labels;
        labels = new_labels;
        history.push(total_distance(illums, &labels, &centers));
        if !changed && used_for_repair.is_empty() {
            converged = true;
            break;
        }
    }

    LloydRun {
        centers,
        labels,
        inertia_history: history,
        converged,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub num_cameras: usize,
    /// Raw, device-linear data as opposed to in-camera processed images.
    pub is_device_linear: bool,
}

/// Number of clusters for a dataset, from the number of cameras.
///
/// Operating points: 25 for two-camera linear data, 50 for eight cameras,
/// 20 for single-camera processed data. Other inputs follow the line through
/// (2, 25) and (8, 50), shifted to pass through (1, 20) for processed data,
/// rounded and clamped to `[10, 50]`.
pub fn suggest_k(profile: DatasetProfile) -> usize {
    let n = profile.num_cameras.max(1) as f64;
    let slope = 25.0 / 6.0;
    let k = if profile.is_device_linear {
        25.0 + slope * (n - 2.0)
    } else {
        20.0 + slope * (n - 1.0)
    };
    k.round().clamp(10.0, 50.0) as usize
}
