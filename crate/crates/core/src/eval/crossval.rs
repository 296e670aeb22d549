//! Cross-validated evaluation: per fold, cluster the training ground truths,
//! train a classifier on relabeled training patches, then estimate every
//! test sample with each requested method.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{derive_seed, RunConfig};
use super::stats::{statistics, ErrorStats};
use crate::augment::sample_seed;
use crate::baselines::run_named;
use crate::clustering::{kmeans_angular, ClusterModel, KMeansConfig};
use crate::dataset::{load_image, load_manifest, make_folds, write_image, Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::estimator::{estimate_argmax, estimate_with};
use crate::imaging::{angular_error, normalize_to_canonical, Illuminant, LinearImage};
use crate::network::{self, mean_pixel, train, PatchBank, TrainedNetwork};

/// What a fold's training stage touched, for protocol checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldTrace {
    pub fold: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    /// Samples whose ground truth entered the clustering.
    pub clustered_ids: Vec<String>,
    pub inertia: f64,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FoldModel {
    pub clusters: ClusterModel,
    pub network: TrainedNetwork,
    pub trace: FoldTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample_id: String,
    pub fold: usize,
    pub method: String,
    pub camera_id: Option<String>,
    pub error_deg: f64,
    pub estimate: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    /// `None` aggregates over all cameras.
    pub camera_id: Option<String>,
    pub stats: ErrorStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_fingerprint: String,
    pub per_sample: Vec<SampleRow>,
    pub aggregates: Vec<Aggregate>,
}

impl EvalReport {
    /// Builds aggregates per method, overall and per camera, with methods in
    /// order of first appearance and cameras sorted.
    pub fn from_rows(per_sample: Vec<SampleRow>, config_fingerprint: String) -> Result<Self> {
        let mut methods: Vec<&str> = Vec::new();
        for r in &per_sample {
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
        }
        let mut aggregates = Vec::new();
        for m in methods {
            let rows: Vec<&SampleRow> = per_sample.iter().filter(|r| r.method == m).collect();
            let errs: Vec<f64> = rows.iter().map(|r| r.error_deg).collect();
            aggregates.push(Aggregate {
                method: m.to_string(),
                camera_id: None,
                stats: statistics(&errs)?,
            });
            let cams: BTreeSet<&str> = rows.iter().filter_map(|r| r.camera_id.as_deref()).collect();
            for cam in cams {
                let errs: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.camera_id.as_deref() == Some(cam))
                    .map(|r| r.error_deg)
                    .collect();
                aggregates.push(Aggregate {
                    method: m.to_string(),
                    camera_id: Some(cam.to_string()),
                    stats: statistics(&errs)?,
                });
            }
        }
        Ok(EvalReport {
            config_fingerprint,
            per_sample,
            aggregates,
        })
    }

    /// Overall statistics of one method.
    pub fn stats(&self, method: &str) -> Option<&ErrorStats> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.camera_id.is_none())
            .map(|a| &a.stats)
    }

    /// Errors of one method in row order.
    pub fn errors(&self, method: &str) -> Vec<f64> {
        self.per_sample
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.error_deg)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,fold,method,camera_id,error_deg,est_r,est_g,est_b\n");
        for r in &self.per_sample {
            let e = r.estimate;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                csv_field(&r.sample_id),
                r.fold,
                csv_field(&r.method),
                csv_field(r.camera_id.as_deref().unwrap_or("")),
                r.error_deg,
                e[0],
                e[1],
                e[2]
            )
            .unwrap();
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Writes the per-sample CSV at `csv_path` and the full report as JSON
    /// next to it.
    pub fn save(&self, csv_path: impl AsRef<Path>) -> Result<PathBuf> {
        let csv_path = csv_path.as_ref();
        if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(csv_path, self.to_csv()).map_err(|e| Error::io(csv_path, e))?;
        let json_path = csv_path.with_extension("json");
        fs::write(&json_path, self.to_json()).map_err(|e| Error::io(&json_path, e))?;
        Ok(json_path)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Decodes every sample's image in dataset order.
pub fn load_images(ds: &Dataset) -> Result<Vec<LinearImage>> {
    ds.samples().par_iter().map(load_image).collect()
}

fn check_images(ds: &Dataset, images: &[LinearImage]) -> Result<()> {
    if ds.len() != images.len() {
        return Err(Error::Shape(format!(
            "{} samples but {} images",
            ds.len(),
            images.len()
        )));
    }
    Ok(())
}

fn train_patch_seed(cfg: &RunConfig, id: &str) -> u64 {
    sample_seed(id, derive_seed(cfg.master_seed, "train-patches", 0))
}

fn test_patch_seed(cfg: &RunConfig, id: &str) -> u64 {
    sample_seed(id, derive_seed(cfg.master_seed, "test-patches", 0))
}

/// Clusters the ground truths of `train_idx` and trains a classifier on
/// their patches. Nothing outside `train_idx` is read.
pub fn train_split(
    ds: &Dataset,
    images: &[LinearImage],
    train_idx: &[usize],
    test_idx: &[usize],
    fold: usize,
    cfg: &RunConfig,
) -> Result<FoldModel> {
    check_images(ds, images)?;
    let samples = ds.samples();
    let gts: Vec<Illuminant> = train_idx.iter().map(|&i| samples[i].ground_truth).collect();
    let kcfg = KMeansConfig {
        k: cfg.k,
        seed: derive_seed(cfg.master_seed, "kmeans", fold as u64),
        restarts: cfg.kmeans_restarts,
        max_iters: 300,
    };
    let fit = kmeans_angular(&gts, &kcfg)?;
    let spec = cfg.patch_spec();
    let entries = train_idx
        .iter()
        .zip(&fit.labels)
        .map(|(&i, &label)| (&images[i], train_patch_seed(cfg, &samples[i].id), label))
        .collect();
    let bank = PatchBank::new(entries, &spec)?;
    let input_mean = mean_pixel(train_idx.iter().map(|&i| &images[i]));
    let mut tc = cfg.train.clone();
    tc.seed = derive_seed(cfg.master_seed, "train", fold as u64);
    info!(
        "fold {fold}: {} training images, inertia {:.6}, training {} iterations",
        train_idx.len(),
        fit.inertia,
        tc.max_iters
    );
    let (net, log) = train(&bank, &cfg.network(), &tc, input_mean)?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| samples[i].id.clone()).collect::<Vec<_>>();
    Ok(FoldModel {
        clusters: fit.model,
        network: net,
        trace: FoldTrace {
            fold,
            train_ids: ids(train_idx),
            test_ids: ids(test_idx),
            clustered_ids: ids(train_idx),
            inertia: fit.inertia,
            final_loss: log.losses.last().copied(),
        },
    })
}

fn estimate_method(
    method: &str,
    img: &LinearImage,
    id: &str,
    model: Option<&FoldModel>,
    cfg: &RunConfig,
) -> Result<Illuminant> {
    let cnn = || {
        model.ok_or_else(|| Error::Config(format!("method `{method}` needs a trained model")))
    };
    let seed = test_patch_seed(cfg, id);
    let spec = cfg.patch_spec();
    match method {
        "cnn" => {
            let m = cnn()?;
            let est = estimate_with(img, &m.network, &m.clusters, &spec, seed, cfg.averaging)?;
            Ok(est.illuminant)
        }
        "cnn_argmax" => {
            let m = cnn()?;
            Ok(estimate_argmax(img, &m.network, &m.clusters, &spec, seed)?.illuminant)
        }
        name => match run_named(img, name) {
            Ok(e) => Ok(e),
            Err(Error::Degenerate(msg)) => {
                warn!("{name} on `{id}` is degenerate ({msg}); using a neutral estimate");
                Ok(Illuminant::NEUTRAL)
            }
            Err(e) => Err(e),
        },
    }
}

/// Estimates every sample of `test_idx` with every configured method.
pub fn evaluate_split(
    ds: &Dataset,
    images: &[LinearImage],
    test_idx: &[usize],
    fold: usize,
    model: Option<&FoldModel>,
    cfg: &RunConfig,
) -> Result<Vec<SampleRow>> {
    check_images(ds, images)?;
    if let Some(dir) = &cfg.dump_corrected {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let per_sample: Vec<Vec<SampleRow>> = test_idx
        .par_iter()
        .map(|&i| {
            let s = &ds.samples()[i];
            let img = &images[i];
            cfg.methods
                .iter()
                .map(|m| {
                    let est = estimate_method(m, img, &s.id, model, cfg)?;
                    if m == "cnn" {
                        if let Some(dir) = &cfg.dump_corrected {
                            let out = normalize_to_canonical(img, &est)?;
                            write_image(&out, dir.join(format!("{}.png", s.id)))?;
                        }
                    }
                    Ok(SampleRow {
                        sample_id: s.id.clone(),
                        fold,
                        method: m.clone(),
                        camera_id: s.camera_id.clone(),
                        error_deg: angular_error(&est, &s.ground_truth),
                        estimate: est.rgb(),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_sample.into_iter().flatten().collect())
}

/// Trains one model per fold, in fold order. Empty when no configured
/// method needs a network.
pub fn train_folds(ds: &Dataset, images: &[LinearImage], plan: &FoldPlan, cfg: &RunConfig) -> Result<Vec<FoldModel>> {
    if !cfg.needs_cnn() {
        return Ok(Vec::new());
    }
    (0..plan.folds())
        .map(|f| train_split(ds, images, &plan.train_indices(f), &plan.test_indices(f), f, cfg))
        .collect()
}

/// Evaluates every fold's test samples; rows follow dataset order, then
/// method order.
pub fn evaluate_folds(
    ds: &Dataset,
    images: &[LinearImage],
    plan: &FoldPlan,
    models: &[FoldModel],
    cfg: &RunConfig,
) -> Result<EvalReport> {
    if plan.assignments.len() != ds.len()
        || plan.assignments.iter().zip(ds.samples()).any(|((id, _), s)| *id != s.id)
    {
        return Err(Error::Folds("fold plan does not match the dataset".into()));
    }
    if cfg.needs_cnn() && models.len() != plan.folds() {
        return Err(Error::Config(format!(
            "{} trained models for {} folds",
            models.len(),
            plan.folds()
        )));
    }
    let mut rows: Vec<(usize, SampleRow)> = Vec::new();
    for f in 0..plan.folds() {
        let test = plan.test_indices(f);
        let fold_rows = evaluate_split(ds, images, &test, f, models.get(f), cfg)?;
        let per = cfg.methods.len();
        for (j, r) in fold_rows.into_iter().enumerate() {
            rows.push((test[j / per], r));
        }
    }
    rows.sort_by_key(|(i, _)| *i);
    EvalReport::from_rows(rows.into_iter().map(|(_, r)| r).collect(), cfg.fingerprint())
}

/// Full protocol result, including what each fold trained on.
#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub report: EvalReport,
    pub plan: FoldPlan,
    pub traces: Vec<FoldTrace>,
}

/// Cross-validation on an in-memory dataset.
pub fn cross_validate(ds: &Dataset, images: &[LinearImage], cfg: &RunConfig) -> Result<CrossValidation> {
    cfg.validate()?;
    let plan = make_folds(ds, cfg.folds)?;
    let models = train_folds(ds, images, &plan, cfg)?;
    let report = evaluate_folds(ds, images, &plan, &models, cfg)?;
    Ok(CrossValidation {
        report,
        plan,
        traces: models.into_iter().map(|m| m.trace).collect(),
    })
}

/// Loads the manifest and images named by `cfg`, cross-validates, and
/// writes the report when `cfg.report` is set.
pub fn run_cross_validation(cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    cfg.check_files()?;
    let ds = load_manifest(&cfg.manifest)?;
    let images = load_images(&ds)?;
    let cv = cross_validate(&ds, &images, cfg)?;
    if let Some(path) = &cfg.report {
        cv.report.save(path)?;
    }
    Ok(cv.report)
}

const RUN_CONFIG: &str = "config.json";
const RUN_FOLDS: &str = "folds.json";

fn fold_dir(dir: &Path, f: usize) -> PathBuf {
    dir.join(format!("fold_{f:02}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes") + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Stores a trained run: the config, the fold plan and, per fold, the
/// cluster centers, network weights and training trace.
pub fn save_run(dir: impl AsRef<Path>, cfg: &RunConfig, plan: &FoldPlan, models: &[FoldModel]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    cfg.save(dir.join(RUN_CONFIG))?;
    write_json(&dir.join(RUN_FOLDS), plan)?;
    for (f, m) in models.iter().enumerate() {
        let fd = fold_dir(dir, f);
        fs::create_dir_all(&fd).map_err(|e| Error::io(&fd, e))?;
        m.clusters.save(fd.join("clusters.json"))?;
        network::io::save(&m.network, fd.join("network.ccnn"))?;
        write_json(&fd.join("trace.json"), &m.trace)?;
    }
    Ok(())
}

/// A run stored by [`save_run`].
#[derive(Debug, Clone)]
pub struct StoredRun {
    pub config: RunConfig,
    pub plan: FoldPlan,
    pub models: Vec<FoldModel>,
}

pub fn load_run(dir: impl AsRef<Path>) -> Result<StoredRun> {
    let dir = dir.as_ref();
    let config = RunConfig::load(dir.join(RUN_CONFIG))?;
    let plan: FoldPlan = read_json(&dir.join(RUN_FOLDS))?;
    let mut models = Vec::new();
    for f in 0..plan.folds() {
        let fd = fold_dir(dir, f);
        if !fd.is_dir() {
            break;
        }
        models.push(FoldModel {
            clusters: ClusterModel::load(fd.join("clusters.json"))?,
            network: network::io::load(fd.join("network.ccnn"))?,
            trace: read_json(&fd.join("trace.json"))?,
        });
    }
    Ok(StoredRun {
        config,
        plan,
        models,
    })
}
