//! Validation error as a function of the number of illuminant clusters.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{derive_seed, RunConfig};
use super::crossval::{evaluate_split, train_split};
use super::stats::statistics;
use crate::dataset::{make_folds, Dataset, FoldScheme};
use crate::error::{Error, Result};
use crate::imaging::LinearImage;

/// Share of the dataset held out for validation is one fold in this many.
pub const VALIDATION_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub median: f64,
    /// Clustering inertia (radians) on the training part.
    pub inertia: f64,
    pub n_train: usize,
    pub n_val: usize,
}

/// Fixed split: fold 0 of a five-fold plan of the configured kind is the
/// validation set, the rest is training. Returns `(train, validation)`.
pub fn validation_split(ds: &Dataset, cfg: &RunConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    let scheme = match cfg.folds {
        FoldScheme::ByClip { .. } => FoldScheme::ByClip {
            folds: VALIDATION_FOLDS,
        },
        FoldScheme::RandomKFold { .. } => FoldScheme::RandomKFold {
            folds: VALIDATION_FOLDS,
            seed: derive_seed(cfg.master_seed, "validation", 0),
        },
    };
    let plan = make_folds(ds, scheme)?;
    Ok((plan.train_indices(0), plan.test_indices(0)))
}

/// Trains on the training part at `cfg.k` and reports the median `cnn`
/// error on the validation part.
pub fn validation_run(ds: &Dataset, images: &[LinearImage], cfg: &RunConfig) -> Result<SweepRow> {
    let mut cfg = cfg.clone();
    cfg.methods = vec!["cnn".into()];
    cfg.validate()?;
    let (train_idx, val_idx) = validation_split(ds, &cfg)?;
    let model = train_split(ds, images, &train_idx, &val_idx, 0, &cfg)?;
    let rows = evaluate_split(ds, images, &val_idx, 0, Some(&model), &cfg)?;
    let errs: Vec<f64> = rows.iter().map(|r| r.error_deg).collect();
    Ok(SweepRow {
        k: cfg.k,
        median: statistics(&errs)?.median,
        inertia: model.trace.inertia,
        n_train: train_idx.len(),
        n_val: val_idx.len(),
    })
}

pub fn k_sweep(ds: &Dataset, images: &[LinearImage], cfg: &RunConfig, k_values: &[usize]) -> Result<Vec<SweepRow>> {
    if k_values.is_empty() {
        return Err(Error::Empty("K values"));
    }
    k_values
        .iter()
        .map(|&k| {
            let mut c = cfg.clone();
            c.k = k;
            validation_run(ds, images, &c)
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("k,median,inertia,n_train,n_val\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.k, r.median, r.inertia, r.n_train, r.n_val).unwrap();
    }
    out
}

pub fn write_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, sweep_csv(rows)).map_err(|e| Error::io(path, e))
}
