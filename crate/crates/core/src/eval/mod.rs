//! Experiment driver: cross-validation, error statistics, synthetic data
//! and the cluster-count sweep.

mod config;
mod crossval;
mod stats;
mod sweep;
pub mod synth;

pub use config::{derive_seed, Profile, RunConfig, CNN_METHODS};
pub use crossval::{
    cross_validate, evaluate_folds, evaluate_split, load_images, load_run, run_cross_validation, save_run,
    train_folds, train_split, Aggregate, CrossValidation, EvalReport, FoldModel, FoldTrace, SampleRow, StoredRun,
};
pub use stats::{sorted_median, statistics, trimean_of, tukey_hinges, ErrorStats, PUBLISHED_GEHLER_SHI};
pub use sweep::{k_sweep, sweep_csv, validation_run, validation_split, write_sweep_csv, SweepRow, VALIDATION_FOLDS};
pub use synth::{lights_on_arc, random_scene, synth_dataset, SceneStyle, SynthOutput};
