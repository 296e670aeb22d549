// Validation error against the number of illuminant classes.

use ccnet::augment::PatchSpec;
use ccnet::dataset::FoldScheme;
use ccnet::eval::{k_sweep, lights_on_arc, random_scene, sweep_csv, synth_dataset, RunConfig, SceneStyle};
use ccnet::network::TrainConfig;

pub fn run_example() -> ccnet::Result<()> {
    let dir = std::env::temp_dir().join(format!("ccnet-sweep-{}", std::process::id()));
    let bases: Vec<_> = (0..5).map(|s| random_scene(20 + s, 72, 72, SceneStyle::ColoredDominant)).collect();
    let data = synth_dataset(&bases, &lights_on_arc(6, 30.0)?, &dir)?;

    let mut cfg = RunConfig::new(&data.manifest, FoldScheme::ByClip { folds: 5 }, 1);
    cfg.patch = Some(PatchSpec { patch_count: 12, ..PatchSpec::toy() });
    cfg.train = TrainConfig { batch_size: 16, base_lr: 0.01, max_iters: 25, ..TrainConfig::default() };
    let rows = k_sweep(&data.dataset, &data.images, &cfg, &[2, 4, 6])?;
    print!("{}", sweep_csv(&rows));
    std::fs::remove_dir_all(&dir).map_err(|e| ccnet::Error::io(&dir, e))?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> ccnet::Result<()> {
    run_example()
}
