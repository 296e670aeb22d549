// A complete cross-validated experiment on relit synthetic scenes, with
// per-sample and aggregate reports written to disk.

use ccnet::augment::PatchSpec;
use ccnet::dataset::FoldScheme;
use ccnet::eval::{cross_validate, lights_on_arc, random_scene, synth_dataset, RunConfig, SceneStyle};
use ccnet::network::TrainConfig;

pub fn run_example() -> ccnet::Result<()> {
    let dir = std::env::temp_dir().join(format!("ccnet-cv-{}", std::process::id()));
    let bases: Vec<_> = (0..4).map(|s| random_scene(s, 80, 80, SceneStyle::ColoredDominant)).collect();
    let data = synth_dataset(&bases, &lights_on_arc(6, 30.0)?, dir.join("data"))?;

    let mut cfg = RunConfig::new(&data.manifest, FoldScheme::ByClip { folds: 2 }, 3);
    cfg.methods = vec!["cnn".into(), "grey_world".into(), "white_patch".into(), "grey_edge_1".into()];
    cfg.patch = Some(PatchSpec { patch_count: 20, ..PatchSpec::toy() });
    cfg.train = TrainConfig { batch_size: 16, base_lr: 0.01, max_iters: 40, ..TrainConfig::default() };
    let cv = cross_validate(&data.dataset, &data.images, &cfg)?;
    for a in cv.report.aggregates.iter().filter(|a| a.camera_id.is_none()) {
        println!("{:<12} median {:6.2} deg, mean {:6.2} deg", a.method, a.stats.median, a.stats.mean);
    }
    for t in &cv.traces {
        println!("fold {}: {} train, {} test, final loss {:.3?}", t.fold, t.train_ids.len(), t.test_ids.len(), t.final_loss);
    }
    let json = cv.report.save(dir.join("report.csv"))?;
    println!("config {} -> {}", &cv.report.config_fingerprint[..12], json.display());
    std::fs::remove_dir_all(&dir).map_err(|e| ccnet::Error::io(&dir, e))?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> ccnet::Result<()> {
    run_example()
}
