// Training the reduced network on patches labeled by illuminant class,
// then saving and reloading the weights.

use ccnet::augment::{make_patch, PatchSpec};
use ccnet::eval::{random_scene, SceneStyle};
use ccnet::imaging::{apply_illuminant, Illuminant};
use ccnet::network::{self, mean_pixel, toy_architecture, train, Classifier, PatchBank, TrainConfig};

pub fn run_example() -> ccnet::Result<()> {
    let classes = [
        Illuminant::new([1.0, 0.7, 0.4])?,
        Illuminant::new([0.8, 0.9, 0.8])?,
        Illuminant::new([0.5, 0.75, 1.0])?,
    ];
    let mut images = Vec::new();
    for s in 0..4 {
        let base = random_scene(s, 96, 96, SceneStyle::ColoredDominant);
        for (c, light) in classes.iter().enumerate() {
            images.push((apply_illuminant(&base, light), c));
        }
    }
    let spec = PatchSpec { patch_count: 20, ..PatchSpec::toy() };
    let entries = images.iter().enumerate().map(|(i, (img, c))| (img, i as u64, *c)).collect();
    let bank = PatchBank::new(entries, &spec)?;
    let cfg = TrainConfig { batch_size: 16, base_lr: 0.01, max_iters: 60, ..TrainConfig::default() };
    let (net, log) = train(&bank, &toy_architecture(3), &cfg, mean_pixel(images.iter().map(|(i, _)| i)))?;
    println!(
        "{} parameters, loss {:.3} -> {:.3}",
        net.flat_params().len(),
        log.losses[0],
        log.losses.last().copied().unwrap_or(f64::NAN)
    );

    let path = std::env::temp_dir().join(format!("ccnet-toy-{}.ccnn", std::process::id()));
    network::io::save(&net, &path)?;
    let back = network::io::load(&path)?;
    let probe = make_patch(&images[0].0, &spec, 99, 0)?;
    println!("reloaded model agrees: {}", back.predict(&probe)? == net.predict(&probe)?);
    std::fs::remove_file(&path).map_err(|e| ccnet::Error::io(&path, e))?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> ccnet::Result<()> {
    run_example()
}
