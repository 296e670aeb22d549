// Estimating the light of unseen scenes: cluster training illuminants,
// train a classifier, average patch probabilities and combine the
// cluster centers.

use ccnet::augment::PatchSpec;
use ccnet::baselines::run_named;
use ccnet::clustering::{kmeans_angular, KMeansConfig};
use ccnet::estimator::{estimate, estimate_argmax};
use ccnet::eval::{lights_on_arc, random_scene, SceneStyle};
use ccnet::imaging::{angular_error, apply_illuminant, normalize_to_canonical};
use ccnet::network::{mean_pixel, toy_architecture, train, PatchBank, TrainConfig};

pub fn run_example() -> ccnet::Result<()> {
    let lights = lights_on_arc(8, 30.0)?;
    let scenes: Vec<_> = (0..6).map(|s| random_scene(40 + s, 96, 96, SceneStyle::ColoredDominant)).collect();
    let (train_scenes, test_scenes) = scenes.split_at(5);

    let fit = kmeans_angular(&lights, &KMeansConfig::new(4, 1))?;
    let mut images = Vec::new();
    for base in train_scenes {
        for (light, &label) in lights.iter().zip(&fit.labels) {
            images.push((apply_illuminant(base, light), label));
        }
    }
    let spec = PatchSpec { patch_count: 24, ..PatchSpec::toy() };
    let entries = images.iter().enumerate().map(|(i, (img, c))| (img, i as u64, *c)).collect();
    let bank = PatchBank::new(entries, &spec)?;
    let cfg = TrainConfig { batch_size: 16, base_lr: 0.01, max_iters: 120, ..TrainConfig::default() };
    let (net, _) = train(&bank, &toy_architecture(4), &cfg, mean_pixel(images.iter().map(|(i, _)| i)))?;

    for (i, light) in lights.iter().enumerate() {
        let img = apply_illuminant(&test_scenes[0], light);
        let est = estimate(&img, &net, &fit.model, &spec, i as u64)?;
        let top = estimate_argmax(&img, &net, &fit.model, &spec, i as u64)?;
        let gw = run_named(&img, "grey_world")?;
        println!(
            "light {i}: weighted {:.2} deg, argmax {:.2} deg, grey world {:.2} deg",
            angular_error(&est.illuminant, light),
            angular_error(&top.illuminant, light),
            angular_error(&gw, light)
        );
        if i == 0 {
            let corrected = normalize_to_canonical(&img, &est.illuminant)?;
            println!("  corrected mean color {:.3?}", corrected.mean_color());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> ccnet::Result<()> {
    run_example()
}
