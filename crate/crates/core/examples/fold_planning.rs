// Writing and reading a manifest, then planning cross-validation folds.

use ccnet::dataset::{load_manifest, make_folds, save_manifest, write_image, Dataset, FoldScheme, Sample};
use ccnet::imaging::{Illuminant, LinearImage, Rect};

pub fn run_example() -> ccnet::Result<()> {
    let dir = std::env::temp_dir().join(format!("ccnet-folds-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| ccnet::Error::io(&dir, e))?;
    let mut samples = Vec::new();
    for i in 0..12 {
        let path = dir.join(format!("img{i:02}.png"));
        let light = Illuminant::new([1.0, 0.8 + 0.01 * i as f64, 0.6])?;
        write_image(&LinearImage::filled(16, 12, light.max_scaled(), 1.0)?, &path)?;
        samples.push(Sample {
            id: format!("img{i:02}"),
            image_path: path,
            ground_truth: light,
            mask_rect: Some(Rect { x: 12, y: 8, w: 4, h: 4 }),
            clip_id: Some(format!("clip{}", i / 3)),
            camera_id: Some(if i % 2 == 0 { "canon" } else { "nikon" }.into()),
        });
    }
    let manifest = dir.join("manifest.jsonl");
    save_manifest(&Dataset::new("demo", samples)?, &manifest)?;
    let ds = load_manifest(&manifest)?;
    println!("loaded {} samples from {}", ds.len(), manifest.display());

    for scheme in [FoldScheme::RandomKFold { folds: 3, seed: 1 }, FoldScheme::ByClip { folds: 3 }] {
        let plan = make_folds(&ds, scheme)?;
        println!("{scheme:?}: fold sizes {:?}", plan.fold_sizes());
        for f in 0..plan.folds() {
            let ids: Vec<&str> = plan.test_indices(f).iter().map(|&i| ds.samples()[i].id.as_str()).collect();
            println!("  fold {f} tests {ids:?}");
        }
    }
    std::fs::remove_dir_all(&dir).map_err(|e| ccnet::Error::io(&dir, e))?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> ccnet::Result<()> {
    run_example()
}
