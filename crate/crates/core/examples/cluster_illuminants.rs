// Grouping ground-truth illuminants into classes with spherical k-means.

use ccnet::clustering::{kmeans_angular, suggest_k, DatasetProfile, KMeansConfig};
use ccnet::eval::lights_on_arc;
use ccnet::imaging::angular_error;

pub fn run_example() -> ccnet::Result<()> {
    let lights = lights_on_arc(40, 30.0)?;
    let fit = kmeans_angular(&lights, &KMeansConfig::new(6, 42))?;
    println!("K = 6: inertia {:.4} rad, best restart {}", fit.inertia, fit.restart);
    for (i, c) in fit.model.centers().iter().enumerate() {
        let members = fit.labels.iter().filter(|&&l| l == i).count();
        let rg = c.to_rg();
        println!("  center {i}: rg ({:.4}, {:.4}), {members} members", rg.r, rg.g);
    }
    let probe = lights[17];
    let label = fit.model.assign_label(&probe);
    println!(
        "light 17 -> class {label}, {:.3} deg from its center",
        angular_error(&probe, &fit.model.centers()[label])
    );
    for (cams, linear) in [(1, true), (1, false), (8, true)] {
        let k = suggest_k(DatasetProfile { num_cameras: cams, is_device_linear: linear });
        println!("suggested K for {cams} camera(s), linear = {linear}: {k}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> ccnet::Result<()> {
    run_example()
}
