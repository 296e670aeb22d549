// The Minkowski family of statistics-based estimators on one relit scene.

use ccnet::baselines::{estimate_statistical, run_named, MinkowskiParams, BASELINE_NAMES};
use ccnet::eval::{random_scene, SceneStyle};
use ccnet::imaging::{angular_error, apply_illuminant, Illuminant};

pub fn run_example() -> ccnet::Result<()> {
    let light = Illuminant::new([0.95, 0.75, 0.45])?;
    for style in [SceneStyle::GrayWorld, SceneStyle::ColoredDominant] {
        let img = apply_illuminant(&random_scene(5, 96, 72, style), &light);
        println!("{style:?} scene:");
        for name in BASELINE_NAMES {
            let e = run_named(&img, name)?;
            println!("  {name:<20} {:.3} deg", angular_error(&e, &light));
        }
        let custom = estimate_statistical(&img, &MinkowskiParams::new(1, 2.0, 2.0)?)?;
        println!("  {:<20} {:.3} deg", "edge p=2 sigma=2", angular_error(&custom, &light));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> ccnet::Result<()> {
    run_example()
}
