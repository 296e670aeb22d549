// Illuminant arithmetic: angular error, rg chromaticity and the diagonal
// relighting model.

use ccnet::imaging::{angular_error, apply_illuminant, normalize_to_canonical, Illuminant, LinearImage};

pub fn run_example() -> ccnet::Result<()> {
    let tungsten = Illuminant::new([1.0, 0.72, 0.42])?;
    let daylight = Illuminant::new([0.88, 0.95, 1.0])?;
    println!("stored at unit norm: {:?}", tungsten.rgb());
    let rg = tungsten.to_rg();
    println!("rg chromaticity: r = {:.4}, g = {:.4}, b = {:.4}", rg.r, rg.g, rg.b());
    println!("tungsten vs daylight: {:.3} deg", angular_error(&tungsten, &daylight));

    let scene = LinearImage::new(
        2,
        2,
        vec![[0.2, 0.4, 0.6], [0.8, 0.8, 0.8], [0.5, 0.1, 0.1], [0.05, 0.3, 0.05]],
        1.0,
    )?;
    let cast = apply_illuminant(&scene, &tungsten);
    println!("under tungsten: {:?}", cast.pixels());
    let back = normalize_to_canonical(&cast, &tungsten)?;
    let worst = back
        .pixels()
        .iter()
        .zip(scene.pixels())
        .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
        .fold(0.0, f64::max);
    println!("corrected back, largest pixel difference {worst:.2e}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> ccnet::Result<()> {
    run_example()
}
