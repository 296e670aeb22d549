// Random rotated crops resized to the network input, and the check that
// separates color-preserving transforms from ones that alter chromaticity.

use ccnet::augment::{make_patches_for, verify_color_preserving, PatchSpec, Transform};
use ccnet::eval::{random_scene, SceneStyle};

pub fn run_example() -> ccnet::Result<()> {
    let img = random_scene(1, 160, 120, SceneStyle::ColoredDominant);
    let spec = PatchSpec { patch_count: 8, ..PatchSpec::toy() };
    let patches = make_patches_for("scene-1", &img, &spec, 2024)?;
    for p in &patches {
        let w = &p.provenance.window;
        println!(
            "{} at ({:.1}, {:.1}) size {:.0} rotated {:+.0} deg flipped {}: mean {:.3?}",
            p.provenance.sample_id, w.center[0], w.center[1], w.size, w.rotation_deg, p.provenance.flipped,
            p.mean_color()
        );
    }
    let transforms = [
        Transform::FlipHorizontal,
        Transform::Rotate { degrees: 10.0 },
        Transform::ResizeBilinear { width: 40, height: 30 },
        Transform::ChannelGain([1.1, 1.0, 0.9]),
    ];
    for t in &transforms {
        println!("{t:?}: color preserving = {}", verify_color_preserving(t));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> ccnet::Result<()> {
    run_example()
}
