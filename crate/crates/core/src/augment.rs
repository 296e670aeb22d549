//! Color-preserving patch generation: rotation, random crop, rescale to the
//! network input side, horizontal flip.
//!
//! A crop is a square window of `size` source pixels, rotated by
//! `rotation_deg` about its own center, and always lies entirely inside the
//! image. Every patch pixel is a bilinear blend of source pixels with the
//! same weights for all three channels.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imaging::{LinearImage, Rect};

/// Attempts per patch before `reject_overlapping` gives up.
pub const MAX_CROP_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskPolicy {
    /// Resample any crop that touches a masked pixel.
    #[default]
    RejectOverlapping,
    /// Treat masked pixels as black.
    ZeroFill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchSpec {
    pub patch_count: usize,
    pub rotations_deg: Vec<f64>,
    /// Smallest and largest crop side in source pixels, inclusive.
    pub crop_min: usize,
    pub crop_max: usize,
    pub net_input_side: usize,
    pub allow_flip: bool,
    pub mask_policy: MaskPolicy,
}

impl Default for PatchSpec {
    fn default() -> Self {
        PatchSpec::paper()
    }
}

impl PatchSpec {
    /// 200 patches, rotations of -10..10 degrees in steps of 5, crops of 250
    /// to 1000 pixels resized to 227.
    pub fn paper() -> Self {
        PatchSpec {
            patch_count: 200,
            rotations_deg: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            crop_min: 250,
            crop_max: 1000,
            net_input_side: 227,
            allow_flip: true,
            mask_policy: MaskPolicy::RejectOverlapping,
        }
    }

    /// Desk-scale profile for small images and the 64-pixel toy network.
    pub fn toy() -> Self {
        PatchSpec {
            crop_min: 48,
            crop_max: 128,
            net_input_side: 64,
            ..PatchSpec::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patch_count == 0 {
            return bad("patch_count must be at least 1".into());
        }
        if self.rotations_deg.is_empty() || self.rotations_deg.iter().any(|r| !r.is_finite()) {
            return bad("rotations_deg must list at least one finite angle".into());
        }
        if self.net_input_side == 0 {
            return bad("net_input_side must be positive".into());
        }
        if self.crop_min == 0 || self.crop_min > self.crop_max {
            return bad(format!(
                "crop range {}..={} is empty",
                self.crop_min, self.crop_max
            ));
        }
        if self.crop_min * 8 < self.net_input_side {
            return bad(format!(
                "crop_min {} is below net_input_side/8",
                self.crop_min
            ));
        }
        Ok(())
    }
}

/// Square window in source coordinates (pixel edges at integers).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropWindow {
    pub center: [f64; 2],
    pub size: f64,
    pub rotation_deg: f64,
}

impl CropWindow {
    /// Side of the axis-aligned box around the rotated window.
    pub fn footprint(&self) -> f64 {
        let t = self.rotation_deg.to_radians();
        self.size * (t.cos().abs() + t.sin().abs())
    }

    /// Whether the window lies inside a `width` x `height` image.
    pub fn fits(&self, width: usize, height: usize) -> bool {
        let half = self.footprint() / 2.0;
        let eps = 1e-9;
        self.center[0] - half >= -eps
            && self.center[1] - half >= -eps
            && self.center[0] + half <= width as f64 + eps
            && self.center[1] + half <= height as f64 + eps
    }

    /// Window covering the whole of a square image.
    pub fn full(img: &LinearImage) -> CropWindow {
        CropWindow {
            center: [img.width() as f64 / 2.0, img.height() as f64 / 2.0],
            size: img.width().min(img.height()) as f64,
            rotation_deg: 0.0,
        }
    }

    /// Pixel-aligned rectangle (no rotation) as a window, for square rects.
    pub fn from_rect(r: Rect) -> CropWindow {
        CropWindow {
            center: [r.x as f64 + r.w as f64 / 2.0, r.y as f64 + r.h as f64 / 2.0],
            size: r.w.min(r.h) as f64,
            rotation_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sample_id: String,
    pub window: CropWindow,
    pub flipped: bool,
    /// Output pixels per source pixel.
    pub scale: f64,
}

/// Network input: `side` x `side` linear-RGB pixels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub side: usize,
    pub pixels: Vec<[f64; 3]>,
    pub white_level: f64,
    pub provenance: Provenance,
}

impl Patch {
    /// Mirror left-right.
    pub fn flipped(&self) -> Patch {
        let mut out = self.clone();
        flip_rows(&mut out.pixels, self.side, self.side);
        out.provenance.flipped = !self.provenance.flipped;
        out
    }

    pub fn mean_color(&self) -> [f64; 3] {
        let mut sum = [0.0; 3];
        for p in &self.pixels {
            for c in 0..3 {
                sum[c] += p[c];
            }
        }
        sum.map(|s| s / self.pixels.len() as f64)
    }
}

fn flip_rows<T>(pixels: &mut [T], width: usize, height: usize) {
    for row in pixels.chunks_exact_mut(width).take(height) {
        row.reverse();
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Samples a window into a `side` x `side` grid with bilinear interpolation.
/// Returns the pixels and whether any masked source pixel received weight.
fn render_window(
    img: &LinearImage,
    win: &CropWindow,
    side: usize,
    zero_fill_masked: bool,
) -> (Vec<[f64; 3]>, bool) {
    let (w, h) = (img.width(), img.height());
    let (sin, cos) = win.rotation_deg.to_radians().sin_cos();
    let step = win.size / side as f64;
    let mut touched = false;
    let mut out = Vec::with_capacity(side * side);
    let fetch = |x: usize, y: usize, touched: &mut bool| -> [f64; 3] {
        if img.is_masked(x, y) {
            *touched = true;
            if zero_fill_masked {
                return [0.0; 3];
            }
        }
        img.pixel(x, y)
    };
    for i in 0..side {
        let oy = (i as f64 + 0.5) * step - win.size / 2.0;
        for j in 0..side {
            let ox = (j as f64 + 0.5) * step - win.size / 2.0;
            // source position in pixel-center coordinates
            let sx = (win.center[0] + cos * ox - sin * oy - 0.5).clamp(0.0, (w - 1) as f64);
            let sy = (win.center[1] + sin * ox + cos * oy - 0.5).clamp(0.0, (h - 1) as f64);
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let fx = sx - x0 as f64;
            let fy = sy - y0 as f64;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let mut t = false;
            let p00 = fetch(x0, y0, &mut t);
            let p10 = if fx > 0.0 { fetch(x1, y0, &mut t) } else { p00 };
            let p01 = if fy > 0.0 { fetch(x0, y1, &mut t) } else { p00 };
            let p11 = if fx > 0.0 && fy > 0.0 {
                fetch(x1, y1, &mut t)
            } else if fx > 0.0 {
                p10
            } else {
                p01
            };
            touched |= t;
            let mut px = [0.0; 3];
            for c in 0..3 {
                px[c] = lerp(lerp(p00[c], p10[c], fx), lerp(p01[c], p11[c], fx), fy);
            }
            out.push(px);
        }
    }
    (out, touched)
}

/// Renders one window without any mask handling or flip.
pub fn render_crop(img: &LinearImage, win: &CropWindow, side: usize) -> Vec<[f64; 3]> {
    render_window(img, win, side, false).0
}

fn patch_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Largest crop side that fits at `rotation_deg`.
fn max_fitting_size(img: &LinearImage, rotation_deg: f64) -> usize {
    let t = rotation_deg.to_radians();
    let k = t.cos().abs() + t.sin().abs();
    let limit = img.width().min(img.height()) as f64 / k;
    (limit + 1e-9).floor() as usize
}

/// Patch number `index` of the deterministic sequence for `seed`. Patches
/// are independent of each other, so any subset can be regenerated on
/// demand.
pub fn make_patch(img: &LinearImage, spec: &PatchSpec, seed: u64, index: usize) -> Result<Patch> {
    let mut rng = patch_rng(seed, index);
    let (w, h) = (img.width() as f64, img.height() as f64);
    let zero_fill = spec.mask_policy == MaskPolicy::ZeroFill;
    for _ in 0..MAX_CROP_ATTEMPTS {
        let rotation = *spec
            .rotations_deg
            .choose(&mut rng)
            .expect("validated non-empty");
        let max_size = spec.crop_max.min(max_fitting_size(img, rotation));
        if max_size < spec.crop_min {
            continue;
        }
        let size = rng.random_range(spec.crop_min..=max_size) as f64;
        let mut win = CropWindow {
            center: [0.0, 0.0],
            size,
            rotation_deg: rotation,
        };
        let half = win.footprint() / 2.0;
        let cx = lerp(half, w - half, rng.random::<f64>());
        let cy = lerp(half, h - half, rng.random::<f64>());
        win.center = [cx, cy];
        let flip = spec.allow_flip && rng.random_bool(0.5);
        let (mut pixels, touched) = render_window(img, &win, spec.net_input_side, zero_fill);
        if touched && !zero_fill {
            continue;
        }
        if flip {
            flip_rows(&mut pixels, spec.net_input_side, spec.net_input_side);
        }
        return Ok(Patch {
            side: spec.net_input_side,
            pixels,
            white_level: img.white_level(),
            provenance: Provenance {
                sample_id: String::new(),
                window: win,
                flipped: flip,
                scale: spec.net_input_side as f64 / size,
            },
        });
    }
    Err(Error::InfeasibleCrop {
        attempts: MAX_CROP_ATTEMPTS,
    })
}

/// Exactly `spec.patch_count` patches, deterministic in `seed`.
pub fn make_patches(img: &LinearImage, spec: &PatchSpec, seed: u64) -> Result<Vec<Patch>> {
    spec.validate()?;
    if img.width().min(img.height()) < spec.crop_min {
        return Err(Error::InvalidImage(format!(
            "{}x{} image is smaller than the minimum crop {}",
            img.width(),
            img.height(),
            spec.crop_min
        )));
    }
    (0..spec.patch_count)
        .map(|i| make_patch(img, spec, seed, i))
        .collect()
}

/// Seed for a sample's patches, stable across runs and platforms.
pub fn sample_seed(sample_id: &str, master_seed: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(sample_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// [`make_patches`] with the seed derived from the sample id; patches carry
/// the id in their provenance. Used identically for training and test.
pub fn make_patches_for(
    sample_id: &str,
    img: &LinearImage,
    spec: &PatchSpec,
    master_seed: u64,
) -> Result<Vec<Patch>> {
    let mut patches = make_patches(img, spec, sample_seed(sample_id, master_seed))?;
    for p in &mut patches {
        p.provenance.sample_id = sample_id.to_string();
    }
    Ok(patches)
}

/// Image-to-image transforms, used to check which operations keep chromatic
/// content intact.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    FlipHorizontal,
    /// Rotation about the image center; samples falling outside repeat the
    /// border.
    Rotate { degrees: f64 },
    Crop(Rect),
    ResizeBilinear { width: usize, height: usize },
    Window {
        window: CropWindow,
        side: usize,
        flip: bool,
    },
    ChannelGain([f64; 3]),
    Sequence(Vec<Transform>),
}

impl Transform {
    pub fn apply(&self, img: &LinearImage) -> Result<LinearImage> {
        let wl = img.white_level();
        match self {
            Transform::FlipHorizontal => {
                let mut px = img.pixels().to_vec();
                flip_rows(&mut px, img.width(), img.height());
                LinearImage::new(img.width(), img.height(), px, wl)
            }
            Transform::Rotate { degrees } => {
                let side = img.width().min(img.height());
                let win = CropWindow {
                    center: [img.width() as f64 / 2.0, img.height() as f64 / 2.0],
                    size: side as f64,
                    rotation_deg: *degrees,
                };
                LinearImage::new(side, side, render_crop(img, &win, side), wl)
            }
            Transform::Crop(r) => {
                if r.w == 0 || r.h == 0 || r.x + r.w > img.width() || r.y + r.h > img.height() {
                    return Err(Error::InvalidImage(format!("crop {r:?} outside image")));
                }
                let px = (r.y..r.y + r.h)
                    .flat_map(|y| (r.x..r.x + r.w).map(move |x| (x, y)))
                    .map(|(x, y)| img.pixel(x, y))
                    .collect();
                LinearImage::new(r.w, r.h, px, wl)
            }
            Transform::ResizeBilinear { width, height } => {
                LinearImage::new(*width, *height, resize_bilinear(img, *width, *height), wl)
            }
            Transform::Window { window, side, flip } => {
                let mut px = render_crop(img, window, *side);
                if *flip {
                    flip_rows(&mut px, *side, *side);
                }
                LinearImage::new(*side, *side, px, wl)
            }
            Transform::ChannelGain(g) => {
                let px = img
                    .pixels()
                    .iter()
                    .map(|p| [p[0] * g[0], p[1] * g[1], p[2] * g[2]])
                    .collect();
                LinearImage::new(img.width(), img.height(), px, wl * g.iter().fold(1.0_f64, |a, &b| a.max(b)))
            }
            Transform::Sequence(steps) => {
                let mut cur = img.clone();
                for t in steps {
                    cur = t.apply(&cur)?;
                }
                Ok(cur)
            }
        }
    }
}

/// Bilinear resize with half-pixel centers.
pub fn resize_bilinear(img: &LinearImage, width: usize, height: usize) -> Vec<[f64; 3]> {
    let sx = img.width() as f64 / width as f64;
    let sy = img.height() as f64 / height as f64;
    let mut out = Vec::with_capacity(width * height);
    for i in 0..height {
        let y = ((i as f64 + 0.5) * sy - 0.5).clamp(0.0, (img.height() - 1) as f64);
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(img.height() - 1);
        let fy = y - y0 as f64;
        for j in 0..width {
            let x = ((j as f64 + 0.5) * sx - 0.5).clamp(0.0, (img.width() - 1) as f64);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(img.width() - 1);
            let fx = x - x0 as f64;
            let (a, b, c, d) = (img.pixel(x0, y0), img.pixel(x1, y0), img.pixel(x0, y1), img.pixel(x1, y1));
            let mut px = [0.0; 3];
            for k in 0..3 {
                px[k] = lerp(lerp(a[k], b[k], fx), lerp(c[k], d[k], fx), fy);
            }
            out.push(px);
        }
    }
    out
}

fn probe_image(seed: u64) -> LinearImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let px = (0..24 * 24)
        .map(|_| std::array::from_fn(|_| rng.random_range(0.05..0.95)))
        .collect();
    LinearImage::new(24, 24, px, 1.0).expect("probe image is valid")
}

/// True iff `f` acts as a spatial resampling: every output pixel a convex
/// combination of input pixels, with identical weights for all channels.
///
/// Checked by probing: permuting the input channels must permute the output
/// channels the same way, a constant image must map to the same constant,
/// and outputs must stay within the per-channel input range.
pub fn verify_color_preserving_with<F>(f: F) -> bool
where
    F: Fn(&LinearImage) -> Result<LinearImage>,
{
    const TOL: f64 = 1e-12;
    let probe = probe_image(0x5eed);
    let Ok(out) = f(&probe) else { return false };

    let rotated_px = probe.pixels().iter().map(|p| [p[1], p[2], p[0]]).collect();
    let rotated = LinearImage::new(probe.width(), probe.height(), rotated_px, 1.0)
        .expect("permuted probe is valid");
    let Ok(out_rot) = f(&rotated) else { return false };
    if out_rot.pixels().len() != out.pixels().len() {
        return false;
    }
    let permutes = out
        .pixels()
        .iter()
        .zip(out_rot.pixels())
        .all(|(a, b)| (a[1] - b[0]).abs() <= TOL && (a[2] - b[1]).abs() <= TOL && (a[0] - b[2]).abs() <= TOL);
    if !permutes {
        return false;
    }

    let color = [0.2, 0.5, 0.8];
    let flat = LinearImage::filled(probe.width(), probe.height(), color, 1.0).expect("valid");
    let Ok(out_flat) = f(&flat) else { return false };
    let constant = out_flat
        .pixels()
        .iter()
        .all(|p| (0..3).all(|c| (p[c] - color[c]).abs() <= TOL));
    if !constant {
        return false;
    }

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in probe.pixels() {
        for c in 0..3 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    out.pixels()
        .iter()
        .all(|p| (0..3).all(|c| p[c] >= lo[c] - TOL && p[c] <= hi[c] + TOL))
}

pub fn verify_color_preserving(t: &Transform) -> bool {
    verify_color_preserving_with(|img| t.apply(img))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(w: usize, h: usize) -> LinearImage {
        let px = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                [x * 2.0 + 1.0, y * 3.0 + 2.0, (x + y) + 5.0]
            })
            .collect();
        LinearImage::new(w, h, px, 1000.0).unwrap()
    }

    fn spec(count: usize) -> PatchSpec {
        PatchSpec {
            patch_count: count,
            rotations_deg: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            crop_min: 16,
            crop_max: 40,
            net_input_side: 12,
            allow_flip: true,
            mask_policy: MaskPolicy::RejectOverlapping,
        }
    }

    #[test]
    fn paper_default_has_200_patches() {
        assert_eq!(PatchSpec::paper().patch_count, 200);
        assert_eq!(PatchSpec::paper().rotations_deg, vec![-10.0, -5.0, 0.0, 5.0, 10.0]);
        let img = gradient_image(48, 40);
        let s = PatchSpec { patch_count: 200, ..spec(0) };
        assert_eq!(make_patches(&img, &s, 1).unwrap().len(), 200);
    }

    #[test]
    fn windows_stay_inside_image() {
        let img = gradient_image(50, 37);
        for p in make_patches(&img, &spec(300), 5).unwrap() {
            assert!(p.provenance.window.fits(50, 37), "{:?}", p.provenance.window);
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let img = gradient_image(40, 40);
        let a = make_patches(&img, &spec(20), 9).unwrap();
        assert_eq!(a, make_patches(&img, &spec(20), 9).unwrap());
        assert_ne!(a, make_patches(&img, &spec(20), 10).unwrap());
    }

    #[test]
    fn flip_is_an_involution() {
        let img = gradient_image(40, 40);
        let p = make_patch(&img, &spec(1), 3, 0).unwrap();
        assert_eq!(p.flipped().flipped(), p);
        assert_ne!(p.flipped().pixels, p.pixels);
    }

    #[test]
    fn reject_policy_avoids_mask() {
        let img = gradient_image(60, 60)
            .with_mask_rect(Rect { x: 0, y: 0, w: 20, h: 60 })
            .unwrap();
        for p in make_patches(&img, &spec(50), 2).unwrap() {
            let win = p.provenance.window;
            assert!(win.center[0] - win.footprint() / 2.0 >= 19.5);
        }
    }

    #[test]
    fn reject_policy_fails_when_everything_is_masked() {
        let img = gradient_image(40, 40)
            .with_mask_rect(Rect { x: 0, y: 0, w: 40, h: 40 })
            .unwrap();
        assert!(matches!(
            make_patches(&img, &spec(1), 0),
            Err(Error::InfeasibleCrop { .. })
        ));
        let zero = PatchSpec { mask_policy: MaskPolicy::ZeroFill, ..spec(3) };
        for p in make_patches(&img, &zero, 0).unwrap() {
            assert!(p.pixels.iter().all(|px| *px == [0.0; 3]));
        }
    }

    #[test]
    fn too_small_image_is_an_error() {
        let img = gradient_image(10, 10);
        assert!(make_patches(&img, &spec(1), 0).is_err());
    }

    #[test]
    fn channel_gain_is_not_color_preserving() {
        assert!(!verify_color_preserving(&Transform::ChannelGain([1.1, 1.0, 1.0])));
        assert!(!verify_color_preserving(&Transform::ChannelGain([1.1, 1.1, 1.1])));
        assert!(verify_color_preserving(&Transform::ChannelGain([1.0, 1.0, 1.0])));
    }

    #[test]
    fn spatial_transforms_are_color_preserving() {
        for t in [
            Transform::FlipHorizontal,
            Transform::Rotate { degrees: 10.0 },
            Transform::Crop(Rect { x: 2, y: 3, w: 10, h: 12 }),
            Transform::ResizeBilinear { width: 17, height: 9 },
            Transform::Window {
                window: CropWindow { center: [12.0, 12.0], size: 14.0, rotation_deg: -5.0 },
                side: 20,
                flip: true,
            },
            Transform::Sequence(vec![
                Transform::Rotate { degrees: -10.0 },
                Transform::ResizeBilinear { width: 7, height: 7 },
                Transform::FlipHorizontal,
            ]),
        ] {
            assert!(verify_color_preserving(&t), "{t:?}");
        }
    }

    #[test]
    fn sample_seed_depends_on_id_and_master_seed() {
        assert_eq!(sample_seed("a", 1), sample_seed("a", 1));
        assert_ne!(sample_seed("a", 1), sample_seed("b", 1));
        assert_ne!(sample_seed("a", 1), sample_seed("a", 2));
    }
}
