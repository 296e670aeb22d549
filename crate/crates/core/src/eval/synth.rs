//! Synthetic relit datasets: every base scene is rendered under every light
//! and written with its exact ground truth.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{read_image, save_manifest, write_image, Dataset, Sample};
use crate::error::{Error, Result};
use crate::imaging::{apply_illuminant, Illuminant, LinearImage};

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// A generated dataset with its unquantized images in sample order.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub images: Vec<LinearImage>,
    pub manifest: PathBuf,
}

pub fn sample_id(base: usize, light: usize) -> String {
    format!("scene{base:03}_light{light:03}")
}

/// Renders `bases × lights`, writes 16-bit PNGs and a manifest to `out_dir`.
/// Samples of one base scene share the clip id `scene###`.
pub fn synth_dataset(
    bases: &[LinearImage],
    lights: &[Illuminant],
    out_dir: impl AsRef<Path>,
) -> Result<SynthOutput> {
    if bases.is_empty() {
        return Err(Error::Empty("base images"));
    }
    if lights.is_empty() {
        return Err(Error::Empty("illuminants"));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut samples = Vec::with_capacity(bases.len() * lights.len());
    let mut images = Vec::with_capacity(samples.capacity());
    for (b, base) in bases.iter().enumerate() {
        for (l, light) in lights.iter().enumerate() {
            let id = sample_id(b, l);
            let img = apply_illuminant(base, light);
            let path = out_dir.join(format!("{id}.png"));
            write_image(&img, &path)?;
            samples.push(Sample {
                id,
                image_path: path,
                ground_truth: *light,
                mask_rect: None,
                clip_id: Some(format!("scene{b:03}")),
                camera_id: None,
            });
            images.push(img);
        }
    }
    let dataset = Dataset::new("synthetic", samples)?;
    let manifest = out_dir.join(MANIFEST_NAME);
    save_manifest(&dataset, &manifest)?;
    Ok(SynthOutput {
        dataset,
        images,
        manifest,
    })
}

/// Reads a JSON array of `[r, g, b]` triples.
pub fn load_lights(path: impl AsRef<Path>) -> Result<Vec<Illuminant>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn save_lights(lights: &[Illuminant], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(lights).expect("lights serialize") + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Every `.png` and `.ppm` in `dir`, in file-name order.
pub fn load_bases(dir: impl AsRef<Path>) -> Result<Vec<LinearImage>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("ppm"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Empty("base image directory"));
    }
    paths.iter().map(read_image).collect()
}

/// `n` lights evenly spaced in angle on the great circle through the
/// neutral direction and the warm-cool axis `(1, 0, -1)`. The first and
/// last light are `spread_deg` apart and the arc is centered on neutral.
pub fn lights_on_arc(n: usize, spread_deg: f64) -> Result<Vec<Illuminant>> {
    if n == 0 {
        return Err(Error::Empty("light count"));
    }
    let s3 = 3f64.sqrt();
    let s2 = 2f64.sqrt();
    let neutral = [1.0 / s3; 3];
    let axis = [1.0 / s2, 0.0, -1.0 / s2];
    (0..n)
        .map(|i| {
            let t = if n == 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
            let th = (t - 0.5) * spread_deg.to_radians();
            let (s, c) = th.sin_cos();
            Illuminant::new([0, 1, 2].map(|k| c * neutral[k] + s * axis[k]))
        })
        .collect()
}

/// Content statistics of a generated base scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneStyle {
    /// Random surfaces rescaled so the mean reflectance is exactly gray.
    GrayWorld,
    /// A saturated background covering most of the frame with small neutral
    /// specks scattered over it; the mean reflectance is strongly colored.
    ColoredDominant,
}

fn fill_rect(px: &mut [[f64; 3]], w: usize, h: usize, x0: usize, y0: usize, rw: usize, rh: usize, c: [f64; 3]) {
    for y in y0..(y0 + rh).min(h) {
        for x in x0..(x0 + rw).min(w) {
            px[y * w + x] = c;
        }
    }
}

/// A random base scene under neutral light, white level 1.
pub fn random_scene(seed: u64, width: usize, height: usize, style: SceneStyle) -> LinearImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width.max(1), height.max(1));
    let random_color = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> [f64; 3] {
        [0; 3].map(|_| rng.random_range(lo..hi))
    };
    let mut px;
    match style {
        SceneStyle::GrayWorld => {
            px = vec![random_color(&mut rng, 0.1, 0.8); w * h];
            for _ in 0..12 {
                let c = random_color(&mut rng, 0.05, 0.9);
                let (rw, rh) = (rng.random_range(1..=w.div_ceil(2)), rng.random_range(1..=h.div_ceil(2)));
                let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
                fill_rect(&mut px, w, h, x0, y0, rw, rh, c);
            }
            for p in &mut px {
                let shade = rng.random_range(0.9..1.0);
                *p = p.map(|v| v * shade);
            }
            let mut mean = [0.0; 3];
            for p in &px {
                for k in 0..3 {
                    mean[k] += p[k];
                }
            }
            let target = (mean[0] + mean[1] + mean[2]) / 3.0;
            let gain = mean.map(|m| target / m);
            let peak = px
                .iter()
                .flat_map(|p| [0, 1, 2].map(|k| p[k] * gain[k]))
                .fold(0.0, f64::max);
            let norm = if peak > 0.95 { 0.95 / peak } else { 1.0 };
            for p in &mut px {
                for k in 0..3 {
                    p[k] *= gain[k] * norm;
                }
            }
        }
        SceneStyle::ColoredDominant => {
            let hue = rng.random_range(0..3);
            let mut bg = [0.08, 0.08, 0.08].map(|v: f64| v + rng.random_range(0.0..0.1));
            bg[hue] = rng.random_range(0.45..0.7);
            bg[(hue + 1) % 3] += rng.random_range(0.0..0.25);
            px = vec![bg; w * h];
            for _ in 0..4 {
                let mut c = random_color(&mut rng, 0.05, 0.3);
                c[hue] += 0.3;
                let (rw, rh) = (rng.random_range(4..=w.div_ceil(3).max(4)), rng.random_range(4..=h.div_ceil(3).max(4)));
                let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
                fill_rect(&mut px, w, h, x0, y0, rw, rh, c);
            }
            let step = 10;
            for gy in (0..h).step_by(step) {
                for gx in (0..w).step_by(step) {
                    let albedo = rng.random_range(0.8..0.95);
                    let x0 = gx + rng.random_range(0..step - 3);
                    let y0 = gy + rng.random_range(0..step - 3);
                    fill_rect(&mut px, w, h, x0, y0, 3, 3, [albedo; 3]);
                }
            }
            for p in &mut px {
                let shade = rng.random_range(0.9..1.0);
                *p = p.map(|v| v * shade);
            }
        }
    }
    LinearImage::new(w, h, px, 1.0).expect("generated pixels are valid")
}
