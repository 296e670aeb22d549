//! Dataset manifests, image loading and cross-validation fold plans.
//!
//! A manifest is UTF-8 text with one JSON object per line:
//!
//! ```text
//! {"id":"img001","image":"img001.png","gt":[0.41,0.52,0.27],"mask":[10,20,64,48],"clip":"c1","camera":"canon5d"}
//! ```
//!
//! `image` is resolved relative to the manifest's directory. `mask`, `clip`
//! and `camera` are optional. Blank lines are ignored.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Rgb};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{Illuminant, LinearImage, Rect};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image_path: PathBuf,
    pub ground_truth: Illuminant,
    pub mask_rect: Option<Rect>,
    pub clip_id: Option<String>,
    pub camera_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        Ok(Dataset {
            name: name.into(),
            samples,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Subset in the given index order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    id: String,
    image: String,
    gt: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<[usize; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clip: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    camera: Option<String>,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_manifest(&text, base, path, name)
}

fn parse_manifest(text: &str, base: &Path, path: &Path, name: String) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Manifest {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let raw: ManifestLine = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let ground_truth =
            Illuminant::new(raw.gt).map_err(|e| err(e.to_string()))?;
        if !seen.insert(raw.id.clone()) {
            return Err(err(format!("duplicate sample id `{}`", raw.id)));
        }
        let mask_rect = raw.mask.map(|[x, y, w, h]| Rect { x, y, w, h });
        samples.push(Sample {
            id: raw.id,
            image_path: base.join(raw.image),
            ground_truth,
            mask_rect,
            clip_id: raw.clip,
            camera_id: raw.camera,
        });
    }
    Dataset::new(name, samples)
}

/// Writes `ds` as a manifest. Image paths are stored relative to the
/// manifest's directory when possible.
pub fn save_manifest(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut out = Vec::new();
    for s in &ds.samples {
        let rel = s.image_path.strip_prefix(base).unwrap_or(&s.image_path);
        let line = ManifestLine {
            id: s.id.clone(),
            image: rel.to_string_lossy().into_owned(),
            gt: s.ground_truth.rgb(),
            mask: s.mask_rect.map(|r| [r.x, r.y, r.w, r.h]),
            clip: s.clip_id.clone(),
            camera: s.camera_id.clone(),
        };
        serde_json::to_writer(&mut out, &line).expect("manifest line serializes");
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Decodes a sample's image and applies its mask rectangle.
pub fn load_image(sample: &Sample) -> Result<LinearImage> {
    let img = read_image(&sample.image_path)?;
    match sample.mask_rect {
        Some(rect) => img.with_mask_rect(rect).map_err(|e| Error::Decode {
            path: sample.image_path.clone(),
            msg: e.to_string(),
        }),
        None => Ok(img),
    }
}

/// Reads an 8- or 16-bit PNG or binary PPM as linear RGB. The white level is
/// 255 or 65535 according to the stored bit depth.
pub fn read_image(path: impl AsRef<Path>) -> Result<LinearImage> {
    let path = path.as_ref();
    let decoded = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            msg: other.to_string(),
        },
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let sixteen = matches!(
        decoded,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    );
    let (pixels, white) = if sixteen {
        let buf = decoded.into_rgb16();
        let px = buf
            .pixels()
            .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64])
            .collect();
        (px, 65535.0)
    } else {
        let buf = decoded.into_rgb8();
        let px = buf
            .pixels()
            .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64])
            .collect();
        (px, 255.0)
    };
    LinearImage::new(w, h, pixels, white).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Writes a 16-bit RGB PNG, or a 16-bit binary PPM when the extension is
/// `.ppm`. Values are rescaled from the image's white level to 65535 and
/// rounded.
pub fn write_image(img: &LinearImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let scale = 65535.0 / img.white_level();
    let data: Vec<u16> = img
        .pixels()
        .iter()
        .flat_map(|p| p.map(|c| (c * scale).round().clamp(0.0, 65535.0) as u16))
        .collect();
    let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, data)
            .expect("buffer size matches dimensions");
    let is_ppm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    if is_ppm {
        let mut out = Vec::with_capacity(buf.len() * 2 + 32);
        write!(out, "P6\n{} {}\n65535\n", img.width(), img.height()).unwrap();
        for v in buf.into_raw() {
            out.extend_from_slice(&v.to_be_bytes());
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    } else {
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(path, io),
                other => Error::Decode {
                    path: path.to_path_buf(),
                    msg: other.to_string(),
                },
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FoldScheme {
    RandomKFold { folds: usize, seed: u64 },
    /// All samples sharing a `clip_id` go to the same fold.
    ByClip { folds: usize },
}

impl FoldScheme {
    pub fn folds(&self) -> usize {
        match *self {
            FoldScheme::RandomKFold { folds, .. } | FoldScheme::ByClip { folds } => folds,
        }
    }

    /// Parses `random:F:SEED`, `random:F` (seed 0) or `clip:F`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| {
            p.parse::<u64>()
                .map_err(|_| Error::Config(format!("bad number `{p}` in fold scheme `{s}`")))
        };
        match parts.as_slice() {
            ["random", f] => Ok(FoldScheme::RandomKFold {
                folds: num(f)? as usize,
                seed: 0,
            }),
            ["random", f, seed] => Ok(FoldScheme::RandomKFold {
                folds: num(f)? as usize,
                seed: num(seed)?,
            }),
            ["clip", f] => Ok(FoldScheme::ByClip {
                folds: num(f)? as usize,
            }),
            _ => Err(Error::Config(format!(
                "fold scheme `{s}` is not random:F[:SEED] or clip:F"
            ))),
        }
    }
}

/// Assignment of every sample to one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub scheme: FoldScheme,
    /// `(sample id, fold)` in dataset order.
    pub assignments: Vec<(String, usize)>,
}

impl FoldPlan {
    pub fn folds(&self) -> usize {
        self.scheme.folds()
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments
            .iter()
            .find(|(s, _)| s == id)
            .map(|&(_, f)| f)
    }

    /// Dataset indices of the samples held out in `fold`.
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, (_, f))| *f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, (_, f))| *f != fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.folds()];
        for (_, f) in &self.assignments {
            sizes[*f] += 1;
        }
        sizes
    }
}

pub fn make_folds(ds: &Dataset, scheme: FoldScheme) -> Result<FoldPlan> {
    let folds = scheme.folds();
    if folds == 0 {
        return Err(Error::Folds("fold count must be at least 1".into()));
    }
    if ds.len() < folds {
        return Err(Error::Folds(format!(
            "{} samples cannot fill {folds} folds",
            ds.len()
        )));
    }
    let fold_of: Vec<usize> = match scheme {
        FoldScheme::RandomKFold { seed, .. } => {
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut fold_of = vec![0; ds.len()];
            for (pos, &i) in order.iter().enumerate() {
                fold_of[i] = pos % folds;
            }
            fold_of
        }
        FoldScheme::ByClip { .. } => {
            // Clips are dealt to folds round-robin in order of first appearance.
            let mut clip_fold: HashMap<&str, usize> = HashMap::new();
            let mut fold_of = Vec::with_capacity(ds.len());
            for s in ds.samples() {
                let clip = s.clip_id.as_deref().ok_or_else(|| {
                    Error::Folds(format!("sample `{}` has no clip id", s.id))
                })?;
                let next = clip_fold.len();
                let f = *clip_fold.entry(clip).or_insert(next % folds);
                fold_of.push(f);
            }
            if clip_fold.len() < folds {
                return Err(Error::Folds(format!(
                    "{} distinct clips cannot fill {folds} folds",
                    clip_fold.len()
                )));
            }
            fold_of
        }
    };
    Ok(FoldPlan {
        scheme,
        assignments: ds
            .samples()
            .iter()
            .zip(fold_of)
            .map(|(s, f)| (s.id.clone(), f))
            .collect(),
    })
}

/// Distinct clip ids, sorted.
pub fn clip_ids(ds: &Dataset) -> BTreeSet<&str> {
    ds.samples()
        .iter()
        .filter_map(|s| s.clip_id.as_deref())
        .collect()
}
