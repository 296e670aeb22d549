//! Linear color arithmetic: illuminant directions, angular distance and the
//! diagonal (von Kries) model used to relight and correct images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Direction of the scene light in camera RGB, stored at unit L2 norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Illuminant([f64; 3]);

impl Illuminant {
    pub const NEUTRAL: Illuminant = Illuminant([
        0.577_350_269_189_625_8,
        0.577_350_269_189_625_8,
        0.577_350_269_189_625_8,
    ]);

    /// Validates and normalizes a raw RGB triplet.
    pub fn new(rgb: [f64; 3]) -> Result<Self> {
        if rgb.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidIlluminant {
                rgb,
                reason: "non-finite component",
            });
        }
        if rgb.iter().any(|&c| c < 0.0) {
            return Err(Error::InvalidIlluminant {
                rgb,
                reason: "negative component",
            });
        }
        let norm = norm(rgb);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidIlluminant {
                rgb,
                reason: "zero vector",
            });
        }
        Ok(Illuminant([rgb[0] / norm, rgb[1] / norm, rgb[2] / norm]))
    }

    pub fn rgb(&self) -> [f64; 3] {
        self.0
    }

    /// Returns the already-canonical value; kept so callers can state intent.
    pub fn normalize(&self) -> Illuminant {
        match Illuminant::new(self.0) {
            Ok(l) => l,
            Err(_) => *self,
        }
    }

    /// Rescaled so the largest channel equals 1.
    pub fn max_scaled(&self) -> [f64; 3] {
        let m = self.0.iter().copied().fold(0.0_f64, f64::max);
        [self.0[0] / m, self.0[1] / m, self.0[2] / m]
    }

    pub fn dot(&self, other: &Illuminant) -> f64 {
        dot(self.0, other.0)
    }

    /// Angle to `other` in radians.
    pub fn angle_to(&self, other: &Illuminant) -> f64 {
        angle_between(self.0, other.0)
    }

    pub fn to_rg(&self) -> ChromaticityRG {
        to_rg(self)
    }
}

impl TryFrom<[f64; 3]> for Illuminant {
    type Error = Error;

    fn try_from(rgb: [f64; 3]) -> Result<Self> {
        Illuminant::new(rgb)
    }
}

impl From<Illuminant> for [f64; 3] {
    fn from(l: Illuminant) -> Self {
        l.0
    }
}

/// Intensity-normalized coordinates `(R, G) / (R + G + B)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChromaticityRG {
    pub r: f64,
    pub g: f64,
}

impl ChromaticityRG {
    pub fn b(&self) -> f64 {
        1.0 - self.r - self.g
    }

    pub fn to_illuminant(&self) -> Result<Illuminant> {
        Illuminant::new([self.r, self.g, self.b().max(0.0)])
    }
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

// atan2(|a x b|, a . b) is the same angle as acos of the clamped cosine but
// keeps full precision for nearly parallel vectors, where acos loses half the
// significant digits.
fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    let ua = [a[0] / na, a[1] / na, a[2] / na];
    let ub = [b[0] / nb, b[1] / nb, b[2] / nb];
    let cos = dot(ua, ub).clamp(-1.0, 1.0);
    let sin = norm(cross(ua, ub)).clamp(0.0, 1.0);
    sin.atan2(cos)
}

/// Angle between two illuminants in degrees, in `[0, 180]`.
pub fn angular_error(a: &Illuminant, b: &Illuminant) -> f64 {
    a.angle_to(b).to_degrees()
}

/// [`angular_error`] on raw triplets, validating both first.
pub fn angular_error_rgb(a: [f64; 3], b: [f64; 3]) -> Result<f64> {
    Ok(angular_error(&Illuminant::new(a)?, &Illuminant::new(b)?))
}

pub fn to_rg(light: &Illuminant) -> ChromaticityRG {
    let [r, g, b] = light.rgb();
    let sum = r + g + b;
    ChromaticityRG {
        r: r / sum,
        g: g / sum,
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Linear-RGB raster. Masked pixels (`mask[i] == true`) are excluded from all
/// statistics and patch sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
    white_level: f64,
    mask: Option<Vec<bool>>,
}

impl LinearImage {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<[f64; 3]>,
        white_level: f64,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage("zero-sized image".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if !(white_level.is_finite() && white_level > 0.0) {
            return Err(Error::InvalidImage(format!(
                "white level {white_level} must be positive"
            )));
        }
        for (i, px) in pixels.iter().enumerate() {
            if px.iter().any(|&c| !c.is_finite() || c < 0.0 || c > white_level) {
                return Err(Error::InvalidImage(format!(
                    "pixel {i} = {px:?} outside [0, {white_level}]"
                )));
            }
        }
        Ok(LinearImage {
            width,
            height,
            pixels,
            white_level,
            mask: None,
        })
    }

    /// Uniformly colored image.
    pub fn filled(width: usize, height: usize, color: [f64; 3], white_level: f64) -> Result<Self> {
        LinearImage::new(width, height, vec![color; width * height], white_level)
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.pixels.len() {
            return Err(Error::InvalidImage(format!(
                "mask has {} entries for {} pixels",
                mask.len(),
                self.pixels.len()
            )));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    /// Marks every pixel inside `rect` as excluded.
    pub fn with_mask_rect(self, rect: Rect) -> Result<Self> {
        if rect.x + rect.w > self.width || rect.y + rect.h > self.height {
            return Err(Error::InvalidImage(format!(
                "mask {rect:?} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut mask = self
            .mask
            .clone()
            .unwrap_or_else(|| vec![false; self.pixels.len()]);
        for y in rect.y..rect.y + rect.h {
            for x in rect.x..rect.x + rect.w {
                mask[y * self.width + x] = true;
            }
        }
        self.with_mask(mask)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn white_level(&self) -> f64 {
        self.white_level
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn is_masked(&self, x: usize, y: usize) -> bool {
        self.mask
            .as_ref()
            .is_some_and(|m| m[y * self.width + x])
    }

    /// Iterator over pixels that take part in statistics.
    pub fn unmasked_pixels(&self) -> impl Iterator<Item = &[f64; 3]> + '_ {
        self.pixels
            .iter()
            .enumerate()
            .filter(move |(i, _)| !self.mask.as_ref().is_some_and(|m| m[*i]))
            .map(|(_, p)| p)
    }

    pub fn unmasked_count(&self) -> usize {
        match &self.mask {
            Some(m) => m.iter().filter(|&&x| !x).count(),
            None => self.pixels.len(),
        }
    }

    /// Applies `f` to every unmasked pixel; masked pixels are left untouched.
    fn map_unmasked(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> LinearImage {
        let pixels = self
            .pixels
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                if self.mask.as_ref().is_some_and(|m| m[i]) {
                    p
                } else {
                    f(p)
                }
            })
            .collect();
        LinearImage {
            pixels,
            mask: self.mask.clone(),
            ..*self
        }
    }

    /// Scales every pixel by `s`, raising the white level to match.
    pub fn scaled(&self, s: f64) -> LinearImage {
        LinearImage {
            pixels: self
                .pixels
                .iter()
                .map(|p| [p[0] * s, p[1] * s, p[2] * s])
                .collect(),
            white_level: self.white_level * s.max(1.0),
            mask: self.mask.clone(),
            ..*self
        }
    }

    /// Per-channel mean over unmasked pixels.
    pub fn mean_color(&self) -> Option<[f64; 3]> {
        let mut sum = [0.0; 3];
        let mut n = 0usize;
        for p in self.unmasked_pixels() {
            for c in 0..3 {
                sum[c] += p[c];
            }
            n += 1;
        }
        (n > 0).then(|| sum.map(|s| s / n as f64))
    }
}

/// Relights an image taken under neutral light with `light` (diagonal model).
pub fn apply_illuminant(img: &LinearImage, light: &Illuminant) -> LinearImage {
    let gain = light.max_scaled();
    img.map_unmasked(|p| [p[0] * gain[0], p[1] * gain[1], p[2] * gain[2]])
}

/// Von Kries correction: divides each channel by the estimate scaled to a
/// max channel of 1, clipping to the white level.
pub fn normalize_to_canonical(img: &LinearImage, est: &Illuminant) -> Result<LinearImage> {
    let gain = est.max_scaled();
    if gain.iter().any(|&g| g == 0.0) {
        return Err(Error::Degenerate(format!(
            "cannot divide by zero channel in estimate {:?}",
            est.rgb()
        )));
    }
    let wl = img.white_level();
    Ok(img.map_unmasked(|p| {
        [
            (p[0] / gain[0]).clamp(0.0, wl),
            (p[1] / gain[1]).clamp(0.0, wl),
            (p[2] / gain[2]).clamp(0.0, wl),
        ]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn il(rgb: [f64; 3]) -> Illuminant {
        Illuminant::new(rgb).unwrap()
    }

    #[test]
    fn angular_error_examples() {
        assert_eq!(angular_error(&il([0.5, 0.5, 0.5]), &il([2.0, 2.0, 2.0])), 0.0);
        assert!((angular_error(&il([1.0, 0.0, 0.0]), &il([0.0, 1.0, 0.0])) - 90.0).abs() < 1e-12);
        // acos(2 / sqrt(6)) in degrees
        let expected = (2.0 / 6.0_f64.sqrt()).acos().to_degrees();
        assert!((expected - 35.2644).abs() < 1e-3);
        let got = angular_error(&il([1.0, 1.0, 1.0]), &il([1.0, 1.0, 0.0]));
        assert!((got - expected).abs() < 1e-10, "{got}");
    }

    #[test]
    fn zero_vector_is_rejected() {
        assert!(matches!(
            Illuminant::new([0.0, 0.0, 0.0]),
            Err(Error::InvalidIlluminant { .. })
        ));
        assert!(angular_error_rgb([0.0; 3], [1.0, 1.0, 1.0]).is_err());
        assert!(Illuminant::new([-0.1, 1.0, 1.0]).is_err());
        assert!(Illuminant::new([f64::NAN, 1.0, 1.0]).is_err());
    }

    #[test]
    fn self_angle_is_zero_not_nan() {
        let a = il([0.3, 0.7, 0.11]);
        let e = angular_error(&a, &a);
        assert!(e.is_finite());
        assert!(e < 1e-12);
    }

    #[test]
    fn normalize_is_idempotent() {
        let a = il([3.0, 1.0, 2.0]);
        assert_eq!(a.normalize(), a);
        assert!((norm(a.rgb()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rg_examples() {
        let c = to_rg(&il([1.0, 1.0, 1.0]));
        assert!((c.r - 1.0 / 3.0).abs() < 1e-15 && (c.g - 1.0 / 3.0).abs() < 1e-15);
        let c = to_rg(&il([1.0, 0.0, 0.0]));
        assert_eq!((c.r, c.g), (1.0, 0.0));
        let c = to_rg(&il([2.0, 1.0, 1.0]));
        assert!((c.r - 0.5).abs() < 1e-15 && (c.g - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rg_round_trip_keeps_direction() {
        let a = il([0.2, 0.9, 0.4]);
        let back = a.to_rg().to_illuminant().unwrap();
        assert!(a.angle_to(&back) < 1e-12);
    }

    #[test]
    fn gray_scene_takes_light_chromaticity() {
        let img = LinearImage::filled(4, 3, [100.0, 100.0, 100.0], 255.0).unwrap();
        let light = il([1.0, 0.5, 0.5]);
        let lit = apply_illuminant(&img, &light);
        for p in lit.pixels() {
            assert!(angular_error_rgb(*p, light.rgb()).unwrap() < 1e-12);
        }
    }

    #[test]
    fn neutral_light_is_identity() {
        let img = LinearImage::new(2, 1, vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], 10.0).unwrap();
        let n = il([1.0, 1.0, 1.0]);
        assert_eq!(apply_illuminant(&img, &n), img);
        assert_eq!(normalize_to_canonical(&img, &n).unwrap(), img);
    }

    #[test]
    fn apply_then_correct_is_identity() {
        let img = LinearImage::new(
            2,
            2,
            vec![[10.0, 20.0, 30.0], [0.0, 5.0, 200.0], [255.0, 255.0, 255.0], [1.0, 1.0, 1.0]],
            255.0,
        )
        .unwrap();
        let light = il([0.9, 0.6, 0.3]);
        let back = normalize_to_canonical(&apply_illuminant(&img, &light), &light).unwrap();
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn corrected_gray_scene_is_achromatic() {
        let img = LinearImage::filled(3, 3, [50.0, 50.0, 50.0], 255.0).unwrap();
        let light = il([1.0, 0.5, 0.5]);
        let fixed = normalize_to_canonical(&apply_illuminant(&img, &light), &light).unwrap();
        for p in fixed.pixels() {
            assert!((p[0] - p[1]).abs() < 1e-9 && (p[1] - p[2]).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_channel_estimate_is_degenerate() {
        let img = LinearImage::filled(1, 1, [1.0, 1.0, 1.0], 1.0).unwrap();
        assert!(matches!(
            normalize_to_canonical(&img, &il([1.0, 1.0, 0.0])),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn masked_pixels_are_preserved() {
        let img = LinearImage::filled(2, 2, [8.0, 8.0, 8.0], 10.0)
            .unwrap()
            .with_mask_rect(Rect { x: 0, y: 0, w: 1, h: 1 })
            .unwrap();
        let lit = apply_illuminant(&img, &il([1.0, 0.5, 0.25]));
        assert_eq!(lit.pixel(0, 0), [8.0, 8.0, 8.0]);
        assert_eq!(lit.pixel(1, 1), [8.0, 4.0, 2.0]);
        assert_eq!(lit.mask(), img.mask());
    }

    #[test]
    fn image_invariants_are_checked() {
        assert!(LinearImage::new(2, 2, vec![[0.0; 3]; 3], 1.0).is_err());
        assert!(LinearImage::new(1, 1, vec![[2.0, 0.0, 0.0]], 1.0).is_err());
        assert!(LinearImage::new(1, 1, vec![[f64::NAN, 0.0, 0.0]], 1.0).is_err());
        let img = LinearImage::filled(2, 2, [0.0; 3], 1.0).unwrap();
        assert!(img.with_mask_rect(Rect { x: 1, y: 1, w: 2, h: 1 }).is_err());
    }
}
