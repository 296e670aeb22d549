//! Statistics-based estimators under one Minkowski-norm framework:
//!
//! `e_k ∝ ( mean_x |D^n G_σ(f_k)(x)|^p )^(1/p)`
//!
//! where `G_σ` is Gaussian smoothing, `D^n` the n-th order derivative
//! magnitude and the mean runs over unmasked pixels. `p = ∞` takes the
//! maximum.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::imaging::{Illuminant, LinearImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinkowskiParams {
    pub derivative_order: u8,
    #[serde(serialize_with = "ser_p", deserialize_with = "de_p")]
    pub minkowski_p: f64,
    pub smoothing_sigma: f64,
}

fn ser_p<S: Serializer>(p: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if p.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*p)
    }
}

fn de_p<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum P {
        Num(f64),
        Text(String),
    }
    match P::deserialize(d)? {
        P::Num(v) => Ok(v),
        P::Text(s) if s == "inf" || s == "infinity" => Ok(f64::INFINITY),
        P::Text(s) => Err(serde::de::Error::custom(format!("bad Minkowski p `{s}`"))),
    }
}

impl MinkowskiParams {
    pub fn new(derivative_order: u8, minkowski_p: f64, smoothing_sigma: f64) -> Result<Self> {
        let p = MinkowskiParams {
            derivative_order,
            minkowski_p,
            smoothing_sigma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.derivative_order > 2 {
            return Err(Error::Config(format!(
                "derivative order {} not in 0..=2",
                self.derivative_order
            )));
        }
        if !(self.minkowski_p >= 1.0) {
            return Err(Error::Config(format!("Minkowski p {} below 1", self.minkowski_p)));
        }
        if !(self.smoothing_sigma >= 0.0 && self.smoothing_sigma.is_finite()) {
            return Err(Error::Config(format!("bad sigma {}", self.smoothing_sigma)));
        }
        if self.smoothing_sigma == 0.0 && self.derivative_order > 0 {
            return Err(Error::Config("derivatives need sigma > 0".into()));
        }
        Ok(())
    }
}

pub const BASELINE_NAMES: [&str; 6] = [
    "grey_world",
    "white_patch",
    "shades_of_grey",
    "general_grey_world",
    "grey_edge_1",
    "grey_edge_2",
];

/// Parameter triple `(n, p, σ)` of a named method.
pub fn named_baseline(name: &str) -> Result<MinkowskiParams> {
    let (n, p, s) = match name {
        "grey_world" => (0, 1.0, 0.0),
        "white_patch" => (0, f64::INFINITY, 0.0),
        "shades_of_grey" => (0, 6.0, 0.0),
        "general_grey_world" => (0, 9.0, 9.0),
        "grey_edge_1" => (1, 1.0, 6.0),
        "grey_edge_2" => (2, 1.0, 6.0),
        other => return Err(Error::UnknownBaseline(other.to_string())),
    };
    MinkowskiParams::new(n, p, s)
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn convolve_rows(data: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut out = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (t, kv) in k.iter().enumerate() {
                s += kv * data[y * w + reflect(x as isize + t as isize - r, w)];
            }
            out[y * w + x] = s;
        }
    }
    out
}

fn convolve_cols(data: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut out = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (t, kv) in k.iter().enumerate() {
                s += kv * data[reflect(y as isize + t as isize - r, h) * w + x];
            }
            out[y * w + x] = s;
        }
    }
    out
}

/// Gaussian smoothing that ignores masked pixels: a normalized convolution,
/// so the result never depends on masked values.
fn smooth_masked(channel: &[f64], valid: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let weighted: Vec<f64> = channel.iter().zip(valid).map(|(v, m)| v * m).collect();
    let num = convolve_cols(&convolve_rows(&weighted, w, h, &k), w, h, &k);
    let den = convolve_cols(&convolve_rows(valid, w, h, &k), w, h, &k);
    num.iter()
        .zip(&den)
        .map(|(n, d)| if *d > 0.0 { n / d } else { 0.0 })
        .collect()
}

fn derivative_magnitude(f: &[f64], w: usize, h: usize, order: u8) -> Vec<f64> {
    let at = |x: isize, y: isize| f[reflect(y, h) * w + reflect(x, w)];
    let mut out = vec![0.0; f.len()];
    for y in 0..h as isize {
        for x in 0..w as isize {
            out[y as usize * w + x as usize] = match order {
                1 => {
                    let fx = (at(x + 1, y) - at(x - 1, y)) / 2.0;
                    let fy = (at(x, y + 1) - at(x, y - 1)) / 2.0;
                    (fx * fx + fy * fy).sqrt()
                }
                2 => {
                    let c = at(x, y);
                    let fxx = at(x + 1, y) - 2.0 * c + at(x - 1, y);
                    let fyy = at(x, y + 1) - 2.0 * c + at(x, y - 1);
                    let fxy = (at(x + 1, y + 1) - at(x + 1, y - 1) - at(x - 1, y + 1)
                        + at(x - 1, y - 1))
                        / 4.0;
                    // second-order magnitude as in the Grey-Edge reference code
                    (fxx * fxx + 4.0 * fxy * fxy + fyy * fyy).sqrt()
                }
                _ => f[y as usize * w + x as usize].abs(),
            };
        }
    }
    out
}

fn minkowski_mean(values: impl Iterator<Item = f64> + Clone, p: f64) -> f64 {
    let max = values.clone().fold(0.0_f64, |a, v| a.max(v.abs()));
    if p.is_infinite() || max == 0.0 {
        return max;
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += (v.abs() / max).powf(p);
        n += 1;
    }
    max * (sum / n as f64).powf(1.0 / p)
}

pub fn estimate_statistical(img: &LinearImage, params: &MinkowskiParams) -> Result<Illuminant> {
    params.validate()?;
    if img.unmasked_count() == 0 {
        return Err(Error::Degenerate("every pixel is masked".into()));
    }
    let (w, h) = (img.width(), img.height());
    let valid: Vec<f64> = match img.mask() {
        Some(m) => m.iter().map(|&x| if x { 0.0 } else { 1.0 }).collect(),
        None => vec![1.0; w * h],
    };
    let mut e = [0.0; 3];
    for (c, ec) in e.iter_mut().enumerate() {
        let channel: Vec<f64> = img.pixels().iter().map(|p| p[c]).collect();
        let response = if params.smoothing_sigma > 0.0 {
            let smooth = smooth_masked(&channel, &valid, w, h, params.smoothing_sigma);
            derivative_magnitude(&smooth, w, h, params.derivative_order)
        } else {
            channel
        };
        let values = response
            .iter()
            .zip(&valid)
            .filter(|(_, &m)| m > 0.0)
            .map(|(v, _)| *v);
        *ec = minkowski_mean(values, params.minkowski_p);
    }
    if e.iter().any(|&v| v == 0.0) {
        return Err(Error::Degenerate(format!("zero response in a channel: {e:?}")));
    }
    Illuminant::new(e).map_err(|err| Error::Degenerate(err.to_string()))
}

/// Estimate with a named method.
pub fn run_named(img: &LinearImage, name: &str) -> Result<Illuminant> {
    estimate_statistical(img, &named_baseline(name)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{angular_error, apply_illuminant, Rect};

    fn il(rgb: [f64; 3]) -> Illuminant {
        Illuminant::new(rgb).unwrap()
    }

    fn textured(w: usize, h: usize) -> LinearImage {
        let px = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                [
                    0.5 + 0.4 * (x * 0.7).sin() * (y * 0.3).cos(),
                    0.5 + 0.4 * (x * 0.2 + y * 0.5).sin(),
                    0.5 + 0.4 * (y * 0.9).cos(),
                ]
            })
            .collect();
        LinearImage::new(w, h, px, 1.0).unwrap()
    }

    #[test]
    fn named_parameters() {
        let g = named_baseline("grey_world").unwrap();
        assert_eq!((g.derivative_order, g.minkowski_p, g.smoothing_sigma), (0, 1.0, 0.0));
        let w = named_baseline("white_patch").unwrap();
        assert_eq!((w.derivative_order, w.minkowski_p, w.smoothing_sigma), (0, f64::INFINITY, 0.0));
        let s = named_baseline("shades_of_grey").unwrap();
        assert_eq!((s.derivative_order, s.minkowski_p, s.smoothing_sigma), (0, 6.0, 0.0));
        assert_eq!(named_baseline("general_grey_world").unwrap().smoothing_sigma, 9.0);
        assert_eq!(named_baseline("grey_edge_1").unwrap().derivative_order, 1);
        assert_eq!(named_baseline("grey_edge_2").unwrap().derivative_order, 2);
        assert!(matches!(named_baseline("gamut"), Err(Error::UnknownBaseline(_))));
    }

    #[test]
    fn derivatives_need_smoothing() {
        assert!(MinkowskiParams::new(1, 1.0, 0.0).is_err());
        assert!(MinkowskiParams::new(0, 0.5, 0.0).is_err());
        assert!(MinkowskiParams::new(3, 1.0, 1.0).is_err());
    }

    #[test]
    fn grey_world_on_grey_scene() {
        let light = il([0.9, 0.7, 0.35]);
        let img = apply_illuminant(&LinearImage::filled(8, 8, [0.5; 3], 1.0).unwrap(), &light);
        let e = run_named(&img, "grey_world").unwrap();
        assert!(angular_error(&e, &light) <= 1e-9);
    }

    #[test]
    fn grey_world_is_mean_direction() {
        let img = textured(13, 9);
        let mean = img.mean_color().unwrap();
        let e = run_named(&img, "grey_world").unwrap();
        assert!(angular_error(&e, &il(mean)) < 1e-12);
    }

    #[test]
    fn every_named_method_is_scale_invariant() {
        let img = textured(24, 20);
        for name in BASELINE_NAMES {
            let a = run_named(&img, name).unwrap();
            let b = run_named(&img.scaled(3.7), name).unwrap();
            assert!(angular_error(&a, &b) < 1e-9, "{name}");
        }
    }

    #[test]
    fn masked_pixels_do_not_matter() {
        let rect = Rect { x: 3, y: 4, w: 6, h: 5 };
        let base = textured(24, 20).with_mask_rect(rect).unwrap();
        let mut px = base.pixels().to_vec();
        for y in rect.y..rect.y + rect.h {
            for x in rect.x..rect.x + rect.w {
                px[y * 24 + x] = [1.0, 0.0, 0.3];
            }
        }
        let painted = LinearImage::new(24, 20, px, 1.0)
            .unwrap()
            .with_mask(base.mask().unwrap().to_vec())
            .unwrap();
        for name in BASELINE_NAMES {
            let a = run_named(&base, name).unwrap();
            let b = run_named(&painted, name).unwrap();
            assert_eq!(a, b, "{name}");
        }
    }

    #[test]
    fn degenerate_inputs() {
        let img = LinearImage::filled(4, 4, [0.5; 3], 1.0)
            .unwrap()
            .with_mask_rect(Rect { x: 0, y: 0, w: 4, h: 4 })
            .unwrap();
        assert!(matches!(run_named(&img, "grey_world"), Err(Error::Degenerate(_))));
        let flat = LinearImage::filled(6, 6, [0.5, 0.0, 0.5], 1.0).unwrap();
        assert!(matches!(run_named(&flat, "grey_world"), Err(Error::Degenerate(_))));
        let uniform = LinearImage::filled(10, 10, [0.5; 3], 1.0).unwrap();
        assert!(matches!(run_named(&uniform, "grey_edge_1"), Err(Error::Degenerate(_))));
    }

    #[test]
    fn p_json_accepts_inf() {
        let p: MinkowskiParams = serde_json::from_str(
            r#"{"derivative_order":0,"minkowski_p":"inf","smoothing_sigma":0}"#,
        )
        .unwrap();
        assert!(p.minkowski_p.is_infinite());
        let back: MinkowskiParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
