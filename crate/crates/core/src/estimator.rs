//! Illuminant estimation from classifier output: per-patch probabilities
//! are averaged over all patches of an image, then the illuminant is the
//! probability-weighted sum of the cluster centers, renormalized.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{make_patch, PatchSpec};
use crate::clustering::ClusterModel;
use crate::error::{Error, Result};
use crate::imaging::{Illuminant, LinearImage};
use crate::network::Classifier;

/// What gets averaged across the patches of one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Average probability vectors, then take one weighted sum of centers.
    #[default]
    Probabilities,
    /// Weighted sum per patch, then average the per-patch illuminants.
    Illuminants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub illuminant: Illuminant,
    /// Patch-averaged class probabilities.
    pub probabilities: Vec<f64>,
    pub patch_count: usize,
}

fn check_probs(clusters: &ClusterModel, probs: &[f64]) -> Result<()> {
    if probs.len() != clusters.k() {
        return Err(Error::Shape(format!(
            "{} probabilities for {} clusters",
            probs.len(),
            clusters.k()
        )));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Degenerate(format!("invalid probabilities {probs:?}")));
    }
    Ok(())
}

/// `normalize(sum_i p_i * mu_i)` over unit-norm centers. A vector with a
/// single nonzero weight returns that center unchanged.
pub fn weighted_center_sum(clusters: &ClusterModel, probs: &[f64]) -> Result<Illuminant> {
    check_probs(clusters, probs)?;
    let mut nonzero = probs.iter().enumerate().filter(|(_, &p)| p > 0.0);
    if let (Some((i, _)), None) = (nonzero.next(), nonzero.next()) {
        return Ok(clusters.centers()[i]);
    }
    let mut e = [0.0; 3];
    for (mu, &p) in clusters.centers().iter().zip(probs) {
        let v = mu.rgb();
        for c in 0..3 {
            e[c] += p * v[c];
        }
    }
    Illuminant::new(e).map_err(|_| Error::Degenerate("weights sum to a zero vector".into()))
}

/// Center of the most probable cluster; ties go to the lowest index.
pub fn argmax_center(clusters: &ClusterModel, probs: &[f64]) -> Result<Illuminant> {
    check_probs(clusters, probs)?;
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    Ok(clusters.centers()[best])
}

struct PatchOutputs {
    mean_probs: Vec<f64>,
    per_patch: Vec<Vec<f64>>,
}

fn run_patches(
    img: &LinearImage,
    net: &dyn Classifier,
    clusters: &ClusterModel,
    spec: &PatchSpec,
    seed: u64,
) -> Result<PatchOutputs> {
    if net.num_classes() != clusters.k() {
        return Err(Error::Shape(format!(
            "network has {} classes but there are {} clusters",
            net.num_classes(),
            clusters.k()
        )));
    }
    spec.validate()?;
    let per_patch: Vec<Vec<f64>> = (0..spec.patch_count)
        .into_par_iter()
        .map(|i| net.predict(&make_patch(img, spec, seed, i)?))
        .collect::<Result<_>>()?;
    let mut mean = vec![0.0; clusters.k()];
    for y in &per_patch {
        for (m, v) in mean.iter_mut().zip(y) {
            *m += v;
        }
    }
    let n = per_patch.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(PatchOutputs {
        mean_probs: mean,
        per_patch,
    })
}

/// Weighted-sum estimate with probabilities averaged over patches.
pub fn estimate(
    img: &LinearImage,
    net: &dyn Classifier,
    clusters: &ClusterModel,
    spec: &PatchSpec,
    seed: u64,
) -> Result<Estimate> {
    estimate_with(img, net, clusters, spec, seed, Averaging::Probabilities)
}

pub fn estimate_with(
    img: &LinearImage,
    net: &dyn Classifier,
    clusters: &ClusterModel,
    spec: &PatchSpec,
    seed: u64,
    averaging: Averaging,
) -> Result<Estimate> {
    let out = run_patches(img, net, clusters, spec, seed)?;
    let illuminant = match averaging {
        Averaging::Probabilities => weighted_center_sum(clusters, &out.mean_probs)?,
        Averaging::Illuminants => {
            let mut sum = [0.0; 3];
            for y in &out.per_patch {
                let e = weighted_center_sum(clusters, y)?.rgb();
                for c in 0..3 {
                    sum[c] += e[c];
                }
            }
            Illuminant::new(sum)?
        }
    };
    Ok(Estimate {
        illuminant,
        probabilities: out.mean_probs,
        patch_count: out.per_patch.len(),
    })
}

/// Center of the most probable cluster after patch averaging.
pub fn estimate_argmax(
    img: &LinearImage,
    net: &dyn Classifier,
    clusters: &ClusterModel,
    spec: &PatchSpec,
    seed: u64,
) -> Result<Estimate> {
    let out = run_patches(img, net, clusters, spec, seed)?;
    Ok(Estimate {
        illuminant: argmax_center(clusters, &out.mean_probs)?,
        probabilities: out.mean_probs,
        patch_count: out.per_patch.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::Patch;
    use crate::imaging::angular_error;

    fn il(rgb: [f64; 3]) -> Illuminant {
        Illuminant::new(rgb).unwrap()
    }

    fn three() -> ClusterModel {
        ClusterModel::new(vec![il([1.0, 0.6, 0.3]), il([0.7, 0.8, 0.6]), il([0.4, 0.7, 1.0])]).unwrap()
    }

    struct Fixed(Vec<f64>);

    impl Classifier for Fixed {
        fn num_classes(&self) -> usize {
            self.0.len()
        }
        fn predict(&self, _: &Patch) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    fn spec() -> PatchSpec {
        PatchSpec {
            patch_count: 5,
            crop_min: 8,
            crop_max: 16,
            net_input_side: 8,
            ..PatchSpec::paper()
        }
    }

    fn image() -> LinearImage {
        LinearImage::filled(20, 20, [0.3, 0.4, 0.5], 1.0).unwrap()
    }

    #[test]
    fn one_hot_returns_center() {
        let m = three();
        for j in 0..3 {
            let mut p = vec![0.0; 3];
            p[j] = 1.0;
            let e = weighted_center_sum(&m, &p).unwrap();
            assert_eq!(angular_error(&e, &m.centers()[j]), 0.0);
            assert_eq!(e, m.centers()[j]);
        }
    }

    #[test]
    fn uniform_two_centers() {
        let m = ClusterModel::new(vec![il([1.0, 0.0, 0.0]), il([0.0, 1.0, 0.0])]).unwrap();
        let e = weighted_center_sum(&m, &[0.5, 0.5]).unwrap().rgb();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e[0] - h).abs() < 1e-15 && (e[1] - h).abs() < 1e-15 && e[2] == 0.0);
    }

    #[test]
    fn argmax_differs_from_weighted_sum() {
        let m = three();
        let p = [0.4, 0.35, 0.25];
        assert_eq!(argmax_center(&m, &p).unwrap(), m.centers()[0]);
        assert!(angular_error(&weighted_center_sum(&m, &p).unwrap(), &m.centers()[0]) > 1.0);
        assert_eq!(argmax_center(&m, &[1.0 / 3.0; 3]).unwrap(), m.centers()[0]);
    }

    #[test]
    fn end_to_end_with_stub() {
        let m = three();
        let net = Fixed(vec![0.0, 1.0, 0.0]);
        let e = estimate(&image(), &net, &m, &spec(), 1).unwrap();
        assert_eq!(e.patch_count, 5);
        assert_eq!(e.illuminant, m.centers()[1]);
        assert_eq!(estimate_argmax(&image(), &net, &m, &spec(), 1).unwrap().illuminant, e.illuminant);
        let alt = estimate_with(&image(), &net, &m, &spec(), 1, Averaging::Illuminants).unwrap();
        assert!(angular_error(&alt.illuminant, &e.illuminant) < 1e-12);
    }

    #[test]
    fn class_count_mismatch() {
        let net = Fixed(vec![0.5, 0.5]);
        assert!(matches!(
            estimate(&image(), &net, &three(), &spec(), 0),
            Err(Error::Shape(_))
        ));
    }
}
