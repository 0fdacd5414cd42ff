use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::{random_orthogonal, standard_normal_matrix, stream_rng, streams};
use crate::error::{PrismError, Result};
use crate::matrix::{FeatureMatrix, HeadMatrix};

/// Standard deviation of target feature entries.
pub const FEATURE_SCALE: f64 = 1.0;
/// Head entries are `N(0, (HEAD_GAIN/√d)²)`, so logits have standard
/// deviation close to `HEAD_GAIN`.
pub const HEAD_GAIN: f64 = 2.0;

/// How the proxy is derived from the target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// `Z_P = Z_T + m·E`, `E` standard normal.
    GaussianNoise,
    /// `Z_P = (1 − m)·Z_T`.
    ScaleShrink,
    /// `Z_P = Z_T·((1 − m)·I + m·R)` for a random orthogonal `R`.
    RotationMix,
    /// `H_P = H_T + m·(HEAD_GAIN/√d)·N`; features untouched.
    HeadNoise,
    /// Rotation mix, then additive noise, then shrink, plus head noise, all
    /// at the same magnitude.
    Combined,
}

impl Perturbation {
    pub const ALL: [Perturbation; 5] = [
        Perturbation::GaussianNoise,
        Perturbation::ScaleShrink,
        Perturbation::RotationMix,
        Perturbation::HeadNoise,
        Perturbation::Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Perturbation::GaussianNoise => "gaussian_noise",
            Perturbation::ScaleShrink => "scale_shrink",
            Perturbation::RotationMix => "rotation_mix",
            Perturbation::HeadNoise => "head_noise",
            Perturbation::Combined => "combined",
        }
    }

    fn max_magnitude(self) -> Option<f64> {
        match self {
            Perturbation::ScaleShrink | Perturbation::RotationMix | Perturbation::Combined => Some(1.0),
            Perturbation::GaussianNoise | Perturbation::HeadNoise => None,
        }
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Perturbation {
    type Err = PrismError;

    fn from_str(s: &str) -> Result<Self> {
        Perturbation::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| PrismError::invalid("perturbation", format!("unknown kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizes {
    pub n: usize,
    pub d: usize,
    pub v: usize,
}

impl Sizes {
    pub const DEFAULT: Sizes = Sizes { n: 64, d: 16, v: 32 };

    fn validate(self) -> Result<()> {
        for (name, value) in [("n", self.n), ("d", self.d), ("V", self.v)] {
            if value == 0 {
                return Err(PrismError::invalid("sizes", format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    /// Uniform draw of each dimension in `1..=max`, from the instance's
    /// size stream.
    pub fn sample_up_to(self, seed: u64) -> Result<Sizes> {
        self.validate()?;
        let mut rng = stream_rng(seed, streams::SIZES);
        Ok(Sizes {
            n: rng.random_range(1..=self.n),
            d: rng.random_range(1..=self.d),
            v: rng.random_range(1..=self.v),
        })
    }
}

impl Default for Sizes {
    fn default() -> Self {
        Sizes::DEFAULT
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticInstance {
    pub z_t: FeatureMatrix,
    pub z_p: FeatureMatrix,
    pub h_t: HeadMatrix,
    pub h_p: HeadMatrix,
    pub labels: Vec<usize>,
    pub seed: u64,
    pub perturbation: Perturbation,
    pub magnitude: f64,
}

/// Labels are drawn from the target model's own predictive distribution,
/// so the target is calibrated on its samples and proxy drift shows up as
/// a risk increase.
fn sample_labels(z: &DMatrix<f64>, h: &DMatrix<f64>, seed: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, streams::LABELS);
    let logits = z * h;
    (0..logits.nrows())
        .map(|i| {
            let row = logits.row(i);
            let max = row.max();
            let weights: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (j, w) in weights.iter().enumerate() {
                if u < *w {
                    return j;
                }
                u -= w;
            }
            weights.len() - 1
        })
        .collect()
}

pub fn gen_instance(
    seed: u64,
    sizes: Sizes,
    perturbation: Perturbation,
    magnitude: f64,
) -> Result<SyntheticInstance> {
    sizes.validate()?;
    if !magnitude.is_finite() || magnitude < 0.0 {
        return Err(PrismError::invalid("magnitude", format!("must be finite and >= 0, got {magnitude}")));
    }
    if let Some(max) = perturbation.max_magnitude() {
        if magnitude > max {
            return Err(PrismError::invalid(
                "magnitude",
                format!("{perturbation} requires magnitude <= {max}, got {magnitude}"),
            ));
        }
    }
    let Sizes { n, d, v } = sizes;
    let head_scale = HEAD_GAIN / (d as f64).sqrt();
    let z_t = standard_normal_matrix(&mut stream_rng(seed, streams::TARGET_FEATURES), n, d) * FEATURE_SCALE;
    let h_t = standard_normal_matrix(&mut stream_rng(seed, streams::TARGET_HEAD), d, v) * head_scale;
    let labels = sample_labels(&z_t, &h_t, seed);

    let m = magnitude;
    let noise = || standard_normal_matrix(&mut stream_rng(seed, streams::FEATURE_NOISE), n, d) * FEATURE_SCALE;
    let blend = || {
        let r = random_orthogonal(&mut stream_rng(seed, streams::ROTATION), d);
        DMatrix::<f64>::identity(d, d) * (1.0 - m) + r * m
    };
    let head_noise = || standard_normal_matrix(&mut stream_rng(seed, streams::HEAD_NOISE), d, v) * head_scale;

    let (z_p, h_p) = match perturbation {
        Perturbation::GaussianNoise => (&z_t + noise() * m, h_t.clone()),
        Perturbation::ScaleShrink => (&z_t * (1.0 - m), h_t.clone()),
        Perturbation::RotationMix => (&z_t * blend(), h_t.clone()),
        Perturbation::HeadNoise => (z_t.clone(), &h_t + head_noise() * m),
        Perturbation::Combined => {
            let z = (&z_t * blend() + noise() * m) * (1.0 - m);
            (z, &h_t + head_noise() * m)
        }
    };

    Ok(SyntheticInstance {
        z_t: FeatureMatrix::new(z_t)?,
        z_p: FeatureMatrix::new(z_p)?,
        h_t: HeadMatrix::new(h_t)?,
        h_p: HeadMatrix::new(h_p)?,
        labels,
        seed,
        perturbation,
        magnitude,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{omega_trace, rms_scale};

    #[test]
    fn zero_magnitude_is_identity() {
        for kind in Perturbation::ALL {
            let inst = gen_instance(3, Sizes { n: 9, d: 4, v: 6 }, kind, 0.0).unwrap();
            assert_eq!(inst.z_p, inst.z_t, "{kind}");
            assert_eq!(inst.h_p, inst.h_t, "{kind}");
            // bitwise, including signed zeros
            for (a, b) in inst.z_p.values().iter().zip(inst.z_t.values().iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn scale_shrink_half() {
        let inst = gen_instance(4, Sizes::DEFAULT, Perturbation::ScaleShrink, 0.5).unwrap();
        let rt = rms_scale(&inst.z_t).unwrap();
        let rp = rms_scale(&inst.z_p).unwrap();
        assert!((rp - 0.5 * rt).abs() <= 1e-12);
        assert!((omega_trace(&inst.z_t, &inst.z_p).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn deterministic() {
        for kind in Perturbation::ALL {
            let a = gen_instance(11, Sizes::DEFAULT, kind, 0.3).unwrap();
            let b = gen_instance(11, Sizes::DEFAULT, kind, 0.3).unwrap();
            assert_eq!(a, b);
        }
        let a = gen_instance(11, Sizes::DEFAULT, Perturbation::GaussianNoise, 0.3).unwrap();
        let c = gen_instance(12, Sizes::DEFAULT, Perturbation::GaussianNoise, 0.3).unwrap();
        assert_ne!(a.z_t, c.z_t);
    }

    #[test]
    fn labels_in_range() {
        let inst = gen_instance(5, Sizes { n: 50, d: 3, v: 4 }, Perturbation::Combined, 0.2).unwrap();
        assert_eq!(inst.labels.len(), 50);
        assert!(inst.labels.iter().all(|&l| l < 4));
    }

    #[test]
    fn invalid_parameters() {
        assert!(gen_instance(0, Sizes { n: 0, d: 2, v: 2 }, Perturbation::HeadNoise, 0.1).is_err());
        assert!(gen_instance(0, Sizes::DEFAULT, Perturbation::HeadNoise, -0.1).is_err());
        assert!(gen_instance(0, Sizes::DEFAULT, Perturbation::ScaleShrink, 1.5).is_err());
        assert!(gen_instance(0, Sizes::DEFAULT, Perturbation::GaussianNoise, 1.5).is_ok());
    }

    #[test]
    fn parse_kinds() {
        for kind in Perturbation::ALL {
            assert_eq!(kind.as_str().parse::<Perturbation>().unwrap(), kind);
        }
        assert!("spin".parse::<Perturbation>().is_err());
    }
}
