use serde::{Deserialize, Serialize};

use super::DatasetId;
use crate::error::{Error, Result};
use crate::nn::Label;

/// Per-dataset label counts and test-block composition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub f1: usize,
    pub f2: usize,
    /// Fraction of items (by latest timestamp) held out for testing.
    pub test_fraction: f64,
    /// Share of F1 among the held-out tail block.
    pub test_f1_share: f64,
}

impl DatasetSpec {
    pub fn len(&self) -> usize {
        self.f1 + self.f2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tail_len(&self) -> usize {
        (self.test_fraction * self.len() as f64).ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub seed: u64,
    pub a: DatasetSpec,
    pub b: DatasetSpec,
    /// Inclusive crop height range in pixels.
    pub crop_height: [usize; 2],
    /// Width/height range.
    pub aspect_ratio: [f64; 2],
    pub drift: f64,
    /// Sensor noise standard deviation in grey levels.
    pub noise: f64,
    pub blur_radius: usize,
    /// Illumination gain range applied to ink and background.
    pub gain: [f64; 2],
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 17,
            a: DatasetSpec {
                f1: 400,
                f2: 190,
                test_fraction: 0.292,
                test_f1_share: 0.81,
            },
            b: DatasetSpec {
                f1: 120,
                f2: 190,
                test_fraction: 0.264,
                test_f1_share: 0.27,
            },
            crop_height: [10, 18],
            aspect_ratio: [4.0, 8.0],
            drift: 1.0,
            noise: 6.0,
            blur_radius: 1,
            gain: [0.85, 1.15],
        }
    }
}

impl GenConfig {
    pub fn dataset(&self, id: DatasetId) -> &DatasetSpec {
        match id {
            DatasetId::A => &self.a,
            DatasetId::B => &self.b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for id in [DatasetId::A, DatasetId::B] {
            let d = self.dataset(id);
            let name = id.name();
            if d.f1 < 5 || d.f2 < 5 {
                return bad(format!("dataset {name}: need at least 5 items per label"));
            }
            if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
                return bad(format!("dataset {name}: test_fraction must lie in (0, 1)"));
            }
            if !(0.0..=1.0).contains(&d.test_f1_share) {
                return bad(format!("dataset {name}: test_f1_share must lie in [0, 1]"));
            }
            if d.tail_len() >= d.len() - 1 {
                return bad(format!("dataset {name}: test block leaves too few items"));
            }
        }
        let [h0, h1] = self.crop_height;
        if h0 == 0 || h0 > h1 {
            return bad(format!("crop_height must be a non-empty positive range, got {h0}..={h1}"));
        }
        let [r0, r1] = self.aspect_ratio;
        if !(r0 > 1.0 && r0 <= r1 && r1.is_finite()) {
            return bad(format!("aspect_ratio must satisfy 1 < min <= max, got [{r0}, {r1}]"));
        }
        if !(self.drift >= 0.0 && self.drift.is_finite()) {
            return bad(format!("drift must be finite and non-negative, got {}", self.drift));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be finite and non-negative, got {}", self.noise));
        }
        let [g0, g1] = self.gain;
        if !(g0 > 0.0 && g0 <= g1 && g1.is_finite()) {
            return bad(format!("gain must satisfy 0 < min <= max, got [{g0}, {g1}]"));
        }
        Ok(())
    }

    /// Distribution of the pattern parameters for one class of one dataset.
    pub fn pattern(&self, id: DatasetId, label: Label) -> PatternDistribution {
        let d = match id {
            DatasetId::A => 0.0,
            DatasetId::B => self.drift,
        };
        let (pitch, radius) = match label {
            Label::F1 => (5.0, 1.0),
            Label::F2 => (4.0, 1.5),
        };
        PatternDistribution {
            pitch: Gaussian::new(pitch - 0.6 * d, 0.3),
            radius: Gaussian::new(radius + 0.4 * d, 0.1),
            noise: Gaussian::new(self.noise * (1.0 + 0.5 * d), 0.1 * self.noise + 0.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub sd: f64,
}

impl Gaussian {
    pub fn new(mean: f64, sd: f64) -> Self {
        Self { mean, sd }
    }

    fn symmetric_kl(self, other: Gaussian) -> f64 {
        let (v1, v2) = (self.sd * self.sd, other.sd * other.sd);
        let dm2 = (self.mean - other.mean).powi(2);
        (v1 + dm2) / (2.0 * v2) + (v2 + dm2) / (2.0 * v1) - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternDistribution {
    pub pitch: Gaussian,
    pub radius: Gaussian,
    pub noise: Gaussian,
}

/// Symmetric KL divergence between two pattern distributions whose
/// components are independent Gaussians.
pub fn symmetric_kl(p: &PatternDistribution, q: &PatternDistribution) -> f64 {
    p.pitch.symmetric_kl(q.pitch) + p.radius.symmetric_kl(q.radius) + p.noise.symmetric_kl(q.noise)
}
