//! Random similarity offsets applied to sampled data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{exp_so3, SimilarityTransform, Vec3};
use crate::mesh::OrientedPoint;

/// Intervals for the rotation angle, translation magnitude and scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OffsetRanges {
    pub rotation_deg: [f64; 2],
    pub translation_mm: [f64; 2],
    pub scale: [f64; 2],
}

impl Default for OffsetRanges {
    fn default() -> Self {
        Self {
            rotation_deg: [0.0, 10.0],
            translation_mm: [0.0, 10.0],
            scale: [0.95, 1.05],
        }
    }
}

impl OffsetRanges {
    pub fn identity() -> Self {
        Self {
            rotation_deg: [0.0, 0.0],
            translation_mm: [0.0, 0.0],
            scale: [1.0, 1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |r: [f64; 2]| r[0] <= r[1] && r[0].is_finite() && r[1].is_finite();
        if !ok(self.rotation_deg) || !ok(self.translation_mm) || !ok(self.scale) {
            return Err(invalid("offset ranges must be finite with lo <= hi"));
        }
        if self.rotation_deg[0] < 0.0 || self.translation_mm[0] < 0.0 || self.scale[0] <= 0.0 {
            return Err(invalid("offset magnitudes must be non-negative and scale positive"));
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    r[0] + (r[1] - r[0]) * rng.random::<f64>()
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Uniform axis and angle, uniform translation direction and magnitude, uniform scale.
pub fn sample_offset<R: Rng + ?Sized>(rng: &mut R, ranges: &OffsetRanges) -> SimilarityTransform {
    let axis = unit_vector(rng);
    let angle = uniform(rng, ranges.rotation_deg).to_radians();
    let dir = unit_vector(rng);
    let mag = uniform(rng, ranges.translation_mm);
    let scale = uniform(rng, ranges.scale);
    SimilarityTransform::new(scale, exp_so3(&(axis * angle)), dir * mag)
}

/// Applies a random offset to `points`; returns the moved points and the exact transform.
pub fn apply_offset(points: &[OrientedPoint], ranges: &OffsetRanges, seed: u64) -> (Vec<OrientedPoint>, SimilarityTransform) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = sample_offset(&mut rng, ranges);
    (points.iter().map(|p| p.transformed(&t)).collect(), t)
}
