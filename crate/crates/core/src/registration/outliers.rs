use serde::{Deserialize, Serialize};

use super::Correspondence;
use crate::confidence::chi2_inv;
use crate::error::{Error, Result};
use crate::noise::AngularSpread;

/// Thresholds used by one outlier-rejection pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierSummary {
    pub position_threshold: f64,
    pub sigma_circ: f64,
    pub angle_threshold: f64,
    pub rejected_position: usize,
    pub rejected_angle: usize,
}

// Keeps exactly-equal angles on the inlier side of the threshold.
const ANGLE_FLOOR: f64 = 1e-9;

/// Two-stage rejection. Stage 1 flags squared Mahalanobis distances above
/// `chi2inv(p, 3)`. Stage 2 flags survivors whose angular error exceeds three
/// times the angular spread of the stage-1 survivors. Flags are reset first.
pub fn reject_outliers(corrs: &mut [Correspondence], p: f64, spread: AngularSpread) -> Result<OutlierSummary> {
    if corrs.is_empty() {
        return Err(Error::DegenerateData("no correspondences".into()));
    }
    let position_threshold = chi2_inv(p, 3)?;
    let mut rejected_position = 0;
    for c in corrs.iter_mut() {
        c.outlier = !(c.sq_mahalanobis <= position_threshold);
        rejected_position += c.outlier as usize;
    }
    let angles: Vec<f64> = corrs.iter().filter(|c| !c.outlier).map(|c| c.angular_error).collect();
    if angles.is_empty() {
        return Err(Error::DegenerateData(format!(
            "all {} correspondences rejected by the position test",
            corrs.len()
        )));
    }
    let sigma_circ = spread.evaluate(&angles)?;
    let angle_threshold = 3.0 * sigma_circ + ANGLE_FLOOR;
    let mut rejected_angle = 0;
    for c in corrs.iter_mut().filter(|c| !c.outlier) {
        if c.angular_error > angle_threshold {
            c.outlier = true;
            rejected_angle += 1;
        }
    }
    if rejected_position + rejected_angle == corrs.len() {
        return Err(Error::DegenerateData("all correspondences rejected".into()));
    }
    Ok(OutlierSummary {
        position_threshold,
        sigma_circ,
        angle_threshold,
        rejected_position,
        rejected_angle,
    })
}
