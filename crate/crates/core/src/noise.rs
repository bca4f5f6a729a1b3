//! Anisotropic Gaussian position noise and Kent orientation noise.
//!
//! The Kent axes `gamma1`, `gamma2` are attached to the *data* normal and
//! expressed in the data frame. With a transform `[a, R, t]` and a model
//! normal `y_n`, the orientation terms read `gamma_k . (R^T y_n)`.

use nalgebra::{Cholesky, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Mat3, SimilarityTransform, Vec3};
use crate::mesh::OrientedPoint;

/// Position covariances: `sigma_x` on data points (data frame) and
/// `sigma_y` on the model surface (model frame).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionNoise {
    pub sigma_x: Mat3,
    pub sigma_y: Mat3,
}

impl PositionNoise {
    /// Diagonal data covariance from per-axis standard deviations (mm), noiseless model.
    pub fn from_sds(sds: [f64; 3]) -> Self {
        Self {
            sigma_x: Mat3::from_diagonal(&Vec3::from(sds.map(|s| s * s))),
            sigma_y: Mat3::zeros(),
        }
    }

    /// `R sigma_x R^T + sigma_y`; the similarity scale is not applied to `sigma_x`.
    pub fn combined(&self, rotation: &Mat3) -> Mat3 {
        rotation * self.sigma_x * rotation.transpose() + self.sigma_y
    }

    /// A matrix `L` with `L L^T = sigma_x`; works for singular (PSD) covariances.
    pub fn sqrt_factor(&self) -> Result<Mat3> {
        psd_sqrt(&self.sigma_x)
    }
}

fn psd_sqrt(m: &Mat3) -> Result<Mat3> {
    if (m - m.transpose()).abs().max() > 1e-12 * m.abs().max().max(1.0) {
        return Err(invalid("covariance is not symmetric"));
    }
    if let Some(ch) = Cholesky::new(*m) {
        return Ok(ch.l());
    }
    let eig = SymmetricEigen::new(*m);
    if eig.eigenvalues.iter().any(|&l| l < -1e-12) {
        return Err(Error::NotPositiveDefinite);
    }
    let d = Mat3::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(eig.eigenvectors * d)
}

/// Kent orientation-noise parameters shared by every point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KentNoise {
    pub kappa: f64,
    pub beta: f64,
}

impl KentNoise {
    pub fn new(kappa: f64, beta: f64) -> Result<Self> {
        if !(kappa >= 0.0) || !(beta >= 0.0) || 2.0 * beta > kappa * (1.0 + 1e-12) {
            return Err(invalid(format!("need 0 <= 2 beta <= kappa, got kappa={kappa}, beta={beta}")));
        }
        Ok(Self { kappa, beta })
    }

    /// `kappa = 1 / sigma^2` (sigma in radians) and `beta = e kappa / 2`.
    pub fn from_sd(sigma_deg: f64, eccentricity: f64) -> Result<Self> {
        let (kappa, beta) = kent_from_sd(sigma_deg, eccentricity)?;
        Ok(Self { kappa, beta })
    }
}

/// Concentration and ovalness from an angular SD in degrees and an eccentricity.
pub fn kent_from_sd(sigma_deg: f64, eccentricity: f64) -> Result<(f64, f64)> {
    if !(sigma_deg > 0.0) || !sigma_deg.is_finite() {
        return Err(invalid(format!("orientation SD must be positive, got {sigma_deg}")));
    }
    if !(0.0..=1.0).contains(&eccentricity) {
        return Err(invalid(format!("eccentricity must lie in [0, 1], got {eccentricity}")));
    }
    let sigma = sigma_deg.to_radians();
    let kappa = 1.0 / (sigma * sigma);
    Ok((kappa, eccentricity * kappa / 2.0))
}

/// Noise block of run configurations: per-axis position SDs, angular SD, eccentricity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub position_sd_mm: [f64; 3],
    pub orientation_sd_deg: f64,
    pub eccentricity: f64,
}

impl NoiseSpec {
    pub fn new(position_sd_mm: [f64; 3], orientation_sd_deg: f64, eccentricity: f64) -> Self {
        Self {
            position_sd_mm,
            orientation_sd_deg,
            eccentricity,
        }
    }

    pub fn position(&self) -> Result<PositionNoise> {
        if self.position_sd_mm.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(invalid("position SDs must be non-negative"));
        }
        Ok(PositionNoise::from_sds(self.position_sd_mm))
    }

    pub fn kent(&self) -> Result<KentNoise> {
        KentNoise::from_sd(self.orientation_sd_deg, self.eccentricity)
    }

    pub fn validate(&self) -> Result<()> {
        self.position()?;
        self.kent()?;
        Ok(())
    }
}

/// Deterministic right-handed frame `(gamma1, gamma2)` orthogonal to `n`.
///
/// `gamma1` comes from Gram–Schmidt on the coordinate axis least aligned
/// with `n` (lowest index on ties), `gamma2 = n x gamma1`.
pub fn tangent_frame(n: &Vec3) -> Result<(Vec3, Vec3)> {
    let len = n.norm();
    if !(len > 0.0) || !len.is_finite() {
        return Err(invalid("tangent frame of a zero vector"));
    }
    let n = n / len;
    let abs = n.abs();
    let axis = if abs.x <= abs.y && abs.x <= abs.z {
        0
    } else if abs.y <= abs.z {
        1
    } else {
        2
    };
    let mut e = Vec3::zeros();
    e[axis] = 1.0;
    let g1 = (e - n * n[axis]).normalize();
    let g2 = n.cross(&g1);
    Ok((g1, g2))
}

/// Cholesky-backed Mahalanobis metric for a fixed SPD covariance.
#[derive(Debug, Clone)]
pub struct Mahalanobis {
    inverse: Mat3,
    whitening: Mat3,
}

impl Mahalanobis {
    pub fn new(sigma: &Mat3) -> Result<Self> {
        if (sigma - sigma.transpose()).abs().max() > 1e-12 * sigma.abs().max().max(1.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let ch = Cholesky::new(*sigma).ok_or(Error::NotPositiveDefinite)?;
        let l = ch.l();
        let whitening = l.try_inverse().ok_or(Error::NotPositiveDefinite)?;
        Ok(Self {
            inverse: ch.inverse(),
            whitening,
        })
    }

    /// `r^T Sigma^-1 r`, evaluated as `|L^-1 r|^2`.
    pub fn sq(&self, r: &Vec3) -> f64 {
        (self.whitening * r).norm_squared()
    }

    pub fn inverse(&self) -> &Mat3 {
        &self.inverse
    }

    /// `W = L^-1` with `Sigma = L L^T`; `|W r|^2` is the Mahalanobis distance.
    pub fn whitening(&self) -> &Mat3 {
        &self.whitening
    }
}

/// Squared Mahalanobis distance `r^T Sigma^-1 r`.
pub fn mahalanobis_sq(r: &Vec3, sigma: &Mat3) -> Result<f64> {
    Ok(Mahalanobis::new(sigma)?.sq(r))
}

/// Orientation part of the match negative log-likelihood for model normal
/// `y_n` against data normal `x_n` with Kent frame `(g1, g2)` on `x_n`.
pub fn orientation_nll(kent: &KentNoise, x_n: &Vec3, frame: &(Vec3, Vec3), rotation: &Mat3, y_n: &Vec3) -> f64 {
    let u = rotation.transpose() * y_n;
    let c1 = frame.0.dot(&u);
    let c2 = frame.1.dot(&u);
    -kent.kappa * x_n.dot(&u) - kent.beta * (c1 * c1 - c2 * c2)
}

/// Negative log match likelihood with terms constant in `y` dropped:
/// `1/2 r^T Sigma^-1 r - kappa y_n.R x_n - beta((g1.R^T y_n)^2 - (g2.R^T y_n)^2)`,
/// `r = y_p - a R x_p - t`, `Sigma = R Sigma_x R^T + Sigma_y`.
pub fn match_nll(
    x: &OrientedPoint,
    y: &OrientedPoint,
    pos: &PositionNoise,
    kent: &KentNoise,
    transform: &SimilarityTransform,
) -> Result<f64> {
    let sigma = pos.combined(&transform.rotation);
    let r = y.position - transform.apply_point(&x.position);
    let frame = tangent_frame(&x.normal)?;
    Ok(0.5 * mahalanobis_sq(&r, &sigma)?
        + orientation_nll(kent, &x.normal, &frame, &transform.rotation, &y.normal))
}

/// How the angular-outlier threshold summarizes angular errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngularSpread {
    /// `sqrt(-2 ln Rbar)` with `Rbar` the mean cosine.
    #[default]
    CircularSd,
    /// Plain mean of the angular errors.
    MeanAngle,
}

/// Circular standard deviation of angles in radians.
pub fn circular_sd(angles: &[f64]) -> Result<f64> {
    if angles.is_empty() {
        return Err(invalid("circular SD of an empty set"));
    }
    // 1 - cos(a) = 2 sin^2(a/2) keeps small spreads accurate.
    let one_minus = angles.iter().map(|a| 2.0 * (0.5 * a).sin().powi(2)).sum::<f64>() / angles.len() as f64;
    let one_minus = one_minus.clamp(0.0, 1.0 - 1e-12);
    Ok((-2.0 * (-one_minus).ln_1p()).sqrt())
}

pub fn mean_angle(angles: &[f64]) -> Result<f64> {
    if angles.is_empty() {
        return Err(invalid("mean of an empty set"));
    }
    Ok(angles.iter().sum::<f64>() / angles.len() as f64)
}

impl AngularSpread {
    pub fn evaluate(self, angles: &[f64]) -> Result<f64> {
        match self {
            AngularSpread::CircularSd => circular_sd(angles),
            AngularSpread::MeanAngle => mean_angle(angles),
        }
    }
}

/// Corrupts an oriented point: Gaussian position noise with covariance
/// `sigma_x`, and a tangent-plane Gaussian normal perturbation with variance
/// `1/(kappa - 2 beta)` along `gamma1` and `1/(kappa + 2 beta)` along `gamma2`.
pub fn sample_noise<R: Rng + ?Sized>(
    rng: &mut R,
    pos: &PositionNoise,
    kent: &KentNoise,
    x: &OrientedPoint,
) -> Result<OrientedPoint> {
    let minor = kent.kappa - 2.0 * kent.beta;
    if !(minor > 0.0) {
        return Err(invalid("orientation noise needs kappa - 2 beta > 0"));
    }
    let l = pos.sqrt_factor()?;
    let z = Vec3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    let (g1, g2) = tangent_frame(&x.normal)?;
    let a: f64 = rng.sample::<f64, _>(StandardNormal) / minor.sqrt();
    let b: f64 = rng.sample::<f64, _>(StandardNormal) / (kent.kappa + 2.0 * kent.beta).sqrt();
    let normal = (x.normal + g1 * a + g2 * b).normalize();
    Ok(OrientedPoint {
        position: x.position + l * z,
        normal,
    })
}
