//! Deformable most-likely oriented point registration.
//!
//! Each outer iteration instantiates the current deformed shape, matches every
//! data point to its most likely model point, rejects outliers, and jointly
//! re-optimizes the similarity transform and the shape parameters.

mod anderson;
mod cost;
mod matcher;
mod outliers;

use serde::{Deserialize, Serialize};

pub use cost::{CostModel, POSE_DIM};
pub use matcher::{find_most_likely_match, Correspondence, Matcher};
pub use outliers::{reject_outliers, OutlierSummary};

use crate::confidence::{chi2_inv, classify, orientation_score, position_score, Confidence, ConfidenceLadder};
use crate::error::{invalid, Error, Result};
use crate::geometry::{rotation_angle, SimilarityTransform};
use crate::mesh::OrientedPoint;
use crate::noise::{AngularSpread, NoiseSpec};
use crate::optim::{minimize, BfgsOptions, Bounds};
use crate::ssm::{ShapeParameters, StatisticalShapeModel};

/// Changes between outer iterations below which registration has converged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub rotation_deg: f64,
    pub translation_mm: f64,
    pub scale: f64,
    pub shape_sd: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rotation_deg: 0.01,
            translation_mm: 0.01,
            scale: 1e-4,
            shape_sd: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    /// Number of shape modes optimized; 0 gives rigid registration with scale.
    pub n_modes: usize,
    /// Assumed noise of the data.
    pub noise: NoiseSpec,
    pub scale_bounds: [f64; 2],
    /// Bound on `|s_j|` in standard deviations.
    pub shape_bound_sd: f64,
    pub p_outlier: f64,
    pub max_iterations: usize,
    pub tolerances: Tolerances,
    pub min_points: usize,
    pub angular_spread: AngularSpread,
    pub ladder: ConfidenceLadder,
    pub initial_transform: Option<SimilarityTransform>,
    /// Quasi-Newton iterations per optimization phase.
    pub optimizer_iterations: usize,
    /// History length for Anderson mixing of the outer iterates; 0 disables it.
    pub anderson_depth: usize,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            n_modes: 0,
            noise: NoiseSpec::new([1.0, 1.0, 2.0], 30.0, 0.5),
            scale_bounds: [0.9, 1.1],
            shape_bound_sd: 3.0,
            p_outlier: 0.95,
            max_iterations: 100,
            tolerances: Tolerances::default(),
            min_points: 10,
            angular_spread: AngularSpread::CircularSd,
            ladder: ConfidenceLadder::default(),
            initial_transform: None,
            optimizer_iterations: 100,
            anderson_depth: 5,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self, ssm: &StatisticalShapeModel) -> Result<()> {
        self.noise.validate()?;
        if self.n_modes > ssm.mode_count() {
            return Err(invalid(format!(
                "n_modes = {} but the model has {} modes",
                self.n_modes,
                ssm.mode_count()
            )));
        }
        let [lo, hi] = self.scale_bounds;
        if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0 && hi.is_finite()) {
            return Err(invalid(format!("scale bounds must satisfy 0 < lo <= 1 <= hi, got [{lo}, {hi}]")));
        }
        if !(self.shape_bound_sd >= 0.0) {
            return Err(invalid("shape bound must be non-negative"));
        }
        if !(self.p_outlier > 0.0 && self.p_outlier < 1.0) {
            return Err(invalid(format!("p_outlier must lie in (0, 1), got {}", self.p_outlier)));
        }
        if self.max_iterations == 0 || self.optimizer_iterations == 0 {
            return Err(invalid("iteration limits must be positive"));
        }
        if self.min_points == 0 {
            return Err(invalid("min_points must be positive"));
        }
        if let Some(t) = &self.initial_transform {
            if !t.is_proper(1e-9) || !(t.scale > 0.0) {
                return Err(invalid("initial transform must have a proper rotation and positive scale"));
            }
        }
        Ok(())
    }
}

/// State after one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub inliers: usize,
    pub sigma_circ: f64,
    pub cost_start: f64,
    pub cost_end: f64,
    pub optimizer_iterations: usize,
    pub rotation_change_deg: f64,
    pub translation_change_mm: f64,
    pub scale_change: f64,
    pub shape_change_sd: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegistrationResult {
    /// Maps data points into the model frame.
    pub transform: SimilarityTransform,
    pub shape: ShapeParameters,
    pub inliers: Vec<Correspondence>,
    pub outliers: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub e_p: f64,
    pub e_o: f64,
    pub confidence: Confidence,
    pub trace: Vec<IterationRecord>,
}

/// Matches and rejects outliers against the shape `s` under `transform`.
fn correspond(
    data: &[OrientedPoint],
    ssm: &StatisticalShapeModel,
    s: &ShapeParameters,
    transform: &SimilarityTransform,
    config: &RegistrationConfig,
) -> Result<(Vec<Correspondence>, OutlierSummary)> {
    let mesh = ssm.instantiate(s)?;
    let matcher = Matcher::new(&mesh, &config.noise.position()?, &config.noise.kent()?, transform)?;
    let mut corrs = matcher.find_all(data)?;
    let summary = reject_outliers(&mut corrs, config.p_outlier, config.angular_spread)?;
    Ok((corrs, summary))
}

const ENERGY_SLACK: f64 = 1e-5;

/// Truncated matching cost of a correspondence set plus the shape prior;
/// used to reject Anderson steps that make the fit worse.
fn match_energy(corrs: &[Correspondence], s: &ShapeParameters, kent: &crate::noise::KentNoise, cap_position: f64) -> f64 {
    let floor = kent.kappa + kent.beta.abs();
    let cap = 0.5 * cap_position + 2.0 * floor;
    corrs.iter().map(|c| (c.nll + floor).min(cap)).sum::<f64>() + 0.5 * s.0.iter().map(|x| x * x).sum::<f64>()
}

fn length_scale(data: &[OrientedPoint]) -> f64 {
    let n = data.len() as f64;
    let c = data.iter().fold(crate::geometry::Vec3::zeros(), |a, p| a + p.position) / n;
    let l = (data.iter().map(|p| (p.position - c).norm_squared()).sum::<f64>() / n).sqrt();
    if l > 0.0 { l } else { 1.0 }
}

/// Registers oriented data points to the deformable model.
pub fn register(data: &[OrientedPoint], ssm: &StatisticalShapeModel, config: &RegistrationConfig) -> Result<RegistrationResult> {
    config.validate(ssm)?;
    if data.len() < config.min_points {
        return Err(Error::DegenerateData(format!(
            "{} data points, at least {} required",
            data.len(),
            config.min_points
        )));
    }
    let pos = config.noise.position()?;
    let kent = config.noise.kent()?;
    let n_m = config.n_modes;

    let mut transform = config.initial_transform.unwrap_or_default();
    transform.scale = transform.scale.clamp(config.scale_bounds[0], config.scale_bounds[1]);
    let mut s = ShapeParameters::zeros(n_m);
    let mut trace = Vec::new();
    let mut converged = false;

    let mut bounds = Bounds::unbounded(POSE_DIM + n_m);
    bounds.lower[0] = config.scale_bounds[0];
    bounds.upper[0] = config.scale_bounds[1];
    for j in 0..n_m {
        bounds.lower[POSE_DIM + j] = -config.shape_bound_sd;
        bounds.upper[POSE_DIM + j] = config.shape_bound_sd;
    }
    let opts = BfgsOptions {
        max_iterations: config.optimizer_iterations,
        ..BfgsOptions::default()
    };

    let state = anderson::StateMap {
        reference: transform.rotation,
        length: length_scale(data),
    };
    let mut mixer = anderson::Anderson::new(config.anderson_depth);
    let cap_position = chi2_inv(config.p_outlier, 3)?;
    let mut last_energy = f64::INFINITY;
    // Plain iterate to fall back on when a mixed step raises the energy.
    let mut fallback: Option<(SimilarityTransform, ShapeParameters)> = None;

    for iteration in 1..=config.max_iterations {
        let (mut corrs, mut summary) = correspond(data, ssm, &s, &transform, config)?;
        let mut energy = match_energy(&corrs, &s, &kent, cap_position);
        if let Some((t, plain)) = fallback.take() {
            // Matches switching triangles near the optimum jitter the energy slightly.
            if energy > last_energy + ENERGY_SLACK * last_energy.abs() {
                transform = t;
                s = plain;
                (corrs, summary) = correspond(data, ssm, &s, &transform, config)?;
                energy = match_energy(&corrs, &s, &kent, cap_position);
                mixer.reset();
            }
        }
        last_energy = energy;
        let inliers: Vec<Correspondence> = corrs.into_iter().filter(|c| !c.outlier).collect();
        let model = CostModel::new(data, &inliers, ssm, n_m, &pos, &kent, &transform.rotation)?;
        let p0 = model.pack(transform.scale, &transform.translation, &s);
        let hessian = model.gauss_newton_hessian(&p0);
        let min = minimize(|p| Ok(model.cost_and_gradient(p)), &p0, &bounds, &hessian, &opts)?;
        let (next, next_s) = model.unpack(&min.x);

        // The mixed step estimates the remaining distance to the fixed point,
        // so convergence is judged on the step actually taken.
        let g = state.encode(&next, &next_s);
        let f = &g - state.encode(&transform, &s);
        let mixed = mixer.step(g, f).map(|v| {
            let (mut t, mut ms) = state.decode(&v);
            t.scale = t.scale.clamp(config.scale_bounds[0], config.scale_bounds[1]);
            for x in &mut ms.0 {
                *x = x.clamp(-config.shape_bound_sd, config.shape_bound_sd);
            }
            (t, ms)
        });
        let (to, to_s) = mixed.as_ref().map_or((&next, &next_s), |(t, ms)| (t, ms));

        let record = IterationRecord {
            iteration,
            inliers: inliers.len(),
            sigma_circ: summary.sigma_circ,
            cost_start: min.history[0],
            cost_end: min.value,
            optimizer_iterations: min.iterations,
            rotation_change_deg: rotation_angle(&(to.rotation * transform.rotation.transpose())).to_degrees(),
            translation_change_mm: (to.translation - transform.translation).norm(),
            scale_change: (to.scale - transform.scale).abs(),
            shape_change_sd: to_s.0.iter().zip(&s.0).fold(0.0, |m, (a, b)| m.max((a - b).abs())),
            scale: next.scale,
        };
        let tol = &config.tolerances;
        let done = record.rotation_change_deg < tol.rotation_deg
            && record.translation_change_mm < tol.translation_mm
            && record.scale_change < tol.scale
            && record.shape_change_sd < tol.shape_sd;
        trace.push(record);
        match mixed {
            Some((t, ms)) if !done => {
                fallback = Some((next, next_s));
                transform = t;
                s = ms;
            }
            _ => {
                transform = next;
                s = next_s;
            }
        }
        if done {
            converged = true;
            break;
        }
    }

    let (corrs, _) = correspond(data, ssm, &s, &transform, config)?;
    let (inliers, rejected): (Vec<_>, Vec<_>) = corrs.into_iter().partition(|c| !c.outlier);
    let xs: Vec<OrientedPoint> = inliers.iter().map(|c| data[c.data_index]).collect();
    let ys: Vec<OrientedPoint> = inliers.iter().map(|c| c.y).collect();
    let e_p = position_score(&xs, &ys, &transform, &pos)?;
    let e_o = orientation_score(&xs, &ys, &transform, &kent)?;
    let confidence = classify(e_p, e_o, inliers.len(), &config.ladder);

    Ok(RegistrationResult {
        transform,
        shape: s,
        outliers: rejected.iter().map(|c| c.data_index).collect(),
        inliers,
        iterations: trace.len(),
        converged,
        e_p,
        e_o,
        confidence,
        trace,
    })
}
