//! Leave-one-out registration trials.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{generate_corpus, CorpusSpec};
use super::offset::{apply_offset, OffsetRanges};
use super::visibility::sample_visible_points;
use crate::confidence::ConfidenceTier;
use crate::error::{invalid, Result};
use crate::geometry::Vec3;
use crate::mesh::{hausdorff_distance, OrientedPoint, TriangleMesh};
use crate::noise::{sample_noise, KentNoise, NoiseSpec, PositionNoise};
use crate::registration::{register, RegistrationConfig, RegistrationResult};
use crate::ssm::{build_ssm, StatisticalShapeModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSpec {
    pub n_points: usize,
    pub offsets_per_shape: usize,
    pub offset: OffsetRanges,
    /// Noise added to the sampled points. A zero SD disables that component.
    pub generator_noise: NoiseSpec,
    /// Mode counts registered for every (shape, offset) pair.
    pub modes: Vec<usize>,
    pub success_threshold_mm: f64,
    /// Position of the viewpoint along the tube (0 = opening, 1 = far end).
    pub viewpoint_u: f64,
    /// Left-out shapes to evaluate; all shapes when absent.
    pub shapes: Option<Vec<usize>>,
    /// Registration settings; `n_modes` is overridden per trial.
    pub registration: RegistrationConfig,
}

impl Default for TrialSpec {
    fn default() -> Self {
        Self {
            n_points: 3000,
            offsets_per_shape: 2,
            offset: OffsetRanges::default(),
            generator_noise: NoiseSpec::new([0.5, 0.5, 0.75], 10.0, 0.5),
            modes: vec![0, 10, 20, 30, 40, 50],
            success_threshold_mm: 1.0,
            viewpoint_u: 0.08,
            shapes: None,
            registration: RegistrationConfig::default(),
        }
    }
}

impl TrialSpec {
    pub fn validate(&self, corpus: &CorpusSpec) -> Result<()> {
        corpus.validate()?;
        self.offset.validate()?;
        if self.n_points == 0 || self.offsets_per_shape == 0 || self.modes.is_empty() {
            return Err(invalid("n_points, offsets_per_shape and modes must be non-empty"));
        }
        let g = &self.generator_noise;
        if g.position_sd_mm.iter().any(|s| !(*s >= 0.0)) || !(g.orientation_sd_deg >= 0.0) || !(0.0..=1.0).contains(&g.eccentricity) {
            return Err(invalid("generator noise SDs must be non-negative"));
        }
        let max_modes = corpus.n_shapes.saturating_sub(2);
        if let Some(&m) = self.modes.iter().find(|&&m| m > max_modes) {
            return Err(invalid(format!(
                "{m} modes requested; leave-one-out models of {} shapes have at most {max_modes}",
                corpus.n_shapes
            )));
        }
        if let Some(s) = &self.shapes {
            if let Some(&bad) = s.iter().find(|&&i| i >= corpus.n_shapes) {
                return Err(invalid(format!("left-out shape {bad} out of range")));
            }
        }
        if !(self.success_threshold_mm > 0.0) || !(0.0..1.0).contains(&self.viewpoint_u) {
            return Err(invalid("success threshold must be positive and viewpoint_u in [0, 1)"));
        }
        let mut reg = self.registration.clone();
        reg.n_modes = 0;
        reg.noise.validate()?;
        Ok(())
    }

    fn left_out(&self, n_shapes: usize) -> Vec<usize> {
        self.shapes.clone().unwrap_or_else(|| (0..n_shapes).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub seed: u64,
    pub corpus: CorpusSpec,
    pub trial: TrialSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            corpus: CorpusSpec::default(),
            trial: TrialSpec::default(),
        }
    }
}

/// One row of the per-trial CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub shape: usize,
    pub offset: usize,
    pub modes: usize,
    #[serde(rename = "tRE_mm")]
    pub tre_mm: f64,
    pub shape_err_mm: f64,
    #[serde(rename = "E_p")]
    pub e_p: f64,
    #[serde(rename = "E_o")]
    pub e_o: f64,
    pub tier: ConfidenceTier,
    pub success: bool,
    pub iterations: usize,
    pub seconds: Option<f64>,
}

pub const TRIAL_COLUMNS: [&str; 11] = [
    "shape", "offset", "modes", "tRE_mm", "shape_err_mm", "E_p", "E_o", "tier", "success", "iterations", "seconds",
];

/// Stable 64-bit mix (splitmix64 finalizer).
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the data for one (shape, offset) pair. Mode counts share the data.
pub fn trial_seed(master: u64, shape: usize, offset: usize) -> u64 {
    mix(mix(mix(master) ^ shape as u64) ^ (offset as u64).wrapping_mul(0x100_0000_01b3))
}

/// Corrupts points with the generator noise; zero SDs switch components off.
pub fn corrupt(points: &[OrientedPoint], noise: &NoiseSpec, seed: u64) -> Result<Vec<OrientedPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = PositionNoise::from_sds(noise.position_sd_mm);
    let kent = if noise.orientation_sd_deg > 0.0 {
        KentNoise::from_sd(noise.orientation_sd_deg, noise.eccentricity)?
    } else {
        // Infinite concentration: no orientation noise.
        KentNoise { kappa: f64::INFINITY, beta: 0.0 }
    };
    points.iter().map(|p| sample_noise(&mut rng, &pos, &kent, p)).collect()
}

/// Inputs for the trials of one left-out shape.
pub struct TrialInputs<'a> {
    pub ssm: &'a StatisticalShapeModel,
    pub truth: &'a TriangleMesh,
    pub viewpoint: Vec3,
}

/// Outcome of registering one (shape, offset) pair at one mode count.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub registration: Option<RegistrationResult>,
    /// Registered data points (data frame).
    pub data: Vec<OrientedPoint>,
}

/// Samples, corrupts and offsets data from `truth`, then registers at every
/// mode count in `spec.modes`.
pub fn run_trial(
    spec: &TrialSpec,
    inputs: &TrialInputs,
    shape: usize,
    offset: usize,
    seed: u64,
    timing: bool,
) -> Result<Vec<TrialOutcome>> {
    let clean = sample_visible_points(inputs.truth, &inputs.viewpoint, spec.n_points, mix(seed ^ 1))?;
    let (moved, truth_pose) = apply_offset(&clean, &spec.offset, mix(seed ^ 2));
    let data = corrupt(&moved, &spec.generator_noise, mix(seed ^ 3))?;
    let truth_in_data = inputs.truth.transformed(&truth_pose);

    let mut out = Vec::with_capacity(spec.modes.len());
    for &modes in &spec.modes {
        let mut config = spec.registration.clone();
        config.n_modes = modes;
        // Only read the clock on request; wasm32-unknown-unknown has none.
        let start = timing.then(Instant::now);
        let result = register(&data, inputs.ssm, &config);
        let seconds = start.map(|s| s.elapsed().as_secs_f64());
        let outcome = match result {
            Ok(reg) => {
                let estimate = inputs.ssm.instantiate(&reg.shape)?;
                let tre = hausdorff_distance(&estimate.transformed(&reg.transform.inverse()), &truth_in_data)?;
                let shape_err = hausdorff_distance(&estimate, inputs.truth)?;
                TrialOutcome {
                    record: TrialRecord {
                        shape,
                        offset,
                        modes,
                        tre_mm: tre,
                        shape_err_mm: shape_err,
                        e_p: reg.e_p,
                        e_o: reg.e_o,
                        tier: reg.confidence.tier,
                        success: tre < spec.success_threshold_mm,
                        iterations: reg.iterations,
                        seconds,
                    },
                    registration: Some(reg),
                    data: data.clone(),
                }
            }
            Err(_) => TrialOutcome {
                record: TrialRecord {
                    shape,
                    offset,
                    modes,
                    tre_mm: f64::NAN,
                    shape_err_mm: f64::NAN,
                    e_p: f64::NAN,
                    e_o: f64::NAN,
                    tier: ConfidenceTier::NoConfidence,
                    success: false,
                    iterations: 0,
                    seconds,
                },
                registration: None,
                data: data.clone(),
            },
        };
        out.push(outcome);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Record wall time per registration (makes the CSV non-reproducible).
    pub timing: bool,
}

/// Full leave-one-out experiment; rows are ordered by shape, offset, modes.
pub fn run_experiment(spec: &ExperimentSpec, opts: RunOptions) -> Result<Vec<TrialRecord>> {
    spec.trial.validate(&spec.corpus)?;
    let (base, corpus) = generate_corpus(&spec.corpus)?;
    let shapes = spec.trial.left_out(corpus.len());
    let per_shape = |&shape: &usize| -> Result<Vec<TrialRecord>> {
        let ssm = build_ssm(&corpus.without(shape)?)?;
        let truth = &corpus.shapes()[shape];
        let inputs = TrialInputs {
            ssm: &ssm,
            truth,
            viewpoint: base.ring_centroid(truth, spec.trial.viewpoint_u),
        };
        let mut rows = Vec::new();
        for offset in 0..spec.trial.offsets_per_shape {
            let seed = trial_seed(spec.seed, shape, offset);
            let trials = run_trial(&spec.trial, &inputs, shape, offset, seed, opts.timing)?;
            rows.extend(trials.into_iter().map(|t| t.record));
        }
        Ok(rows)
    };
    #[cfg(feature = "parallel")]
    let nested: Vec<Result<Vec<TrialRecord>>> = {
        use rayon::prelude::*;
        shapes.par_iter().map(per_shape).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let nested: Vec<Result<Vec<TrialRecord>>> = shapes.iter().map(per_shape).collect();
    let mut rows = Vec::new();
    for r in nested {
        rows.extend(r?);
    }
    Ok(rows)
}
