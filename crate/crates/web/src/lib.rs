//! wasm-bindgen bindings for the browser demo in `www/`.
//!
//! A small synthetic corpus is generated in the browser; the model is built
//! without the first shape, which then serves as the registration target.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ssmreg::confidence::{chi2_inv, thresholds, Thresholds};
use ssmreg::sim::{generate_corpus, run_trial, BaseCavity, CorpusSpec, TrialInputs, TrialSpec};
use ssmreg::{build_ssm, ShapeCorpus, ShapeParameters, StatisticalShapeModel};

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

const HELD_OUT: usize = 0;

#[wasm_bindgen]
pub struct Demo {
    base: BaseCavity,
    corpus: ShapeCorpus,
    ssm: StatisticalShapeModel,
}

#[derive(Serialize)]
struct RegistrationView {
    tier: String,
    tre_mm: f64,
    shape_err_mm: f64,
    iterations: usize,
    converged: bool,
    inliers: usize,
    e_p: f64,
    e_o: f64,
    thresholds: Vec<Thresholds>,
    /// Data points mapped into the model frame, flattened xyz.
    points: Vec<f64>,
    outliers: Vec<usize>,
    /// Fitted shape vertices (model frame), flattened xyz.
    fitted: Vec<f64>,
    /// Held-out shape vertices (model frame), flattened xyz.
    truth: Vec<f64>,
}

fn flatten<'a>(it: impl Iterator<Item = &'a ssmreg::Vec3>) -> Vec<f64> {
    it.flat_map(|v| [v.x, v.y, v.z]).collect()
}

#[wasm_bindgen]
impl Demo {
    /// Generates `n_shapes` cavities and builds the model from all but the first.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, n_shapes: usize) -> Result<Demo, JsError> {
        let spec = CorpusSpec {
            seed: seed as u64,
            n_shapes,
            rings: 32,
            segments: 32,
            cap_rings: 3,
            ..CorpusSpec::default()
        };
        let (base, corpus) = generate_corpus(&spec).map_err(js)?;
        let ssm = build_ssm(&corpus.without(HELD_OUT).map_err(js)?).map_err(js)?;
        Ok(Demo { base, corpus, ssm })
    }

    #[wasm_bindgen(js_name = modeCount)]
    pub fn mode_count(&self) -> usize {
        self.ssm.mode_count()
    }

    /// Standard deviations of the modes: norms over the stacked vertex vector (mm).
    #[wasm_bindgen(js_name = modeSds)]
    pub fn mode_sds(&self) -> Vec<f64> {
        self.ssm.eigenvalues().iter().map(|l| l.sqrt()).collect()
    }

    /// Triangle corner indices, flattened.
    pub fn triangles(&self) -> Vec<u32> {
        self.ssm.mean().triangles().iter().flatten().map(|&i| i as u32).collect()
    }

    /// Vertices of the model instance for shape parameters `s` (in SDs), flattened xyz.
    pub fn shape(&self, s: &[f64]) -> Result<Vec<f64>, JsError> {
        let mesh = self.ssm.instantiate(&ShapeParameters(s.to_vec())).map_err(js)?;
        Ok(flatten(mesh.vertices().iter()))
    }

    /// Samples the held-out shape as seen from its opening, adds noise and a
    /// random pose offset, registers with `n_modes` modes and returns a JSON
    /// report.
    pub fn register(&self, n_modes: usize, n_points: usize, seed: u32) -> Result<String, JsError> {
        let mut spec = TrialSpec {
            n_points,
            offsets_per_shape: 1,
            modes: vec![n_modes],
            ..TrialSpec::default()
        };
        spec.registration.n_modes = n_modes;
        let truth = &self.corpus.shapes()[HELD_OUT];
        let inputs = TrialInputs {
            ssm: &self.ssm,
            truth,
            viewpoint: self.base.ring_centroid(truth, spec.viewpoint_u),
        };
        let out = run_trial(&spec, &inputs, HELD_OUT, 0, seed as u64, false)
            .map_err(js)?
            .pop()
            .ok_or_else(|| js("no trial output"))?;
        let reg = out.registration.ok_or_else(|| js("registration failed"))?;
        let fitted = self.ssm.instantiate(&reg.shape).map_err(js)?;
        let points = flatten(out.data.iter().map(|p| reg.transform.apply_point(&p.position)).collect::<Vec<_>>().iter());
        let view = RegistrationView {
            tier: reg.confidence.tier.to_string(),
            tre_mm: out.record.tre_mm,
            shape_err_mm: out.record.shape_err_mm,
            iterations: reg.iterations,
            converged: reg.converged,
            inliers: reg.inliers.len(),
            e_p: reg.e_p,
            e_o: reg.e_o,
            thresholds: thresholds(&spec.registration.ladder, reg.inliers.len()).map_err(js)?,
            points,
            outliers: reg.outliers.clone(),
            fitted: flatten(fitted.vertices().iter()),
            truth: flatten(truth.vertices().iter()),
        };
        serde_json::to_string(&view).map_err(js)
    }
}

/// `x` with `P(chi2_k <= x) = p`.
#[wasm_bindgen(js_name = chi2Inv)]
pub fn chi2_inv_js(p: f64, k: usize) -> Result<f64, JsError> {
    chi2_inv(p, k).map_err(js)
}
