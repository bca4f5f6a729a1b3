//! PCA statistical shape models over meshes in vertex correspondence.
//!
//! The covariance uses the `1/n_s` normalization and is diagonalized through
//! the `n_s x n_s` Gram matrix of the mean-subtracted shapes, so the cost
//! grows with the number of shapes rather than the vertex count.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3xX, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Vec3;
use crate::mesh::{BarycentricLocation, Topology, TriangleMesh};

pub const SSM_SCHEMA: &str = "ssmreg.ssm/1";

/// Meshes with identical topology; vertex `i` corresponds across shapes.
#[derive(Debug, Clone)]
pub struct ShapeCorpus {
    shapes: Vec<TriangleMesh>,
}

impl ShapeCorpus {
    pub fn new(shapes: Vec<TriangleMesh>) -> Result<Self> {
        if shapes.len() < 2 {
            return Err(invalid(format!("a shape corpus needs at least 2 shapes, got {}", shapes.len())));
        }
        for (i, s) in shapes.iter().enumerate().skip(1) {
            if !s.same_topology(&shapes[0]) {
                return Err(Error::TopologyMismatch(format!("shape {i} does not match the topology of shape 0")));
            }
        }
        Ok(Self { shapes })
    }

    pub fn shapes(&self) -> &[TriangleMesh] {
        &self.shapes
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.shapes[0].vertex_count()
    }

    /// Corpus without shape `index` (leave-one-out).
    pub fn without(&self, index: usize) -> Result<ShapeCorpus> {
        if index >= self.shapes.len() {
            return Err(invalid(format!("shape index {index} out of range")));
        }
        let shapes = self
            .shapes
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != index)
            .map(|(_, s)| s.clone())
            .collect();
        ShapeCorpus::new(shapes)
    }
}

/// Shape parameters in units of standard deviation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShapeParameters(pub Vec<f64>);

impl ShapeParameters {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Mean shape, orthonormal modes, descending eigenvalues and weighted modes
/// `w_j = sqrt(lambda_j) m_j`. Only modes with non-zero variance are kept.
#[derive(Debug, Clone)]
pub struct StatisticalShapeModel {
    mean: TriangleMesh,
    eigenvalues: Vec<f64>,
    spectrum: Vec<f64>,
    modes: DMatrix<f64>,
    weighted: DMatrix<f64>,
}

fn stack(mesh: &TriangleMesh) -> DVector<f64> {
    DVector::from_iterator(3 * mesh.vertex_count(), mesh.vertices().iter().flat_map(|v| [v.x, v.y, v.z]))
}

fn unstack(v: &DVector<f64>) -> Vec<Vec3> {
    v.as_slice().chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

/// Builds the model from a corpus.
pub fn build_ssm(corpus: &ShapeCorpus) -> Result<StatisticalShapeModel> {
    let ns = corpus.len();
    let dim = 3 * corpus.vertex_count();
    let mut data = DMatrix::<f64>::zeros(dim, ns);
    for (j, s) in corpus.shapes().iter().enumerate() {
        data.set_column(j, &stack(s));
    }
    let magnitude = data.amax();
    let mean = data.column_mean();
    for mut c in data.column_iter_mut() {
        c -= &mean;
    }

    let gram = (data.transpose() * &data) / ns as f64;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..ns).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    // Mean subtraction leaves at most n_s - 1 non-zero eigenvalues.
    let spectrum: Vec<f64> = order.iter().take(ns - 1).map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = spectrum.iter().sum();
    // Identical shapes still leave rounding residue of order eps * |x| after
    // centring; treat anything at that level as zero.
    let cutoff = (1e-12 * total).max(dim as f64 * (1e-12 * magnitude).powi(2));
    let kept: Vec<usize> = order
        .iter()
        .take(ns - 1)
        .copied()
        .filter(|&i| total > 0.0 && eig.eigenvalues[i] > cutoff)
        .collect();
    let spectrum: Vec<f64> = spectrum.into_iter().map(|l| if l > cutoff { l } else { 0.0 }).collect();

    let mut modes = DMatrix::<f64>::zeros(dim, kept.len());
    let mut eigenvalues = Vec::with_capacity(kept.len());
    for (j, &i) in kept.iter().enumerate() {
        let lambda = eig.eigenvalues[i];
        let m = &data * eig.eigenvectors.column(i) / (ns as f64 * lambda).sqrt();
        modes.set_column(j, &m);
        eigenvalues.push(lambda);
    }
    reorthonormalize(&mut modes);
    for mut c in modes.column_iter_mut() {
        let mut pivot = 0;
        for (k, v) in c.iter().enumerate() {
            if v.abs() > c[pivot].abs() {
                pivot = k;
            }
        }
        if c[pivot] < 0.0 {
            c.neg_mut();
        }
    }
    let weighted = &modes * DMatrix::from_diagonal(&DVector::from_iterator(
        eigenvalues.len(),
        eigenvalues.iter().map(|l| l.sqrt()),
    ));

    let topology = corpus.shapes()[0].topology().clone();
    let mean = TriangleMesh::new(unstack(&mean), topology)?;
    Ok(StatisticalShapeModel {
        mean,
        eigenvalues,
        spectrum,
        modes,
        weighted,
    })
}

// Two passes of modified Gram–Schmidt, in column order.
fn reorthonormalize(m: &mut DMatrix<f64>) {
    for _ in 0..2 {
        for j in 0..m.ncols() {
            for k in 0..j {
                let d = m.column(k).dot(&m.column(j));
                let ck = m.column(k).clone_owned();
                m.column_mut(j).axpy(-d, &ck, 1.0);
            }
            let n = m.column(j).norm();
            m.column_mut(j).unscale_mut(n);
        }
    }
}

impl StatisticalShapeModel {
    pub fn mean(&self) -> &TriangleMesh {
        &self.mean
    }

    pub fn topology(&self) -> &Topology {
        self.mean.topology()
    }

    pub fn vertex_count(&self) -> usize {
        self.mean.vertex_count()
    }

    /// Eigenvalues of the retained modes (mm^2), descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// All `n_s - 1` covariance eigenvalues, including zeros that were dropped.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn mode_count(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Orthonormal modes as columns of a `3 n_v x n_modes` matrix.
    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn weighted_modes(&self) -> &DMatrix<f64> {
        &self.weighted
    }

    fn check_count(&self, n: usize) -> Result<()> {
        if n > self.mode_count() {
            return Err(invalid(format!("{n} modes requested, model has {}", self.mode_count())));
        }
        Ok(())
    }

    /// Vertices `mean + sum_j s_j w_j` for the first `s.len()` modes.
    pub fn deformed_vertices(&self, s: &ShapeParameters) -> Result<Vec<Vec3>> {
        self.check_count(s.len())?;
        let mut v = stack(&self.mean);
        for (j, &sj) in s.0.iter().enumerate() {
            if sj != 0.0 {
                v.axpy(sj, &self.weighted.column(j), 1.0);
            }
        }
        Ok(unstack(&v))
    }

    /// Deformed mesh with recomputed normals.
    pub fn instantiate(&self, s: &ShapeParameters) -> Result<TriangleMesh> {
        if s.0.iter().all(|&v| v == 0.0) {
            self.check_count(s.len())?;
            return Ok(self.mean.clone());
        }
        self.mean.with_vertices(self.deformed_vertices(s)?)
    }

    /// `s_j = m_j^T (V - mean) / sqrt(lambda_j)` for the first `n_modes` modes.
    pub fn project(&self, shape: &TriangleMesh, n_modes: usize) -> Result<ShapeParameters> {
        self.check_count(n_modes)?;
        if !shape.same_topology(&self.mean) {
            return Err(Error::TopologyMismatch("shape does not match the model topology".into()));
        }
        let d = stack(shape) - stack(&self.mean);
        Ok(ShapeParameters(
            (0..n_modes)
                .map(|j| {
                    let l = self.eigenvalues[j];
                    if l > 0.0 {
                        self.modes.column(j).dot(&d) / l.sqrt()
                    } else {
                        0.0
                    }
                })
                .collect(),
        ))
    }

    /// Mean-shape position of a surface location.
    pub fn mean_point(&self, loc: &BarycentricLocation) -> Vec3 {
        self.mean.point_at(loc).position
    }

    /// `3 x n_modes` Jacobian of a surface location's position w.r.t. `s`:
    /// barycentric blend of the weighted-mode rows of the triangle's corners.
    pub fn location_basis(&self, loc: &BarycentricLocation, n_modes: usize) -> Result<Matrix3xX<f64>> {
        self.check_count(n_modes)?;
        let tri = self.mean.triangles()[loc.triangle];
        let mut b = Matrix3xX::<f64>::zeros(n_modes);
        for (corner, &mu) in tri.iter().zip(&loc.mu) {
            for j in 0..n_modes {
                for k in 0..3 {
                    b[(k, j)] += mu * self.weighted[(3 * corner + k, j)];
                }
            }
        }
        Ok(b)
    }

    /// Barycentric combination of the three deformed corner vertices.
    pub fn deform_matched_point(&self, loc: &BarycentricLocation, s: &ShapeParameters) -> Result<Vec3> {
        let b = self.location_basis(loc, s.len())?;
        Ok(self.mean_point(loc) + b * DVector::from_column_slice(&s.0))
    }

    pub fn to_file(&self) -> SsmFile {
        SsmFile {
            schema: SSM_SCHEMA.to_string(),
            vertex_count: self.vertex_count(),
            triangles: self.mean.triangles().to_vec(),
            mean: self.mean.vertices().iter().map(|v| [v.x, v.y, v.z]).collect(),
            eigenvalues: self.eigenvalues.clone(),
            spectrum: self.spectrum.clone(),
            modes: self.modes.column_iter().map(|c| c.iter().copied().collect()).collect(),
        }
    }

    pub fn from_file(file: SsmFile) -> Result<Self> {
        if file.schema != SSM_SCHEMA {
            return Err(invalid(format!("unsupported SSM schema '{}'", file.schema)));
        }
        if file.mean.len() != file.vertex_count || file.modes.len() != file.eigenvalues.len() {
            return Err(invalid("SSM file is inconsistent"));
        }
        let dim = 3 * file.vertex_count;
        if file.modes.iter().any(|m| m.len() != dim) {
            return Err(invalid("SSM mode length does not match vertex count"));
        }
        if file.eigenvalues.iter().any(|l| !(*l > 0.0)) {
            return Err(invalid("SSM eigenvalues must be positive"));
        }
        let mean = TriangleMesh::new(
            file.mean.iter().map(|v| Vec3::new(v[0], v[1], v[2])).collect(),
            file.triangles,
        )?;
        let n = file.eigenvalues.len();
        let modes = DMatrix::from_iterator(dim, n, file.modes.into_iter().flatten());
        let weighted = &modes * DMatrix::from_diagonal(&DVector::from_iterator(n, file.eigenvalues.iter().map(|l| l.sqrt())));
        Ok(Self {
            mean,
            eigenvalues: file.eigenvalues,
            spectrum: file.spectrum,
            modes,
            weighted,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk JSON form of a shape model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SsmFile {
    pub schema: String,
    pub vertex_count: usize,
    pub triangles: Vec<[usize; 3]>,
    pub mean: Vec<[f64; 3]>,
    pub eigenvalues: Vec<f64>,
    pub spectrum: Vec<f64>,
    pub modes: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::bumpy_mesh;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_corpus(n: usize, seed: u64) -> ShapeCorpus {
        let base = bumpy_mesh(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = (0..n)
            .map(|_| {
                let v = base
                    .vertices()
                    .iter()
                    .map(|p| p + Vec3::from_fn(|_, _| rng.random_range(-0.4..0.4)))
                    .collect();
                base.with_vertices(v).unwrap()
            })
            .collect();
        ShapeCorpus::new(shapes).unwrap()
    }

    fn max_vertex_error(a: &TriangleMesh, b: &TriangleMesh) -> f64 {
        a.vertices().iter().zip(b.vertices()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn identical_shapes_have_no_modes() {
        let m = bumpy_mesh(2);
        // Three copies: the mean is no longer exact in floating point.
        let ssm = build_ssm(&ShapeCorpus::new(vec![m.clone(), m.clone(), m.clone()]).unwrap()).unwrap();
        assert_eq!(ssm.mode_count(), 0);
        assert_eq!(ssm.spectrum(), &[0.0, 0.0]);
        assert!(max_vertex_error(ssm.mean(), &m) < 1e-12);
    }

    #[test]
    fn two_sample_covariance() {
        let m = bumpy_mesh(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d: Vec<Vec3> = (0..m.vertex_count()).map(|_| Vec3::from_fn(|_, _| rng.random_range(-0.3..0.3))).collect();
        let plus = m.with_vertices(m.vertices().iter().zip(&d).map(|(v, d)| v + d).collect()).unwrap();
        let minus = m.with_vertices(m.vertices().iter().zip(&d).map(|(v, d)| v - d).collect()).unwrap();
        let ssm = build_ssm(&ShapeCorpus::new(vec![plus, minus]).unwrap()).unwrap();
        let d2: f64 = d.iter().map(|v| v.norm_squared()).sum();
        assert_eq!(ssm.mode_count(), 1);
        // (1/2)(d d^T + d d^T) has eigenvalue |d|^2 along d.
        assert_relative_eq!(ssm.eigenvalues()[0], d2, max_relative = 1e-10);
        let dn = d.iter().flat_map(|v| [v.x, v.y, v.z]).collect::<Vec<_>>();
        let dn = DVector::from_vec(dn).normalize();
        assert_relative_eq!(ssm.modes().column(0).dot(&dn).abs(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn mismatched_topology_rejected() {
        let a = bumpy_mesh(1);
        let b = crate::mesh::primitives::grid(3, 1.0);
        assert!(matches!(ShapeCorpus::new(vec![a.clone(), b]), Err(Error::TopologyMismatch(_))));
        assert!(ShapeCorpus::new(vec![a]).is_err());
    }

    #[test]
    fn modes_orthonormal_sorted_and_capture_variance() {
        let corpus = random_corpus(10, 4);
        let ssm = build_ssm(&corpus).unwrap();
        assert_eq!(ssm.mode_count(), 9);
        let g = ssm.modes().transpose() * ssm.modes();
        assert!((g - DMatrix::identity(9, 9)).abs().max() < 1e-8);
        assert!(ssm.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
        let mean = stack(ssm.mean());
        let trace: f64 = corpus.shapes().iter().map(|s| (stack(s) - &mean).norm_squared()).sum::<f64>() / 10.0;
        let captured: f64 = ssm.eigenvalues().iter().sum();
        assert_relative_eq!(captured, trace, max_relative = 1e-6);
        for c in ssm.modes().column_iter() {
            let pivot = c.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn training_shapes_round_trip() {
        let corpus = random_corpus(10, 5);
        let ssm = build_ssm(&corpus).unwrap();
        for s in corpus.shapes() {
            let p = ssm.project(s, ssm.mode_count()).unwrap();
            let rec = ssm.instantiate(&p).unwrap();
            assert!(max_vertex_error(&rec, s) < 1e-6);
        }
    }

    #[test]
    fn instantiate_basics() {
        let ssm = build_ssm(&random_corpus(6, 6)).unwrap();
        let zero = ssm.instantiate(&ShapeParameters::zeros(3)).unwrap();
        assert_eq!(zero.vertices(), ssm.mean().vertices());
        let mut s = ShapeParameters::zeros(ssm.mode_count());
        s.0[0] = 1.0;
        let one = ssm.instantiate(&s).unwrap();
        let disp: f64 = one
            .vertices()
            .iter()
            .zip(ssm.mean().vertices())
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt();
        assert_relative_eq!(disp, ssm.eigenvalues()[0].sqrt(), max_relative = 1e-9);
        assert!(ssm.instantiate(&ShapeParameters::zeros(ssm.mode_count() + 1)).is_err());
        assert!(ssm.project(ssm.mean(), ssm.mode_count() + 1).is_err());
        let p = ssm.project(ssm.mean(), ssm.mode_count()).unwrap();
        assert!(p.max_abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn project_inverts_instantiate(vals in proptest::collection::vec(-3.0..3.0f64, 5)) {
            let ssm = build_ssm(&random_corpus(6, 7)).unwrap();
            let s = ShapeParameters(vals);
            let back = ssm.project(&ssm.instantiate(&s).unwrap(), 5).unwrap();
            for (a, b) in back.0.iter().zip(&s.0) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn deform_matched_point_agrees_and_is_linear(
            vals in proptest::collection::vec(-3.0..3.0f64, 4),
            tri in 0usize..288,
            u in 0.0..1.0f64,
            v in 0.0..1.0f64,
            alpha in -2.0..2.0f64,
        ) {
            let ssm = build_ssm(&random_corpus(6, 8)).unwrap();
            let (u, v) = if u + v > 1.0 { (1.0 - u, 1.0 - v) } else { (u, v) };
            let loc = BarycentricLocation { triangle: tri, mu: [1.0 - u - v, u, v] };
            let s = ShapeParameters(vals);
            let direct = ssm.deform_matched_point(&loc, &s).unwrap();
            let via_mesh = ssm.instantiate(&s).unwrap().point_at(&loc).position;
            prop_assert!((direct - via_mesh).norm() < 1e-12);
            let base = ssm.mean_point(&loc);
            let scaled = ShapeParameters(s.0.iter().map(|x| x * alpha).collect());
            let lhs = ssm.deform_matched_point(&loc, &scaled).unwrap() - base;
            prop_assert!((lhs - (direct - base) * alpha).norm() < 1e-10);
        }
    }

    #[test]
    fn deform_matched_point_cases() {
        let ssm = build_ssm(&random_corpus(6, 9)).unwrap();
        let loc = BarycentricLocation { triangle: 5, mu: [1.0, 0.0, 0.0] };
        let zero = ShapeParameters::zeros(3);
        assert_eq!(ssm.deform_matched_point(&loc, &zero).unwrap(), ssm.mean().point_at(&loc).position);
        let s = ShapeParameters(vec![0.5, -1.0, 2.0]);
        let v = ssm.deformed_vertices(&s).unwrap()[ssm.mean().triangles()[5][0]];
        assert_relative_eq!(ssm.deform_matched_point(&loc, &s).unwrap(), v, epsilon = 1e-12);
    }

    #[test]
    fn json_round_trip_is_stable() {
        let ssm = build_ssm(&random_corpus(5, 10)).unwrap();
        let text = ssm.to_json().unwrap();
        let back = StatisticalShapeModel::from_json(&text).unwrap();
        assert_eq!(back.to_json().unwrap(), text);
        assert_eq!(back.eigenvalues(), ssm.eigenvalues());
        let bad = text.replace(SSM_SCHEMA, "other/0");
        assert!(StatisticalShapeModel::from_json(&bad).is_err());
    }
}
