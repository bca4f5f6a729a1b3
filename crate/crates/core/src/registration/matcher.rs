use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat3, SimilarityTransform, Vec3};
use crate::mesh::triangle::{closest_point_barycentric, interpolate};
use crate::mesh::{BarycentricLocation, OrientedPoint, TriangleBvh, TriangleMesh};
use crate::noise::{tangent_frame, KentNoise, Mahalanobis, PositionNoise};

/// A data point paired with its most likely model point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub data_index: usize,
    /// Matched point on the current deformed model (model frame).
    pub y: OrientedPoint,
    pub loc: BarycentricLocation,
    /// Match negative log-likelihood (constant terms dropped).
    pub nll: f64,
    pub outlier: bool,
    pub sq_mahalanobis: f64,
    /// Angle between the matched normal and the transformed data normal (radians).
    pub angular_error: f64,
}

/// Most-likely-point search against one deformed mesh under a fixed transform.
///
/// The combined covariance is uniform across points, so the mesh is whitened
/// once with `W = L^-1` (`Sigma = L L^T`). Euclidean closest points on the
/// whitened triangles are then Mahalanobis-closest points on the originals.
pub struct Matcher<'a> {
    mesh: &'a TriangleMesh,
    whitening: Mat3,
    bvh: TriangleBvh,
    kent: KentNoise,
    transform: SimilarityTransform,
}

struct Query {
    q: Vec3,
    rx_n: Vec3,
    rg1: Vec3,
    rg2: Vec3,
}

struct Candidate {
    mu: [f64; 3],
    d2: f64,
    normal: Vec3,
}

impl<'a> Matcher<'a> {
    pub fn new(mesh: &'a TriangleMesh, pos: &PositionNoise, kent: &KentNoise, transform: &SimilarityTransform) -> Result<Self> {
        if mesh.triangle_count() == 0 {
            return Err(Error::EmptyMesh);
        }
        let metric = Mahalanobis::new(&pos.combined(&transform.rotation))?;
        let whitening = *metric.whitening();
        let white: Vec<Vec3> = mesh.vertices().iter().map(|v| whitening * v).collect();
        Ok(Self {
            mesh,
            whitening,
            bvh: TriangleBvh::build(&white, mesh.triangles()),
            kent: *kent,
            transform: *transform,
        })
    }

    fn query(&self, x: &OrientedPoint) -> Result<Query> {
        let (g1, g2) = tangent_frame(&x.normal)?;
        let r = &self.transform.rotation;
        Ok(Query {
            q: self.whitening * self.transform.apply_point(&x.position),
            rx_n: r * x.normal,
            rg1: r * g1,
            rg2: r * g2,
        })
    }

    fn evaluate(&self, query: &Query, tri: usize) -> (f64, Candidate) {
        let [a, b, c] = self.bvh.triangle(tri);
        let mu = closest_point_barycentric(&query.q, a, b, c);
        let d2 = (query.q - interpolate(&mu, a, b, c)).norm_squared();
        let normal = self.mesh.interpolated_normal(&BarycentricLocation { triangle: tri, mu });
        let c1 = query.rg1.dot(&normal);
        let c2 = query.rg2.dot(&normal);
        let orient = -self.kent.kappa * query.rx_n.dot(&normal) - self.kent.beta * (c1 * c1 - c2 * c2);
        (0.5 * d2 + orient, Candidate { mu, d2, normal })
    }

    fn finish(&self, index: usize, query: &Query, tri: usize, nll: f64, cand: Candidate) -> Correspondence {
        let loc = BarycentricLocation { triangle: tri, mu: cand.mu };
        let [a, b, c] = self.mesh.corners(tri);
        Correspondence {
            data_index: index,
            y: OrientedPoint {
                position: interpolate(&cand.mu, &a, &b, &c),
                normal: cand.normal,
            },
            loc,
            nll,
            outlier: false,
            sq_mahalanobis: cand.d2,
            angular_error: query.rx_n.dot(&cand.normal).clamp(-1.0, 1.0).acos(),
        }
    }

    /// Most likely match for one data point.
    pub fn find(&self, index: usize, x: &OrientedPoint) -> Result<Correspondence> {
        let query = self.query(x)?;
        // The orientation term is bounded below by -kappa when 2 beta <= kappa.
        let kappa = self.kent.kappa;
        let (tri, nll, cand) = self
            .bvh
            .search(&query.q, |d2| 0.5 * d2 - kappa, |tri| self.evaluate(&query, tri))
            .ok_or(Error::EmptyMesh)?;
        Ok(self.finish(index, &query, tri, nll, cand))
    }

    /// Linear scan over every triangle; reference for [`Self::find`].
    pub fn find_brute_force(&self, index: usize, x: &OrientedPoint) -> Result<Correspondence> {
        let query = self.query(x)?;
        let mut best: Option<(usize, f64, Candidate)> = None;
        for tri in 0..self.bvh.len() {
            let (cost, cand) = self.evaluate(&query, tri);
            if best.as_ref().is_none_or(|(_, c, _)| cost < *c) {
                best = Some((tri, cost, cand));
            }
        }
        let (tri, nll, cand) = best.ok_or(Error::EmptyMesh)?;
        Ok(self.finish(index, &query, tri, nll, cand))
    }

    /// Matches every data point, in data order.
    pub fn find_all(&self, data: &[OrientedPoint]) -> Result<Vec<Correspondence>> {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            data.par_iter().enumerate().map(|(i, x)| self.find(i, x)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            data.iter().enumerate().map(|(i, x)| self.find(i, x)).collect()
        }
    }
}

/// One-off most-likely match; builds the whitened search structure each call.
pub fn find_most_likely_match(
    x: &OrientedPoint,
    mesh: &TriangleMesh,
    pos: &PositionNoise,
    kent: &KentNoise,
    transform: &SimilarityTransform,
) -> Result<Correspondence> {
    Matcher::new(mesh, pos, kent, transform)?.find(0, x)
}
