//! Triangle meshes, oriented points and surface queries.

mod bvh;
mod hausdorff;
mod ply;
pub mod primitives;
pub mod triangle;

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{SimilarityTransform, Vec3};

pub use bvh::{ClosestHit, TriangleBvh};
pub use hausdorff::{directed_hausdorff, hausdorff_distance};
pub use ply::{parse_ply, read_ply, to_ply_string, write_ply};

/// Shared, immutable triangle list. Meshes of one corpus point at the same list.
pub type Topology = Arc<[[usize; 3]]>;

/// A position with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedPoint {
    pub position: Vec3,
    pub normal: Vec3,
}

impl OrientedPoint {
    /// Builds a point, normalizing `normal`. Fails on a zero normal.
    pub fn new(position: Vec3, normal: Vec3) -> Result<Self> {
        let n = normal.norm();
        if !(n > 0.0) || !n.is_finite() || !position.iter().all(|v| v.is_finite()) {
            return Err(invalid("oriented point needs a finite position and non-zero normal"));
        }
        Ok(Self {
            position,
            normal: normal / n,
        })
    }

    pub fn transformed(&self, t: &SimilarityTransform) -> Self {
        Self {
            position: t.apply_point(&self.position),
            normal: t.apply_normal(&self.normal),
        }
    }
}

/// A location on a mesh surface given by a triangle and barycentric weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarycentricLocation {
    pub triangle: usize,
    pub mu: [f64; 3],
}

impl BarycentricLocation {
    pub fn new(triangle: usize, mu: [f64; 3]) -> Result<Self> {
        let sum: f64 = mu.iter().sum();
        if mu.iter().any(|m| !(-1e-12..=1.0 + 1e-12).contains(m)) || (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("invalid barycentric weights {mu:?}")));
        }
        Ok(Self { triangle, mu })
    }
}

/// Triangle mesh with per-vertex unit normals.
///
/// Vertices are in millimetres. A BVH for surface queries is built lazily on
/// first use and cached.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Topology,
    normals: Vec<Vec3>,
    bvh: OnceLock<TriangleBvh>,
}

impl TriangleMesh {
    /// Validates the topology and computes area-weighted vertex normals.
    pub fn new(vertices: Vec<Vec3>, triangles: impl Into<Topology>) -> Result<Self> {
        let triangles = triangles.into();
        validate(&vertices, &triangles)?;
        let normals = compute_vertex_normals(&vertices, &triangles)?;
        Ok(Self {
            vertices,
            triangles,
            normals,
            bvh: OnceLock::new(),
        })
    }

    /// Uses the supplied normals (normalized here) instead of computing them.
    pub fn with_normals(vertices: Vec<Vec3>, triangles: impl Into<Topology>, normals: Vec<Vec3>) -> Result<Self> {
        let triangles = triangles.into();
        validate(&vertices, &triangles)?;
        if normals.len() != vertices.len() {
            return Err(invalid("normal count differs from vertex count"));
        }
        let normals = normals
            .into_iter()
            .enumerate()
            .map(|(i, n)| {
                let len = n.norm();
                if len > 0.0 && len.is_finite() {
                    Ok(n / len)
                } else {
                    Err(Error::IsolatedVertex(i))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            vertices,
            triangles,
            normals,
            bvh: OnceLock::new(),
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn topology(&self) -> &Topology {
        &self.triangles
    }

    pub fn vertex_normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn same_topology(&self, other: &TriangleMesh) -> bool {
        self.vertices.len() == other.vertices.len()
            && (Arc::ptr_eq(&self.triangles, &other.triangles) || self.triangles == other.triangles)
    }

    /// Corner positions of triangle `i`.
    pub fn corners(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[i];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized face normal (twice the area times the unit normal).
    pub fn face_normal_scaled(&self, i: usize) -> Vec3 {
        let [a, b, c] = self.corners(i);
        (b - a).cross(&(c - a))
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        0.5 * self.face_normal_scaled(i).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangle_count()).map(|i| self.triangle_area(i)).sum()
    }

    /// Oriented point at a barycentric location: weighted position and
    /// normalized weighted normal.
    pub fn point_at(&self, loc: &BarycentricLocation) -> OrientedPoint {
        let [a, b, c] = self.triangles[loc.triangle];
        let mu = loc.mu;
        let position = self.vertices[a] * mu[0] + self.vertices[b] * mu[1] + self.vertices[c] * mu[2];
        OrientedPoint {
            position,
            normal: self.interpolated_normal(loc),
        }
    }

    pub fn interpolated_normal(&self, loc: &BarycentricLocation) -> Vec3 {
        let [a, b, c] = self.triangles[loc.triangle];
        let mu = loc.mu;
        let n = self.normals[a] * mu[0] + self.normals[b] * mu[1] + self.normals[c] * mu[2];
        let len = n.norm();
        if len > 1e-300 {
            n / len
        } else {
            // Opposite vertex normals cancelling; fall back to the face normal.
            self.face_normal_scaled(loc.triangle).normalize()
        }
    }

    pub fn bvh(&self) -> &TriangleBvh {
        self.bvh
            .get_or_init(|| TriangleBvh::build(&self.vertices, &self.triangles))
    }

    /// Euclidean closest surface point (BVH accelerated, ties to the lowest
    /// triangle index).
    pub fn closest_point(&self, p: &Vec3) -> Result<(Vec3, BarycentricLocation, f64)> {
        let hit = self.bvh().closest_point(p).ok_or(Error::EmptyMesh)?;
        Ok(hit_to_tuple(hit))
    }

    /// Linear scan reference for [`Self::closest_point`].
    pub fn closest_point_brute_force(&self, p: &Vec3) -> Result<(Vec3, BarycentricLocation, f64)> {
        let hit = self.bvh().closest_point_brute_force(p).ok_or(Error::EmptyMesh)?;
        Ok(hit_to_tuple(hit))
    }

    /// Applies a similarity transform to vertices and normals.
    pub fn transformed(&self, t: &SimilarityTransform) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| t.apply_point(v)).collect(),
            triangles: self.triangles.clone(),
            normals: self.normals.iter().map(|n| t.apply_normal(n)).collect(),
            bvh: OnceLock::new(),
        }
    }

    /// Same topology, new vertex positions; normals are recomputed.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<TriangleMesh> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::TopologyMismatch(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        TriangleMesh::new(vertices, self.triangles.clone())
    }
}

fn hit_to_tuple(hit: ClosestHit) -> (Vec3, BarycentricLocation, f64) {
    (
        hit.point,
        BarycentricLocation {
            triangle: hit.triangle,
            mu: hit.mu,
        },
        hit.distance,
    )
}

fn validate(vertices: &[Vec3], triangles: &[[usize; 3]]) -> Result<()> {
    if triangles.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
        return Err(invalid("non-finite vertex coordinate"));
    }
    for (t, tri) in triangles.iter().enumerate() {
        for &index in tri {
            if index >= vertices.len() {
                return Err(Error::IndexOutOfRange {
                    triangle: t,
                    index,
                    count: vertices.len(),
                });
            }
        }
        let [a, b, c] = tri.map(|i| vertices[i]);
        if !((b - a).cross(&(c - a)).norm() > 0.0) {
            return Err(Error::DegenerateTriangle(t));
        }
    }
    Ok(())
}

/// Area-weighted average of incident face normals, normalized.
pub fn compute_vertex_normals(vertices: &[Vec3], triangles: &[[usize; 3]]) -> Result<Vec<Vec3>> {
    let mut acc = vec![Vec3::zeros(); vertices.len()];
    for (t, tri) in triangles.iter().enumerate() {
        if let Some(&index) = tri.iter().find(|&&i| i >= vertices.len()) {
            return Err(Error::IndexOutOfRange {
                triangle: t,
                index,
                count: vertices.len(),
            });
        }
        let [a, b, c] = tri.map(|i| vertices[i]);
        let n = (b - a).cross(&(c - a));
        for &i in tri {
            acc[i] += n;
        }
    }
    acc.into_iter()
        .enumerate()
        .map(|(i, n)| {
            let len = n.norm();
            if len > 0.0 {
                Ok(n / len)
            } else {
                Err(Error::IsolatedVertex(i))
            }
        })
        .collect()
}
