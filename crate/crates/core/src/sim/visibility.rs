//! Endoscope-style visibility: triangles facing an interior viewpoint with an
//! unobstructed line of sight to their centroid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::{BarycentricLocation, OrientedPoint, TriangleMesh};

/// Indices of triangles visible from `viewpoint`.
pub fn visible_triangles(mesh: &TriangleMesh, viewpoint: &Vec3) -> Vec<usize> {
    let bvh = mesh.bvh();
    (0..mesh.triangle_count())
        .filter(|&i| {
            let [a, b, c] = mesh.corners(i);
            let centroid = (a + b + c) / 3.0;
            let to_view = viewpoint - centroid;
            if mesh.face_normal_scaled(i).dot(&to_view) <= 0.0 {
                return false;
            }
            // Segment viewpoint -> centroid, parameterized on [0, 1].
            !bvh.occluded(viewpoint, &(centroid - viewpoint), 1e-9, 1.0 - 1e-9, i)
        })
        .collect()
}

/// Area-weighted samples from the visible triangles with interpolated normals.
pub fn sample_visible_points(mesh: &TriangleMesh, viewpoint: &Vec3, n: usize, seed: u64) -> Result<Vec<OrientedPoint>> {
    let visible = visible_triangles(mesh, viewpoint);
    let mut cumulative = Vec::with_capacity(visible.len());
    let mut total = 0.0;
    for &t in &visible {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::DegenerateData("no surface is visible from the viewpoint".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let r = rng.random::<f64>() * total;
            let k = cumulative.partition_point(|&c| c <= r).min(visible.len() - 1);
            let (r1, r2): (f64, f64) = (rng.random(), rng.random());
            let s = r1.sqrt();
            let loc = BarycentricLocation {
                triangle: visible[k],
                mu: [1.0 - s, s * (1.0 - r2), s * r2],
            };
            mesh.point_at(&loc)
        })
        .collect())
}
