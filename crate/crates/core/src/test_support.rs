//! Fixtures shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Vec3;
use crate::mesh::TriangleMesh;

/// Wavy height-field patch with jittered vertices.
pub fn bumpy_mesh(seed: u64) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 12;
    let mut v = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            let x = i as f64 * 2.0;
            let y = j as f64 * 2.0;
            let z = 3.0 * (0.3 * x).sin() * (0.25 * y).cos() + rng.random_range(-0.3..0.3);
            v.push(Vec3::new(x, y, z));
        }
    }
    let w = n + 1;
    let mut t = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let a = j * w + i;
            t.push([a, a + 1, a + w + 1]);
            t.push([a, a + w + 1, a + w]);
        }
    }
    TriangleMesh::new(v, t).unwrap()
}
