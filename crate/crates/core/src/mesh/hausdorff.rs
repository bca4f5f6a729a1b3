use super::TriangleMesh;
use crate::error::Result;

/// Largest distance from a vertex of `from` to the surface of `to`.
pub fn directed_hausdorff(from: &TriangleMesh, to: &TriangleMesh) -> Result<f64> {
    let mut worst = 0.0f64;
    for v in from.vertices() {
        let (_, _, d) = to.closest_point(v)?;
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Symmetric Hausdorff distance, approximated with vertex-to-surface
/// distances in both directions.
pub fn hausdorff_distance(a: &TriangleMesh, b: &TriangleMesh) -> Result<f64> {
    Ok(directed_hausdorff(a, b)?.max(directed_hausdorff(b, a)?))
}
