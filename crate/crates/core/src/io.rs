//! Point-cloud CSV and registration result files.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceTier;
use crate::error::{invalid, Result};
use crate::geometry::Vec3;
use crate::mesh::OrientedPoint;
use crate::registration::{IterationRecord, RegistrationResult};

const POINT_COLUMNS: [&str; 6] = ["x", "y", "z", "nx", "ny", "nz"];

#[derive(Serialize, Deserialize)]
struct PointRow {
    x: f64,
    y: f64,
    z: f64,
    nx: f64,
    ny: f64,
    nz: f64,
}

/// Reads `x,y,z,nx,ny,nz` rows (mm); normals are normalized.
pub fn read_points_csv<R: Read>(reader: R) -> Result<Vec<OrientedPoint>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != POINT_COLUMNS {
        return Err(invalid(format!(
            "point cloud header must be x,y,z,nx,ny,nz, got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            let p: PointRow = row?;
            OrientedPoint::new(Vec3::new(p.x, p.y, p.z), Vec3::new(p.nx, p.ny, p.nz))
                .map_err(|e| invalid(format!("row {}: {e}", i + 2)))
        })
        .collect()
}

pub fn load_points(path: impl AsRef<Path>) -> Result<Vec<OrientedPoint>> {
    read_points_csv(std::fs::File::open(path)?)
}

pub fn write_points_csv<W: Write>(writer: W, points: &[OrientedPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if points.is_empty() {
        w.write_record(POINT_COLUMNS)?;
    }
    for p in points {
        w.serialize(PointRow {
            x: p.position.x,
            y: p.position.y,
            z: p.position.z,
            nx: p.normal.x,
            ny: p.normal.y,
            nz: p.normal.z,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_points(path: impl AsRef<Path>, points: &[OrientedPoint]) -> Result<()> {
    write_points_csv(std::fs::File::create(path)?, points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub scale: f64,
    pub rotation: [f64; 9],
    /// `[w, x, y, z]` with `w >= 0`.
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
}

/// Result file contents; the per-iteration trace goes to a CSV sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub transform: TransformRecord,
    pub shape: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub inliers: usize,
    pub outliers: Vec<usize>,
    pub e_p: f64,
    pub e_o: f64,
    pub threshold_p: f64,
    pub threshold_o: f64,
    pub tier: ConfidenceTier,
    pub passing_p: Option<f64>,
}

impl ResultRecord {
    /// `threshold_p`/`threshold_o` are the tests' thresholds at the first ladder rung.
    pub fn new(r: &RegistrationResult, threshold_p: f64, threshold_o: f64) -> Self {
        let t = &r.transform;
        Self {
            transform: TransformRecord {
                scale: t.scale,
                rotation: t.rotation_row_major(),
                quaternion: t.quaternion(),
                translation: [t.translation.x, t.translation.y, t.translation.z],
            },
            shape: r.shape.0.clone(),
            iterations: r.iterations,
            converged: r.converged,
            inliers: r.inliers.len(),
            outliers: r.outliers.clone(),
            e_p: r.e_p,
            e_o: r.e_o,
            threshold_p,
            threshold_o,
            tier: r.confidence.tier,
            passing_p: r.confidence.passing_p,
        }
    }
}

pub fn write_trace_csv<W: Write>(writer: W, trace: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for rec in trace {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}
