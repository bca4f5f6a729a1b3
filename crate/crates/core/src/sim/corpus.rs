//! Synthetic population of tube-like cavities in vertex correspondence.
//!
//! The base shape is a short, slightly bent cup: an elliptic tube with two
//! inward ridges and a few folds, open at `z = 0` and closed by a deep cap.
//! Being short and wide, most of its wall is visible from the opening.
//! Normals point into the lumen. Shape `j` adds `sum_k c_jk phi_k` to the base, with smooth
//! displacement fields `phi_k` (peak magnitude 1 mm) and independent
//! coefficients `c_jk ~ N(0, amp_k^2)`, `amp_k = amplitude * decay^k + floor`.

use std::f64::consts::{PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Vec3;
use crate::mesh::TriangleMesh;
use crate::ssm::ShapeCorpus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub seed: u64,
    pub n_shapes: usize,
    pub length_mm: f64,
    pub radius_mm: f64,
    /// Rings along the tube.
    pub rings: usize,
    /// Vertices around each ring.
    pub segments: usize,
    pub cap_rings: usize,
    /// Number of displacement fields.
    pub basis_size: usize,
    /// SD of the first field's coefficient (mm).
    pub amplitude_mm: f64,
    pub decay: f64,
    /// SD added to every field's coefficient (mm).
    pub floor_mm: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            n_shapes: 53,
            length_mm: 30.0,
            radius_mm: 12.0,
            rings: 48,
            segments: 48,
            cap_rings: 4,
            basis_size: 64,
            amplitude_mm: 8.0,
            decay: 0.5,
            floor_mm: 0.01,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_shapes < 2 {
            return Err(invalid("a corpus needs at least 2 shapes"));
        }
        if self.rings < 2 || self.segments < 3 {
            return Err(invalid("need at least 2 rings and 3 segments"));
        }
        if !(self.length_mm > 0.0 && self.radius_mm > 0.0) {
            return Err(invalid("length and radius must be positive"));
        }
        if !(self.amplitude_mm >= 0.0 && self.floor_mm >= 0.0 && self.decay > 0.0 && self.decay <= 1.0) {
            return Err(invalid("amplitudes must be non-negative and decay in (0, 1]"));
        }
        Ok(())
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        (0..self.basis_size)
            .map(|k| self.amplitude_mm * self.decay.powi(k as i32) + self.floor_mm)
            .collect()
    }
}

/// Surface parameters of one vertex: `u` along the tube, `theta` around it.
#[derive(Debug, Clone, Copy)]
struct Param {
    u: f64,
    theta: f64,
    /// Weight of angular harmonics; fades to 0 toward the cap apex.
    rim: f64,
}

/// Base cavity mesh with per-vertex surface parameters.
pub struct BaseCavity {
    pub mesh: TriangleMesh,
    params: Vec<Param>,
    /// Vertex-centroid shift applied so the base is centred at the origin.
    offset: Vec3,
    length: f64,
    rings: usize,
    segments: usize,
}

fn centerline(u: f64, length: f64) -> Vec3 {
    Vec3::new(
        0.09 * length * u.powi(3) + 0.03 * length * u * u,
        0.036 * length * (1.2 * PI * u).sin(),
        length * u,
    )
}

// (u, theta / pi, depth as a fraction of the radius)
const FOLDS: [(f64, f64, f64); 3] = [(0.12, -0.1, 0.25), (0.18, 0.7, 0.2), (0.3, 0.35, 0.3)];

fn bump(u: f64, d_theta: f64, u0: f64, width_u: f64, width_theta: f64) -> f64 {
    let d = (d_theta + PI).rem_euclid(TAU) - PI;
    (-((u - u0) / width_u).powi(2) / 2.0 - (d / width_theta).powi(2) / 2.0).exp()
}

fn section(u: f64, theta: f64, radius: f64) -> Vec3 {
    // Slow undulation of both section axes with different phases.
    let rx = radius * (1.0 + 0.1 * (2.5 * PI * u + 0.3).sin());
    let ry = 0.6 * radius * (1.0 + 0.1 * (2.2 * PI * u + 1.7).sin());
    // Two longitudinal ridges and a few folds break the sliding and twisting
    // symmetries of a plain tube.
    let mut inset = 0.4 * bump(0.0, theta, 0.0, f64::INFINITY, 0.35) * (PI * u).sin().powi(2)
        + 0.3 * bump(0.0, theta - 1.3 * PI, 0.0, f64::INFINITY, 0.3) * (0.5 * PI * u + 0.4).sin();
    for &(u0, t0, depth) in &FOLDS {
        inset += depth * bump(u, theta - t0 * PI, u0, 0.06, 0.5);
    }
    let scale = 1.0 - inset;
    Vec3::new(rx * theta.cos() * scale, ry * theta.sin() * scale, 0.0)
}

impl BaseCavity {
    pub fn new(spec: &CorpusSpec) -> Result<Self> {
        spec.validate()?;
        let (nr, ns, nc) = (spec.rings, spec.segments, spec.cap_rings);
        let (len, rad) = (spec.length_mm, spec.radius_mm);
        let cap_depth = 0.9 * rad;
        let mut verts = Vec::new();
        let mut params = Vec::new();
        for i in 0..nr {
            let u = i as f64 / (nr - 1) as f64;
            for j in 0..ns {
                let theta = TAU * j as f64 / ns as f64;
                verts.push(centerline(u, len) + section(u, theta, rad));
                params.push(Param { u, theta, rim: 1.0 });
            }
        }
        let end = centerline(1.0, len);
        for i in 1..=nc {
            let phi = 0.5 * PI * i as f64 / (nc + 1) as f64;
            for j in 0..ns {
                let theta = TAU * j as f64 / ns as f64;
                verts.push(end + section(1.0, theta, rad) * phi.cos() + Vec3::z() * (cap_depth * phi.sin()));
                params.push(Param { u: 1.0, theta, rim: phi.cos() });
            }
        }
        let apex = verts.len();
        verts.push(end + Vec3::z() * cap_depth);
        params.push(Param { u: 1.0, theta: 0.0, rim: 0.0 });

        let total_rings = nr + nc;
        let mut tris = Vec::new();
        for i in 0..total_rings - 1 {
            for j in 0..ns {
                let a = i * ns + j;
                let b = i * ns + (j + 1) % ns;
                let c = (i + 1) * ns + (j + 1) % ns;
                let d = (i + 1) * ns + j;
                // Wound so face normals point toward the axis.
                tris.push([a, d, c]);
                tris.push([a, c, b]);
            }
        }
        let last = (total_rings - 1) * ns;
        for j in 0..ns {
            tris.push([last + j, apex, last + (j + 1) % ns]);
        }

        let offset = verts.iter().sum::<Vec3>() / verts.len() as f64;
        for v in &mut verts {
            *v -= offset;
        }
        Ok(Self {
            mesh: TriangleMesh::new(verts, tris)?,
            params,
            offset,
            length: len,
            rings: nr,
            segments: ns,
        })
    }

    /// Interior point on the centerline at fraction `u` of the length.
    pub fn axis_point(&self, u: f64) -> Vec3 {
        centerline(u, self.length) - self.offset
    }

    /// Centroid of the tube ring of `mesh` nearest to fraction `u`; an interior
    /// point for any shape of the corpus.
    pub fn ring_centroid(&self, mesh: &TriangleMesh, u: f64) -> Vec3 {
        let ring = (u.clamp(0.0, 1.0) * (self.rings - 1) as f64).round() as usize;
        let start = ring * self.segments;
        mesh.vertices()[start..start + self.segments].iter().sum::<Vec3>() / self.segments as f64
    }

    /// Displacement field `k` evaluated at every vertex, scaled to a peak of 1 mm.
    pub fn field(&self, k: usize) -> Vec<Vec3> {
        let outward: Vec<Vec3> = self.mesh.vertex_normals().iter().map(|n| -n).collect();
        let raw: Vec<Vec3> = self
            .params
            .iter()
            .zip(&outward)
            .map(|(p, n)| match k {
                0 => Vec3::new(p.u * p.u, 0.0, 0.0),
                1 => Vec3::new(0.0, p.u * p.u, 0.0),
                2 => Vec3::new(0.0, 0.0, p.u),
                _ => {
                    let (l, m, sine) = harmonic(k - 3);
                    let ang = match (m, sine) {
                        (0, _) => 1.0,
                        (_, true) => p.rim * (m as f64 * p.theta).sin(),
                        (_, false) => p.rim * (m as f64 * p.theta).cos(),
                    };
                    n * ((l as f64 * PI * p.u).cos() * ang)
                }
            })
            .collect();
        let peak = raw.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if peak > 0.0 {
            raw.iter().map(|v| v / peak).collect()
        } else {
            raw
        }
    }
}

/// `k`-th entry of the harmonics `(l, m, sine)` ordered by `l + m`, then `m`.
fn harmonic(k: usize) -> (usize, usize, bool) {
    let mut i = 0;
    for order in 0.. {
        for m in 0..=order {
            let l = order - m;
            for sine in [false, true] {
                if sine && m == 0 {
                    continue;
                }
                if i == k {
                    return (l, m, sine);
                }
                i += 1;
            }
        }
    }
    unreachable!()
}

/// True if no triangle of `mesh` flipped relative to `reference`.
pub fn orientation_consistent(mesh: &TriangleMesh, reference: &TriangleMesh) -> bool {
    (0..mesh.triangle_count()).all(|i| mesh.face_normal_scaled(i).dot(&reference.face_normal_scaled(i)) > 0.0)
}

const MAX_ATTEMPTS: usize = 5;

/// Generates the corpus; deterministic per seed.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<(BaseCavity, ShapeCorpus)> {
    let base = BaseCavity::new(spec)?;
    let fields: Vec<Vec<Vec3>> = (0..spec.basis_size).map(|k| base.field(k)).collect();
    let amps = spec.amplitudes();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut shapes = Vec::with_capacity(spec.n_shapes);
    for j in 0..spec.n_shapes {
        let coeffs: Vec<f64> = amps
            .iter()
            .map(|a| a * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let mut damping = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS {
            let mut verts = base.mesh.vertices().to_vec();
            for (f, c) in fields.iter().zip(&coeffs) {
                for (v, d) in verts.iter_mut().zip(f) {
                    *v += d * (c * damping);
                }
            }
            if let Ok(mesh) = base.mesh.with_vertices(verts) {
                if orientation_consistent(&mesh, &base.mesh) {
                    accepted = Some(mesh);
                    break;
                }
            }
            damping *= 0.7;
        }
        shapes.push(accepted.ok_or_else(|| {
            Error::Corpus(format!("shape {j} self-intersects after {MAX_ATTEMPTS} damped attempts"))
        })?);
    }
    Ok((base, ShapeCorpus::new(shapes)?))
}
