//! Statistical shape model registration of oriented point clouds.
//!
//! Builds PCA shape models from meshes in vertex correspondence, registers
//! noisy oriented points to the deformable model with anisotropic position
//! noise and Kent orientation noise, and grades each registration with
//! chi-square tests on its position and orientation residuals.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod confidence;
pub mod error;
pub mod geometry;
pub mod io;
pub mod mesh;
pub mod noise;
pub mod optim;
pub mod registration;
pub mod sim;
pub mod special;
pub mod ssm;

#[cfg(test)]
mod test_support;

pub use confidence::{chi2_inv, classify, ConfidenceLadder, ConfidenceTier};
pub use error::{Error, Result};
pub use geometry::{SimilarityTransform, Vec3};
pub use mesh::{OrientedPoint, TriangleMesh};
pub use registration::{register, RegistrationConfig, RegistrationResult};
pub use ssm::{build_ssm, ShapeCorpus, ShapeParameters, StatisticalShapeModel};
