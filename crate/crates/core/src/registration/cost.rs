use nalgebra::{DMatrix, DVector, Matrix3xX};

use super::Correspondence;
use crate::error::{invalid, Result};
use crate::geometry::{exp_so3, left_jacobian, skew, Mat3, SimilarityTransform, Vec3};
use crate::mesh::OrientedPoint;
use crate::noise::{tangent_frame, KentNoise, Mahalanobis, PositionNoise};
use crate::ssm::{ShapeParameters, StatisticalShapeModel};

/// Number of pose parameters `[a, omega, t]` ahead of the shape parameters.
pub const POSE_DIM: usize = 7;

struct Term {
    x_p: Vec3,
    x_n: Vec3,
    g1: Vec3,
    g2: Vec3,
    y_mean: Vec3,
    basis: Matrix3xX<f64>,
    y_n: Vec3,
}

/// Registration objective over one optimization phase.
///
/// Parameters are `[a, omega(3), t(3), s(n_modes)]` with
/// `R = exp([omega]x) R0`. Matched locations, matched normals and the
/// combined covariance (evaluated at `R0`) are frozen for the phase; matched
/// positions move with `s` through the barycentric mode basis.
pub struct CostModel {
    terms: Vec<Term>,
    sigma_inv: Mat3,
    kent: KentNoise,
    n_modes: usize,
    r0: Mat3,
}

impl CostModel {
    pub fn new(
        data: &[OrientedPoint],
        inliers: &[Correspondence],
        ssm: &StatisticalShapeModel,
        n_modes: usize,
        pos: &PositionNoise,
        kent: &KentNoise,
        r0: &Mat3,
    ) -> Result<Self> {
        let metric = Mahalanobis::new(&pos.combined(r0))?;
        let terms = inliers
            .iter()
            .map(|c| {
                let x = data
                    .get(c.data_index)
                    .ok_or_else(|| invalid(format!("correspondence index {} out of range", c.data_index)))?;
                let (g1, g2) = tangent_frame(&x.normal)?;
                Ok(Term {
                    x_p: x.position,
                    x_n: x.normal,
                    g1,
                    g2,
                    y_mean: ssm.mean_point(&c.loc),
                    basis: ssm.location_basis(&c.loc, n_modes)?,
                    y_n: c.y.normal,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            terms,
            sigma_inv: *metric.inverse(),
            kent: *kent,
            n_modes,
            r0: *r0,
        })
    }

    pub fn dim(&self) -> usize {
        POSE_DIM + self.n_modes
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Parameter vector for a transform whose rotation equals `R0` and shape `s`.
    pub fn pack(&self, scale: f64, translation: &Vec3, s: &ShapeParameters) -> DVector<f64> {
        let mut p = DVector::zeros(self.dim());
        p[0] = scale;
        p.fixed_rows_mut::<3>(4).copy_from(translation);
        for (j, v) in s.0.iter().enumerate().take(self.n_modes) {
            p[POSE_DIM + j] = *v;
        }
        p
    }

    pub fn unpack(&self, p: &DVector<f64>) -> (SimilarityTransform, ShapeParameters) {
        let omega = Vec3::new(p[1], p[2], p[3]);
        let t = SimilarityTransform::new(p[0], exp_so3(&omega) * self.r0, Vec3::new(p[4], p[5], p[6]));
        (t, ShapeParameters(p.rows(POSE_DIM, self.n_modes).iter().copied().collect()))
    }

    fn matched(&self, term: &Term, s: &DVector<f64>) -> Vec3 {
        if self.n_modes == 0 {
            term.y_mean
        } else {
            term.y_mean + &term.basis * s
        }
    }

    pub fn cost(&self, p: &DVector<f64>) -> f64 {
        self.evaluate(p, false).0
    }

    /// Objective value and analytic gradient.
    pub fn cost_and_gradient(&self, p: &DVector<f64>) -> (f64, DVector<f64>) {
        self.evaluate(p, true)
    }

    fn evaluate(&self, p: &DVector<f64>, with_gradient: bool) -> (f64, DVector<f64>) {
        let a = p[0];
        let omega = Vec3::new(p[1], p[2], p[3]);
        let r = exp_so3(&omega) * self.r0;
        let t = Vec3::new(p[4], p[5], p[6]);
        let s = p.rows(POSE_DIM, self.n_modes).clone_owned();
        let (kappa, beta) = (self.kent.kappa, self.kent.beta);

        let mut value = 0.5 * s.norm_squared();
        let mut grad = DVector::zeros(self.dim());
        let mut g_a = 0.0;
        let mut g_phi = Vec3::zeros();
        let mut g_t = Vec3::zeros();
        let mut g_s = DVector::<f64>::zeros(self.n_modes);

        for term in &self.terms {
            let px = r * term.x_p;
            let res = self.matched(term, &s) - a * px - t;
            let h = self.sigma_inv * res;
            let rx_n = r * term.x_n;
            let rg1 = r * term.g1;
            let rg2 = r * term.g2;
            let c1 = rg1.dot(&term.y_n);
            let c2 = rg2.dot(&term.y_n);
            value += 0.5 * res.dot(&h) + kappa * (1.0 - rx_n.dot(&term.y_n)) - beta * (c1 * c1 - c2 * c2);
            if with_gradient {
                g_a -= px.dot(&h);
                g_t -= h;
                if self.n_modes > 0 {
                    g_s += term.basis.transpose() * h;
                }
                g_phi += a * h.cross(&px);
                g_phi -= kappa * rx_n.cross(&term.y_n);
                g_phi -= beta * (2.0 * c1 * rg1.cross(&term.y_n) - 2.0 * c2 * rg2.cross(&term.y_n));
            }
        }
        if with_gradient {
            grad[0] = g_a;
            grad.fixed_rows_mut::<3>(1).copy_from(&(left_jacobian(&omega).transpose() * g_phi));
            grad.fixed_rows_mut::<3>(4).copy_from(&g_t);
            if self.n_modes > 0 {
                grad.rows_mut(POSE_DIM, self.n_modes).copy_from(&(g_s + &s));
            }
        }
        (value, grad)
    }

    /// Gauss–Newton approximation of the Hessian at `p`, used to seed BFGS.
    pub fn gauss_newton_hessian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let a = p[0];
        let omega = Vec3::new(p[1], p[2], p[3]);
        let r = exp_so3(&omega) * self.r0;
        let mut hess = DMatrix::<f64>::zeros(n, n);
        let mut jac = DMatrix::<f64>::zeros(3, n);
        for term in &self.terms {
            let px = r * term.x_p;
            jac.fill(0.0);
            jac.fixed_view_mut::<3, 1>(0, 0).copy_from(&(-px));
            jac.fixed_view_mut::<3, 3>(0, 1).copy_from(&(skew(&px) * a));
            jac.fixed_view_mut::<3, 3>(0, 4).copy_from(&(-Mat3::identity()));
            if self.n_modes > 0 {
                jac.view_mut((0, POSE_DIM), (3, self.n_modes)).copy_from(&term.basis);
            }
            hess += jac.transpose() * self.sigma_inv * &jac;
            let n_dir = r * term.x_n;
            let rot = (Mat3::identity() - n_dir * n_dir.transpose()) * self.kent.kappa;
            let mut block = hess.fixed_view_mut::<3, 3>(1, 1);
            block += rot;
        }
        for j in POSE_DIM..n {
            hess[(j, j)] += 1.0;
        }
        let ridge = 1e-9 * hess.diagonal().amax().max(1.0);
        for j in 0..n {
            hess[(j, j)] += ridge;
        }
        hess
    }
}
