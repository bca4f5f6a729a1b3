//! Anderson mixing for the outer fixed-point iteration.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::geometry::{exp_so3, log_so3, Mat3, SimilarityTransform};
use crate::ssm::ShapeParameters;

/// Flattens `(a, R, t, s)` into `[a L, log(R R0^T) L, t, s]` so that all
/// entries are roughly millimetres at the data's length scale `L`.
pub(crate) struct StateMap {
    pub reference: Mat3,
    pub length: f64,
}

impl StateMap {
    pub fn encode(&self, t: &SimilarityTransform, s: &ShapeParameters) -> DVector<f64> {
        let w = log_so3(&(t.rotation * self.reference.transpose()));
        let mut v = Vec::with_capacity(7 + s.0.len());
        v.push(t.scale * self.length);
        v.extend(w.iter().map(|x| x * self.length));
        v.extend(t.translation.iter());
        v.extend(&s.0);
        DVector::from_vec(v)
    }

    pub fn decode(&self, v: &DVector<f64>) -> (SimilarityTransform, ShapeParameters) {
        let w = v.fixed_rows::<3>(1) / self.length;
        let t = SimilarityTransform::new(
            v[0] / self.length,
            exp_so3(&w.into_owned()) * self.reference,
            v.fixed_rows::<3>(4).into_owned(),
        );
        (t, ShapeParameters(v.rows(7, v.len() - 7).iter().copied().collect()))
    }
}

/// Type-II Anderson extrapolation over the last `depth` residuals.
pub(crate) struct Anderson {
    depth: usize,
    g: VecDeque<DVector<f64>>,
    f: VecDeque<DVector<f64>>,
}

impl Anderson {
    pub fn new(depth: usize) -> Self {
        Self {
            depth,
            g: VecDeque::new(),
            f: VecDeque::new(),
        }
    }

    pub fn reset(&mut self) {
        self.g.clear();
        self.f.clear();
    }

    /// Records `g = G(x)` and `f = G(x) - x`, returning the mixed next iterate
    /// once at least two residuals are stored.
    pub fn step(&mut self, g: DVector<f64>, f: DVector<f64>) -> Option<DVector<f64>> {
        if self.depth == 0 {
            return None;
        }
        self.g.push_back(g);
        self.f.push_back(f);
        if self.g.len() > self.depth + 1 {
            self.g.pop_front();
            self.f.pop_front();
        }
        let m = self.g.len() - 1;
        if m == 0 {
            return None;
        }
        let n = self.f[0].len();
        let mut df = DMatrix::zeros(n, m);
        let mut dg = DMatrix::zeros(n, m);
        for j in 0..m {
            df.set_column(j, &(&self.f[j + 1] - &self.f[j]));
            dg.set_column(j, &(&self.g[j + 1] - &self.g[j]));
        }
        let fk = &self.f[m];
        let svd = df.svd(true, true);
        let eps = svd.singular_values.max() * 1e-10;
        let gamma = svd.solve(fk, eps).ok()?;
        let next = &self.g[m] - dg * gamma;
        next.iter().all(|x| x.is_finite()).then_some(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use approx::assert_relative_eq;

    #[test]
    fn state_round_trip() {
        let map = StateMap {
            reference: exp_so3(&Vec3::new(0.3, -0.2, 0.1)),
            length: 25.0,
        };
        let t = SimilarityTransform::new(1.04, exp_so3(&Vec3::new(-0.1, 0.5, 0.2)), Vec3::new(1.0, -2.0, 3.0));
        let s = ShapeParameters(vec![0.5, -1.5]);
        let (t2, s2) = map.decode(&map.encode(&t, &s));
        assert_relative_eq!(t2.scale, t.scale, epsilon = 1e-12);
        assert_relative_eq!(t2.rotation, t.rotation, epsilon = 1e-12);
        assert_relative_eq!(t2.translation, t.translation, epsilon = 1e-12);
        assert_eq!(s2, s);
    }

    #[test]
    fn solves_a_linear_contraction_in_few_steps() {
        // G(x) = A x + b with a slow spectrum; the fixed point is (I - A)^-1 b.
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.95, 0.9, 0.5]));
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let fixed = (DMatrix::identity(3, 3) - &a).try_inverse().unwrap() * &b;
        let mut acc = Anderson::new(5);
        let mut x = DVector::zeros(3);
        for _ in 0..5 {
            let g = &a * &x + &b;
            x = acc.step(g.clone(), &g - &x).unwrap_or(g);
        }
        assert!((x - fixed).norm() < 1e-8);
    }

    #[test]
    fn depth_zero_is_plain_iteration() {
        let mut acc = Anderson::new(0);
        assert!(acc.step(DVector::zeros(2), DVector::zeros(2)).is_none());
    }
}
