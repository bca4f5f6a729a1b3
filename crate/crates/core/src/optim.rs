//! Box-constrained quasi-Newton minimization.
//!
//! Projected BFGS: the search direction is a Newton step on the free
//! variables (those not pinned against a bound by the gradient), followed by
//! a projected Armijo backtracking line search. The Hessian approximation is
//! kept directly and updated with Powell damping so it stays positive definite.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop when the infinity norm of the projected gradient falls below
    /// `gradient_tolerance * max(1, |f|)`.
    pub gradient_tolerance: f64,
    /// Stop when an accepted step changes `f` by less than this (relative).
    pub value_tolerance: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            value_tolerance: 1e-14,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Gradient,
    Value,
    LineSearch,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
    pub reason: StopReason,
    /// Objective value after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

/// Box bounds; use infinities for unbounded coordinates.
#[derive(Debug, Clone)]
pub struct Bounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        x.zip_zip_map(&self.lower, &self.upper, |v, l, u| v.max(l).min(u))
    }

    fn pinned(&self, x: &DVector<f64>, g: &DVector<f64>, i: usize) -> bool {
        let (l, u) = (self.lower[i], self.upper[i]);
        l == u || (x[i] <= l && g[i] > 0.0) || (x[i] >= u && g[i] < 0.0)
    }

    /// Gradient with pinned components zeroed.
    pub fn projected_gradient(&self, x: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(g.len(), |i, _| if self.pinned(x, g, i) { 0.0 } else { g[i] })
    }
}

/// Minimizes `f` over the box starting from `x0` (projected into the box).
///
/// `f` returns the value and gradient. `hessian0` seeds the quasi-Newton
/// matrix and must be symmetric positive definite.
pub fn minimize<F>(
    mut f: F,
    x0: &DVector<f64>,
    bounds: &Bounds,
    hessian0: &DMatrix<f64>,
    opts: &BfgsOptions,
) -> Result<Minimum>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let n = x0.len();
    if bounds.lower.len() != n || bounds.upper.len() != n || hessian0.shape() != (n, n) {
        return Err(Error::Optimizer("dimension mismatch between start point, bounds and Hessian".into()));
    }
    let mut x = bounds.project(x0);
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Optimizer(format!("non-finite objective at start (f = {fx})")));
    }
    let mut b = hessian0.clone();
    let mut history = vec![fx];

    for k in 0..opts.max_iterations {
        let pg = bounds.projected_gradient(&x, &g);
        if pg.amax() <= opts.gradient_tolerance * fx.abs().max(1.0) {
            return Ok(done(x, fx, g, k, StopReason::Gradient, history));
        }

        let mut d = newton_direction(&b, &pg, bounds, &x, &g);
        if g.dot(&d) >= 0.0 {
            b = hessian0.clone();
            d = newton_direction(&b, &pg, bounds, &x, &g);
            if g.dot(&d) >= 0.0 {
                d = -&pg;
            }
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let trial = bounds.project(&(&x + &d * alpha));
            let step = &trial - &x;
            let decrease = g.dot(&step);
            if decrease < 0.0 {
                let (ft, gt) = f(&trial)?;
                if ft.is_finite() && ft <= fx + opts.armijo * decrease {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            alpha *= 0.5;
        }

        let Some((xn, fnew, gn)) = accepted else {
            if k == 0 && pg.amax() > 1e-6 * fx.abs().max(1.0) {
                return Err(Error::Optimizer(format!(
                    "no decrease on the first step (f = {fx:.6e}, |projected gradient| = {:.3e})",
                    pg.amax()
                )));
            }
            return Ok(done(x, fx, g, k, StopReason::LineSearch, history));
        };

        let s = &xn - &x;
        let y = &gn - &g;
        damped_update(&mut b, &s, &y);
        let change = fx - fnew;
        x = xn;
        g = gn;
        fx = fnew;
        history.push(fx);
        if change <= opts.value_tolerance * fx.abs().max(1.0) {
            return Ok(done(x, fx, g, k + 1, StopReason::Value, history));
        }
    }
    Ok(done(x, fx, g, opts.max_iterations, StopReason::MaxIterations, history))
}

fn done(x: DVector<f64>, value: f64, gradient: DVector<f64>, iterations: usize, reason: StopReason, history: Vec<f64>) -> Minimum {
    Minimum {
        x,
        value,
        gradient,
        iterations,
        reason,
        history,
    }
}

fn newton_direction(b: &DMatrix<f64>, pg: &DVector<f64>, bounds: &Bounds, x: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
    let free: Vec<usize> = (0..g.len()).filter(|&i| !bounds.pinned(x, g, i)).collect();
    let mut d = DVector::zeros(g.len());
    if free.is_empty() {
        return d;
    }
    let bf = DMatrix::from_fn(free.len(), free.len(), |r, c| b[(free[r], free[c])]);
    let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| pg[i]));
    match bf.cholesky() {
        Some(ch) => {
            let df = ch.solve(&(-gf));
            for (k, &i) in free.iter().enumerate() {
                d[i] = df[k];
            }
        }
        None => d = -pg,
    }
    d
}

fn damped_update(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) {
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if !(sbs > 0.0) {
        return;
    }
    let sy = s.dot(y);
    let r = if sy >= 0.2 * sbs {
        y.clone()
    } else {
        let theta = 0.8 * sbs / (sbs - sy);
        y * theta + &bs * (1.0 - theta)
    };
    let sr = s.dot(&r);
    if !(sr > 0.0) {
        return;
    }
    *b += &r * r.transpose() / sr - &bs * bs.transpose() / sbs;
}
