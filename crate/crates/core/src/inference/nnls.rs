//! Nonnegative least squares: projected gradient steps with
//! Barzilai-Borwein lengths, alternated with LSMR solves over the free
//! coordinates.

use alloc::vec;
use alloc::vec::Vec;

use super::{lsmr, norm2, residual, Estimate, MeasurementSet};
use crate::error::Result;
use crate::matrix::{Csr, LinOp};

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 50;
/// Loosest relative tolerance of the LSMR solve over the free coordinates;
/// tightened to the current KKT residual near convergence.
const SUBSPACE_TOL: f64 = 1e-6;
const SUBSPACE_TOL_MIN: f64 = 1e-12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient of `0.5 ||A x - b||^2` given the residual `b - A x`.
fn gradient(a: &LinOp, r: &[f64]) -> Vec<f64> {
    a.apply_t(r).into_iter().map(|v| -v).collect()
}

/// `||x - max(x - g, 0)||_inf`; zero exactly at a KKT point.
pub fn kkt_residual(x: &[f64], g: &[f64]) -> f64 {
    x.iter().zip(g).map(|(&xi, &gi)| (xi - (xi - gi).max(0.0)).abs()).fold(0.0, f64::max)
}

fn project(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// One projected step from `x` along `dir` (scaled by `t0`, halved until
/// the Armijo test holds). Returns the new point and `A (x_new - x)`.
fn projected_search(
    a: &LinOp,
    x: &[f64],
    r: &[f64],
    g: &[f64],
    dir: &[f64],
    t0: f64,
) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let mut t = t0;
    for _ in 0..MAX_BACKTRACK {
        let mut xn: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + t * di).collect();
        project(&mut xn);
        let s: Vec<f64> = xn.iter().zip(x).map(|(p, q)| p - q).collect();
        let as_ = a.apply(&s);
        // f(x + s) - f(x) without subtracting two large objectives
        let change = -dot(r, &as_) + 0.5 * dot(&as_, &as_);
        let decrease = dot(g, &s);
        if decrease < 0.0 && change <= ARMIJO * decrease {
            return Some((xn, as_, t));
        }
        t *= 0.5;
    }
    None
}

/// Weighted least squares subject to `x >= 0`, started from the clipped
/// least-squares solution and run until the KKT residual is at most `tol`.
/// See [`nnls_from`].
pub fn nnls(ms: &MeasurementSet, tol: f64, max_iter: usize) -> Result<Estimate> {
    nnls_from(ms, None, tol, 0.0, max_iter)
}

/// Weighted least squares subject to `x >= 0`. Starts from `start` when
/// given and from the clipped least-squares solution otherwise; either
/// start is projected and rescaled by the best nonnegative factor. Each
/// iteration takes a projected gradient step to settle which coordinates
/// sit at zero, then solves the unconstrained problem over the remaining
/// coordinates with LSMR and moves toward that solution with a projected
/// search. Stops once the KKT residual is at most `tol` or an iteration
/// lowers the objective by at most `ftol` relative to its previous value.
pub fn nnls_from(
    ms: &MeasurementSet,
    start: Option<&[f64]>,
    tol: f64,
    ftol: f64,
    max_iter: usize,
) -> Result<Estimate> {
    let (a, b) = ms.weighted_system()?;
    let n = a.cols();
    let mut x = match start {
        Some(s) if s.len() == n => s.to_vec(),
        Some(s) => return Err(crate::error::Error::dim("nnls start", n, s.len())),
        None => lsmr(&a, &b, 1e-10, super::default_max_iter(n)).x_hat,
    };
    project(&mut x);
    let ax = a.apply(&x);
    let axx = dot(&ax, &ax);
    if axx > 0.0 {
        let alpha = (dot(&ax, &b) / axx).max(0.0);
        x.iter_mut().for_each(|v| *v *= alpha);
    }
    let mut r = residual(&a, &x, &b);
    let mut g = gradient(&a, &r);
    let mut step = {
        let gn = norm2(&g);
        if gn > 0.0 {
            1.0 / gn
        } else {
            1.0
        }
    };
    let mut iterations = 0;
    let mut kkt = kkt_residual(&x, &g);
    let mut converged = kkt <= tol;
    while !converged && iterations < max_iter {
        iterations += 1;
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut moved = false;
        if let Some((xn, as_, t)) = projected_search(&a, &x, &r, &g, &neg_g, step) {
            let rn: Vec<f64> = r.iter().zip(&as_).map(|(ri, ai)| ri - ai).collect();
            let gn = gradient(&a, &rn);
            let (mut ss, mut sy) = (0.0, 0.0);
            for i in 0..n {
                let s = xn[i] - x[i];
                let y = gn[i] - g[i];
                ss += s * s;
                sy += s * y;
            }
            step = if sy > 0.0 { ss / sy } else { t * 2.0 };
            x = xn;
            r = rn;
            g = gn;
            moved = true;
        }
        let free: Vec<usize> = (0..n).filter(|&i| x[i] > 0.0).collect();
        if !free.is_empty() {
            let trip: Vec<_> = free.iter().enumerate().map(|(k, &i)| (i, k, 1.0)).collect();
            let sub = LinOp::product(a.clone(), LinOp::sparse(Csr::from_triplets(n, free.len(), &trip)?))?;
            let z = lsmr(&sub, &r, kkt.clamp(SUBSPACE_TOL_MIN, SUBSPACE_TOL), super::default_max_iter(free.len())).x_hat;
            let mut dir = vec![0.0; n];
            for (k, &i) in free.iter().enumerate() {
                dir[i] = z[k];
            }
            if let Some((xn, _, _)) = projected_search(&a, &x, &r, &g, &dir, 1.0) {
                x = xn;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        let f_prev = 0.5 * dot(&r, &r);
        r = residual(&a, &x, &b);
        g = gradient(&a, &r);
        let f = 0.5 * dot(&r, &r);
        kkt = kkt_residual(&x, &g);
        converged = kkt <= tol || (ftol > 0.0 && f_prev - f <= ftol * f_prev.max(1.0));
    }
    Ok(Estimate {
        x_hat: x,
        iterations,
        residual_norm: norm2(&r),
        converged,
    })
}
