//! Weighted dyadic hierarchy tuned to a workload.
//!
//! Level `l` (block width `2^l`) of a dyadic tree over `N = 2^L >= n` cells
//! gets weight `w_l`. Because the levels are nested covers, the strategy's
//! normal matrix is diagonal in the basis of level-average projections,
//! which gives the expected workload error in closed form:
//!
//! `(sum_l w_l)^2 * sum_k (c_k - c_{k+1}) / lambda_k`
//!
//! with `lambda_k = sum_{l <= k} w_l^2 2^l` and
//! `c_k = 2^-k * sum_{blocks B at level k} ||W 1_B||^2` (`c_{L+1} = 0`).
//! Weights are tuned by coordinate-wise golden-section search in log space.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{check_dense, LinOp};

const LOG_LO: f64 = -9.0;
const LOG_HI: f64 = 4.0;
const SWEEPS: usize = 12;

struct Objective {
    /// `c_k - c_{k+1}`, one entry per level.
    gaps: Vec<f64>,
}

impl Objective {
    fn new(w: &LinOp) -> Objective {
        let n = w.cols();
        let big = n.next_power_of_two();
        let levels = big.trailing_zeros() as usize + 1;
        let mut c = vec![0.0; levels + 1];
        let mut ind = vec![0.0; n];
        for (k, ck) in c.iter_mut().enumerate().take(levels) {
            let s = 1usize << k;
            let mut acc = 0.0;
            let mut lo = 0;
            while lo < n {
                let hi = (lo + s).min(n);
                ind[lo..hi].iter_mut().for_each(|v| *v = 1.0);
                acc += w.apply(&ind).iter().map(|v| v * v).sum::<f64>();
                ind[lo..hi].iter_mut().for_each(|v| *v = 0.0);
                lo += s;
            }
            *ck = acc / s as f64;
        }
        let gaps = (0..levels).map(|k| (c[k] - c[k + 1]).max(0.0)).collect();
        Objective { gaps }
    }

    fn eval(&self, w: &[f64]) -> f64 {
        let sens: f64 = w.iter().sum();
        let mut lambda = 0.0;
        let mut total = 0.0;
        for (k, (&wk, &g)) in w.iter().zip(&self.gaps).enumerate() {
            lambda += wk * wk * (1u64 << k) as f64;
            if g > 0.0 {
                total += g / lambda;
            }
        }
        sens * sens * total
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (libm::sqrt(5.0) - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Per-level weights, leaves first, for a dyadic hierarchy over
/// `w.cols()` cells. Starts from uniform weights and keeps only improving
/// coordinate moves.
pub fn greedy_h_weights(w: &LinOp) -> Result<Vec<f64>> {
    let n = w.cols();
    if n == 0 {
        return Err(Error::invalid("empty workload domain"));
    }
    check_dense("greedy hierarchy", n, n)?;
    let obj = Objective::new(w);
    let levels = obj.gaps.len();
    let mut logw = vec![0.0; levels];
    let weights = |lw: &[f64]| lw.iter().map(|v| libm::exp(*v)).collect::<Vec<_>>();
    let mut best = obj.eval(&weights(&logw));
    for _ in 0..SWEEPS {
        let start = best;
        for k in 0..levels {
            let trial = |v: f64| {
                let mut t = logw.clone();
                t[k] = v;
                obj.eval(&weights(&t))
            };
            let v = golden_section(trial, LOG_LO, LOG_HI);
            let f = trial(v);
            if f < best {
                best = f;
                logw[k] = v;
            }
        }
        if start - best <= 1e-12 * start.abs() {
            break;
        }
    }
    Ok(weights(&logw))
}

/// Weighted dyadic hierarchy, root level first.
pub fn greedy_h_sel(w: &LinOp) -> Result<LinOp> {
    let n = w.cols();
    let weights = greedy_h_weights(w)?;
    let mut parts = Vec::with_capacity(weights.len());
    for (k, &wk) in weights.iter().enumerate().rev() {
        let s = 1usize << k;
        let ranges: Vec<_> = (0..n).step_by(s).map(|lo| (lo, (lo + s).min(n) - 1)).collect();
        let level = if s == 1 {
            LinOp::identity(n)
        } else {
            LinOp::range_queries(n, &ranges)?
        };
        parts.push(LinOp::weighted(wk, level));
    }
    LinOp::union(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_workload_prefers_leaves() {
        let w = greedy_h_weights(&LinOp::identity(16)).unwrap();
        assert!(w[1..].iter().all(|&v| v < 0.05 * w[0]), "{w:?}");
    }

    #[test]
    fn total_workload_prefers_root() {
        let w = greedy_h_weights(&LinOp::total(16)).unwrap();
        let root = *w.last().unwrap();
        assert!(w[..w.len() - 1].iter().all(|&v| v < root), "{w:?}");
    }

    #[test]
    fn sensitivity_is_weight_sum() {
        let w = LinOp::prefix(12);
        let s = greedy_h_sel(&w).unwrap();
        let ws: f64 = greedy_h_weights(&w).unwrap().iter().sum();
        assert!((s.sensitivity_l1().unwrap() - ws).abs() < 1e-12);
    }
}
