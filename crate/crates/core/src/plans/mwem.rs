//! MWEM and its variants.

use alloc::vec;
use alloc::vec::Vec;

use super::Ctx;
use crate::error::{Error, Result};
use crate::inference::{self, MeasurementSet};
use crate::kernel::{Epsilon, SourceRef};
use crate::matrix::{Csr, LinOp};
use crate::selection;

/// Noise scale of the public total relative to a sensitivity-1 measurement
/// at the per-round budget.
const TOTAL_CONFIDENCE: f64 = 1e-2;

/// Aligned ranges of width `2^(round-1)` that avoid the support of `row`.
fn dyadic_extras(row: &[f64], round: usize) -> Vec<(usize, usize)> {
    let n = row.len();
    if round > usize::BITS as usize {
        return Vec::new();
    }
    let width = 1usize << (round - 1);
    let mut out = Vec::new();
    let mut lo = 0;
    while lo + width <= n {
        if row[lo..lo + width].iter().all(|&v| v == 0.0) {
            out.push((lo, lo + width - 1));
        }
        lo += width;
    }
    out
}

/// `augment` adds the disjoint dyadic ranges of the current level next to
/// each selected query; `nnls` swaps multiplicative weights for
/// nonnegative least squares anchored by the public total.
pub(super) fn run(cx: &mut Ctx, sv: SourceRef, w: &LinOp, eps: &Epsilon, augment: bool, nnls: bool) -> Result<Vec<f64>> {
    let total = cx.params.total.ok_or_else(|| Error::Config("MWEM needs the public record count".into()))?;
    if !(total > 0.0) {
        return Err(Error::invalid("record count must be positive"));
    }
    let rounds = cx.params.rounds;
    if rounds == 0 {
        return Err(Error::invalid("MWEM needs at least one round"));
    }
    let n = cx.k.len(sv)?;
    let share = eps.div_int(2 * rounds as u64)?;
    let mut x = vec![total / n as f64; n];
    let mut set = MeasurementSet::new(n);
    if nnls {
        set.push(LinOp::total(n), vec![total], TOTAL_CONFIDENCE / share.to_f64())?;
    }
    for round in 1..=rounds {
        let t0 = cx.start();
        let (_, row) = selection::worst_approx(cx.k, sv, w, &x, &share)?;
        let q = if augment {
            let dense_row = row.row(0)?;
            let extras = dyadic_extras(&dense_row, round);
            if extras.is_empty() {
                row
            } else {
                // the extras are disjoint, so one sparse block stays O(n)
                let mut trip: Vec<(usize, usize, f64)> =
                    dense_row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (0, j, v)).collect();
                for (i, &(lo, hi)) in extras.iter().enumerate() {
                    trip.extend((lo..=hi).map(|j| (i + 1, j, 1.0)));
                }
                LinOp::sparse(Csr::from_triplets(extras.len() + 1, n, &trip)?)
            }
        } else {
            row
        };
        cx.stop("select", t0);
        let m = cx.measure(sv, q, &share)?;
        set.push(m.query, m.values, m.noise_scale)?;
        let t0 = cx.start();
        let e = if nnls {
            inference::nnls_from(&set, Some(&x), cx.params.nnls_tol, cx.params.nnls_ftol, cx.params.nnls_max_iter)?
        } else {
            inference::mult_weights(&set, &x, total, cx.params.mw_iters)?
        };
        cx.stop("infer", t0);
        cx.record(&e);
        x = e.x_hat;
    }
    Ok(x)
}
