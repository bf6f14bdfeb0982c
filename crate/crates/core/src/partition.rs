//! Partition selection: public (workload-driven, stripes, grids) and
//! private (Dawa, AHP) choices of a [`PartitionMap`].

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::kernel::{Answer, Epsilon, Kernel, QueryOp, SourceRef};
use crate::matrix::LinOp;
use crate::measurement::laplace;
use crate::selection::GridSpec;
use crate::transform::PartitionMap;

/// Number of random projections used to compare workload columns.
pub const HASH_ROUNDS: usize = 2;

/// Rounds to 12 significant decimal digits and returns the bit pattern.
fn hash_key(v: f64) -> u64 {
    if v == 0.0 || !v.is_finite() {
        return 0;
    }
    let e = libm::floor(libm::log10(v.abs()));
    let scale = libm::pow(10.0, 11.0 - e);
    let r = libm::round(v * scale) / scale;
    r.to_bits()
}

/// Groups the columns of `w` that are identical, using `k` rounds of the
/// random projection `h = W^T v` with `v ~ U(0,1)^m`. Columns that are
/// entirely zero form a single group. Groups are numbered in order of
/// their first column. This operator is public and uses no budget.
pub fn workload_based(w: &LinOp, seed: u64) -> Result<PartitionMap> {
    workload_based_rounds(w, HASH_ROUNDS, seed)
}

pub fn workload_based_rounds(w: &LinOp, rounds: usize, seed: u64) -> Result<PartitionMap> {
    let n = w.cols();
    if n == 0 {
        return Err(Error::invalid("workload has no columns"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut keys: Vec<Vec<u64>> = vec![Vec::with_capacity(rounds + 1); n];
    let nonzero = w.abs()?.rmatvec(&vec![1.0; w.rows()])?;
    for (k, nz) in keys.iter_mut().zip(&nonzero) {
        k.push((*nz > 0.0) as u64);
    }
    for _ in 0..rounds {
        let v: Vec<f64> = (0..w.rows()).map(|_| rng.gen::<f64>()).collect();
        let h = w.rmatvec(&v)?;
        for (k, hv) in keys.iter_mut().zip(h) {
            k.push(hash_key(hv));
        }
    }
    let mut ids: BTreeMap<&[u64], usize> = BTreeMap::new();
    let mut group_of = Vec::with_capacity(n);
    for k in &keys {
        let next = ids.len();
        group_of.push(*ids.entry(k.as_slice()).or_insert(next));
    }
    PartitionMap::new(group_of)
}

/// One group per line along `axis`: cells that agree on every other
/// coordinate. Group ids follow row-major order of the remaining axes.
pub fn stripe_partition(shape: &[usize], axis: usize) -> Result<PartitionMap> {
    if axis >= shape.len() {
        return Err(Error::invalid("stripe axis out of range"));
    }
    let n: usize = shape.iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let len = shape[axis];
    let group_of = (0..n)
        .map(|c| {
            let outer = c / (inner * len);
            let rest = c % inner;
            outer * inner + rest
        })
        .collect();
    PartitionMap::new(group_of)
}

/// Rectangular blocks of `cell_size` (the last block on each axis absorbs
/// any remainder).
pub fn grid_partition(shape: &[usize], cell_size: &[usize]) -> Result<PartitionMap> {
    Ok(GridSpec::new(shape.to_vec(), cell_size.to_vec())?.partition())
}

/// Sum of absolute deviations from the mean.
fn deviation(x: &[f64]) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - mean).abs()).sum()
}

/// Optimal cover of `0..n` by aligned dyadic intervals given a cost per
/// interval. `cost[l][k]` is the cost of `[k 2^l, (k+1) 2^l)`; only intervals
/// inside `0..n` are candidates. Ties prefer wider intervals.
fn dyadic_dp(n: usize, cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let mut best = vec![f64::INFINITY; n + 1];
    let mut back = vec![0usize; n + 1];
    best[0] = 0.0;
    for end in 1..=n {
        for l in (0..cost.len()).rev() {
            let s = 1usize << l;
            if end % s != 0 || end < s {
                continue;
            }
            let c = best[end - s] + cost[l][end / s - 1];
            if c < best[end] {
                best[end] = c;
                back[end] = end - s;
            }
        }
    }
    let mut out = Vec::new();
    let mut end = n;
    while end > 0 {
        out.push((back[end], end));
        end = back[end];
    }
    out.reverse();
    out
}

fn intervals_to_map(n: usize, intervals: &[(usize, usize)]) -> PartitionMap {
    let mut group_of = vec![0; n];
    for (g, &(lo, hi)) in intervals.iter().enumerate() {
        group_of[lo..hi].iter_mut().for_each(|v| *v = g);
    }
    PartitionMap::new(group_of).expect("intervals cover the domain")
}

/// Per-interval costs: absolute deviation plus `noise(level)` plus `penalty`.
fn dawa_costs(x: &[f64], penalty: f64, mut noise: impl FnMut() -> f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let levels = if n == 0 { 0 } else { (usize::BITS - n.leading_zeros()) as usize };
    (0..levels)
        .map(|l| {
            let s = 1usize << l;
            (0..n / s)
                .map(|k| deviation(&x[k * s..(k + 1) * s]) + noise() + penalty)
                .collect()
        })
        .collect()
}

/// Noiseless counterpart of the Dawa partition, for reference.
pub fn dawa_noiseless(x: &[f64], measure_eps: f64) -> PartitionMap {
    let cost = dawa_costs(x, 1.0 / measure_eps, || 0.0);
    intervals_to_map(x.len(), &dyadic_dp(x.len(), &cost))
}

/// Contiguous buckets chosen by minimizing noisy deviation plus a
/// per-bucket penalty of `1 / measure_eps`. Every cell lies in one
/// candidate interval per level, and each deviation changes by less than 2
/// when one count changes by 1, so the cost vector is perturbed with
/// Laplace noise of scale `2 * levels / eps`.
pub(crate) fn dawa_private<R: RngCore + ?Sized>(x: &[f64], eps: f64, measure_eps: f64, rng: &mut R) -> PartitionMap {
    let n = x.len();
    let levels = (usize::BITS - n.leading_zeros()) as f64;
    let scale = 2.0 * levels / eps;
    let cost = dawa_costs(x, 1.0 / measure_eps, || laplace(scale, rng));
    intervals_to_map(n, &dyadic_dp(n, &cost))
}

/// Greedy grouping of sorted values: a value joins the current group while
/// the group's absolute deviation grows by at most `penalty`.
fn ahp_cluster(values: &[f64], penalty: f64) -> PartitionMap {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + sorted[i];
    }
    // deviation of sorted[a..b] from its mean, via prefix sums
    let dev = |a: usize, b: usize| {
        let len = (b - a) as f64;
        let mean = (prefix[b] - prefix[a]) / len;
        let split = a + sorted[a..b].partition_point(|&v| v < mean);
        let below = (split - a) as f64 * mean - (prefix[split] - prefix[a]);
        let above = (prefix[b] - prefix[split]) - (b - split) as f64 * mean;
        below + above
    };
    let mut group_of = vec![0usize; n];
    let mut g = 0;
    let mut start = 0;
    let mut cur = 0.0;
    for end in 1..=n {
        if end > start + 1 {
            let next = dev(start, end);
            if next - cur > penalty {
                g += 1;
                start = end - 1;
                cur = 0.0;
            } else {
                cur = next;
            }
        }
        group_of[order[end - 1]] = g;
    }
    PartitionMap::new(group_of).map(|p| p.canonical()).expect("groups are contiguous in sorted order")
}

/// Noiseless counterpart of the AHP partition, for reference.
pub fn ahp_noiseless(x: &[f64], measure_eps: f64) -> PartitionMap {
    ahp_cluster(x, 1.0 / measure_eps)
}

/// Noisy counts `x + Lap(1/eps)`, values below `eta sqrt(ln n) / eps` set to
/// zero, then greedily clustered in sorted order.
pub(crate) fn ahp_private<R: RngCore + ?Sized>(
    x: &[f64],
    eps: f64,
    measure_eps: f64,
    eta: f64,
    rng: &mut R,
) -> PartitionMap {
    let n = x.len();
    let threshold = eta * libm::sqrt(libm::log(n as f64)) / eps;
    let noisy: Vec<f64> = x
        .iter()
        .map(|v| {
            let y = v + laplace(1.0 / eps, rng);
            if y < threshold {
                0.0
            } else {
                y
            }
        })
        .collect();
    ahp_cluster(&noisy, 1.0 / measure_eps)
}

/// Dawa partition of a 1-D vector source; charges `eps` to `sv`.
pub fn dawa_partition(kernel: &mut Kernel, sv: SourceRef, eps: &Epsilon, measure_eps: f64) -> Result<PartitionMap> {
    match kernel.measure(sv, &QueryOp::DawaPartition { measure_eps }, eps)? {
        Answer::Partition(p) => Ok(p),
        _ => Err(Error::Type("unexpected answer kind".into())),
    }
}

/// AHP partition of a vector source; charges `eps` to `sv`.
pub fn ahp_partition(
    kernel: &mut Kernel,
    sv: SourceRef,
    eps: &Epsilon,
    measure_eps: f64,
    eta: f64,
) -> Result<PartitionMap> {
    match kernel.measure(sv, &QueryOp::AhpPartition { measure_eps, eta }, eps)? {
        Answer::Partition(p) => Ok(p),
        _ => Err(Error::Type("unexpected answer kind".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Dense;

    #[test]
    fn workload_columns_grouped() {
        let w = LinOp::dense(Dense::from_rows(&[vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap());
        let p = workload_based(&w, 1).unwrap();
        assert_eq!(p.group_of(), &[0, 0, 1]);
        assert_eq!(workload_based(&LinOp::identity(5), 1).unwrap().p(), 5);
    }

    #[test]
    fn zero_columns_form_one_group() {
        let w = LinOp::dense(Dense::from_rows(&[vec![1.0, 0.0, 1.0, 0.0]]).unwrap());
        assert_eq!(workload_based(&w, 0).unwrap().group_of(), &[0, 1, 0, 1]);
    }

    #[test]
    fn stripes_and_grids() {
        let s = stripe_partition(&[2, 3], 1).unwrap();
        assert_eq!(s.group_of(), &[0, 0, 0, 1, 1, 1]);
        let s = stripe_partition(&[2, 3], 0).unwrap();
        assert_eq!(s.group_of(), &[0, 1, 2, 0, 1, 2]);
        assert!(stripe_partition(&[2, 3], 2).is_err());
        let g = grid_partition(&[4, 4], &[2, 2]).unwrap();
        assert_eq!(g.sizes(), vec![4; 4]);
    }

    #[test]
    fn dawa_noiseless_buckets() {
        let p = dawa_noiseless(&[5.0, 5.0, 5.0, 9.0, 9.0, 9.0], 100.0);
        assert_eq!(p.groups(), vec![vec![0, 1], vec![2], vec![3], vec![4, 5]]);
        let p = dawa_noiseless(&[3.0; 8], 1.0);
        assert_eq!(p.p(), 1);
    }

    #[test]
    fn ahp_noiseless_clusters() {
        let p = ahp_noiseless(&[0.0, 1000.0, 0.0, 1000.0, 0.0], 1.0);
        assert_eq!(p.groups(), vec![vec![0, 2, 4], vec![1, 3]]);
        assert_eq!(ahp_noiseless(&[7.0], 1.0).p(), 1);
        assert_eq!(ahp_noiseless(&[4.0; 6], 1.0).p(), 1);
    }
}
