//! Query selection: measurement strategies built as [`LinOp`]s.

mod greedy_h;

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

pub use greedy_h::{greedy_h_sel, greedy_h_weights};

use crate::error::{Error, Result};
use crate::kernel::{Answer, Epsilon, Kernel, QueryOp, SourceRef};
use crate::matrix::{Csr, LinOp};
use crate::transform::PartitionMap;

pub fn identity_sel(n: usize) -> LinOp {
    LinOp::identity(n)
}

pub fn total_sel(n: usize) -> LinOp {
    LinOp::total(n)
}

pub fn prefix_sel(n: usize) -> LinOp {
    LinOp::prefix(n)
}

pub fn wavelet_sel(n: usize) -> Result<LinOp> {
    LinOp::wavelet(n)
}

/// Half-open intervals of the internal nodes of a `b`-ary tree over `0..n`
/// in breadth-first order. Each node of width `w` has children of width
/// `ceil(w / b)` (the last child takes what is left).
pub fn tree_intervals(n: usize, b: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    if n > 1 {
        queue.push_back((0, n));
    }
    while let Some((lo, hi)) = queue.pop_front() {
        out.push((lo, hi));
        let step = (hi - lo).div_ceil(b);
        let mut a = lo;
        while a < hi {
            let c = (a + step).min(hi);
            if c - a > 1 {
                queue.push_back((a, c));
            }
            a = c;
        }
    }
    out
}

/// Tree of range queries with branching factor `b`: every internal node as
/// a difference of prefix sums, followed by the leaves.
pub fn hierarchy_sel(n: usize, b: usize) -> Result<LinOp> {
    if n == 0 || b < 2 {
        return Err(Error::invalid("hierarchy needs n >= 1 and branching >= 2"));
    }
    let internal = tree_intervals(n, b);
    if internal.is_empty() {
        return Ok(LinOp::identity(n));
    }
    let ranges: Vec<_> = internal.iter().map(|&(lo, hi)| (lo, hi - 1)).collect();
    LinOp::union(vec![LinOp::range_queries(n, &ranges)?, LinOp::identity(n)])
}

pub fn h2_sel(n: usize) -> Result<LinOp> {
    hierarchy_sel(n, 2)
}

/// Branching factor minimizing `2 h^3 (b - 1)` where `h` is the least
/// height with `b^h >= n`; the smallest such `b` wins ties.
pub fn hb_branching(n: usize) -> usize {
    if n <= 2 {
        return 2;
    }
    let mut best = (u128::MAX, 2);
    for b in 2..=n {
        let mut h = 0u32;
        let mut reach = 1u128;
        while reach < n as u128 {
            reach *= b as u128;
            h += 1;
        }
        let cost = 2 * (h as u128).pow(3) * (b as u128 - 1);
        if cost < best.0 {
            best = (cost, b);
        }
        if h == 1 {
            break;
        }
    }
    best.1
}

pub fn hb_sel(n: usize) -> Result<LinOp> {
    hierarchy_sel(n, hb_branching(n))
}

/// Rectangle `[r0, r1) x [c0, c1)` split into up to four quadrants.
fn quadrants(r: (usize, usize), c: (usize, usize)) -> Vec<((usize, usize), (usize, usize))> {
    let halves = |(lo, hi): (usize, usize)| {
        if hi - lo > 1 {
            let mid = lo + (hi - lo).div_ceil(2);
            vec![(lo, mid), (mid, hi)]
        } else {
            vec![(lo, hi)]
        }
    };
    let mut out = Vec::new();
    for rr in halves(r) {
        for cc in halves(c) {
            out.push((rr, cc));
        }
    }
    out
}

/// Recursive quadrant decomposition of a 2-D domain down to unit cells.
pub fn quadtree_sel(shape: &[usize]) -> Result<LinOp> {
    let (rows, cols) = two_d(shape)?;
    let mut boxes = Vec::new();
    let mut queue = VecDeque::new();
    if rows * cols > 1 {
        queue.push_back(((0, rows), (0, cols)));
    }
    while let Some((r, c)) = queue.pop_front() {
        boxes.push(vec![(r.0, r.1 - 1), (c.0, c.1 - 1)]);
        for (rr, cc) in quadrants(r, c) {
            if (rr.1 - rr.0) * (cc.1 - cc.0) > 1 {
                queue.push_back((rr, cc));
            }
        }
    }
    let n = rows * cols;
    if boxes.is_empty() {
        return Ok(LinOp::identity(n));
    }
    LinOp::union(vec![LinOp::box_queries(&[rows, cols], &boxes)?, LinOp::identity(n)])
}

pub(crate) fn two_d(shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [r, c] if *r > 0 && *c > 0 => Ok((*r, *c)),
        _ => Err(Error::invalid("a 2-D domain shape is required")),
    }
}

/// Rectangular blocks over a k-D domain. Along each axis the blocks have
/// equal width except the last, which absorbs the remainder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub domain_shape: Vec<usize>,
    pub cell_size: Vec<usize>,
    counts: Vec<usize>,
}

impl GridSpec {
    pub fn new(domain_shape: Vec<usize>, cell_size: Vec<usize>) -> Result<Self> {
        if domain_shape.len() != cell_size.len() || domain_shape.is_empty() {
            return Err(Error::dim("grid rank", domain_shape.len(), cell_size.len()));
        }
        if cell_size.iter().zip(&domain_shape).any(|(&c, &n)| c == 0 || c > n) {
            return Err(Error::invalid("grid cell size must be in 1..=axis size"));
        }
        let counts = domain_shape.iter().zip(&cell_size).map(|(&n, &c)| n / c).collect();
        Ok(GridSpec { domain_shape, cell_size, counts })
    }

    /// Grid with `counts[i]` blocks along axis `i` (clamped to the axis size).
    pub fn with_counts(domain_shape: Vec<usize>, counts: &[usize]) -> Result<Self> {
        if domain_shape.len() != counts.len() {
            return Err(Error::dim("grid rank", domain_shape.len(), counts.len()));
        }
        let counts: Vec<usize> = domain_shape.iter().zip(counts).map(|(&n, &g)| g.clamp(1, n.max(1))).collect();
        let cell = domain_shape.iter().zip(&counts).map(|(&n, &g)| (n / g).max(1)).collect();
        let mut spec = GridSpec::new(domain_shape, cell)?;
        spec.counts = counts;
        Ok(spec)
    }

    /// Number of blocks along each axis.
    pub fn counts(&self) -> Vec<usize> {
        self.counts.clone()
    }

    /// Block boundaries `[lo, hi)` along `axis`.
    pub fn bounds(&self, axis: usize) -> Vec<(usize, usize)> {
        let n = self.domain_shape[axis];
        let c = self.cell_size[axis];
        let g = self.counts[axis];
        (0..g).map(|i| (i * c, if i + 1 == g { n } else { (i + 1) * c })).collect()
    }

    /// Shape of every block, in row-major block order.
    pub fn block_shapes(&self) -> Vec<Vec<usize>> {
        let per_axis: Vec<Vec<usize>> = (0..self.domain_shape.len())
            .map(|a| self.bounds(a).iter().map(|(lo, hi)| hi - lo).collect())
            .collect();
        let mut out = vec![Vec::new()];
        for widths in per_axis {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    widths.iter().map(move |&w| {
                        let mut p = prefix.clone();
                        p.push(w);
                        p
                    })
                })
                .collect();
        }
        out
    }

    /// Cell-to-block map with row-major block ids.
    pub fn partition(&self) -> PartitionMap {
        let d = self.domain_shape.len();
        let lookup: Vec<Vec<usize>> = (0..d)
            .map(|a| {
                let mut v = vec![0; self.domain_shape[a]];
                for (b, (lo, hi)) in self.bounds(a).into_iter().enumerate() {
                    v[lo..hi].iter_mut().for_each(|x| *x = b);
                }
                v
            })
            .collect();
        let counts = self.counts();
        let n: usize = self.domain_shape.iter().product();
        let mut group_of = Vec::with_capacity(n);
        let mut coord = vec![0usize; d];
        for _ in 0..n {
            let mut g = 0;
            for a in 0..d {
                g = g * counts[a] + lookup[a][coord[a]];
            }
            group_of.push(g);
            for a in (0..d).rev() {
                coord[a] += 1;
                if coord[a] < self.domain_shape[a] {
                    break;
                }
                coord[a] = 0;
            }
        }
        PartitionMap::new(group_of).expect("every block is non-empty")
    }

    /// One 0/1 row per block.
    pub fn selector(&self) -> LinOp {
        self.partition().to_linop()
    }
}

/// Blocks per side of a uniform grid: `ceil(sqrt(n_est * eps / 10))`.
pub fn uniform_grid_size(n_est: f64, eps: f64) -> Result<usize> {
    if !(n_est > 0.0) || !(eps > 0.0) {
        return Err(Error::invalid("uniform grid needs a positive count estimate and budget"));
    }
    Ok(libm::ceil(libm::sqrt(n_est * eps / 10.0)).max(1.0) as usize)
}

pub fn uniform_grid_spec(shape: &[usize], n_est: f64, eps: f64) -> Result<GridSpec> {
    let (r, c) = two_d(shape)?;
    let g = uniform_grid_size(n_est, eps)?;
    GridSpec::with_counts(vec![r, c], &[g, g])
}

/// Disjoint `g x g` block counts over a 2-D domain.
pub fn uniform_grid_sel(shape: &[usize], n_est: f64, eps: f64) -> Result<LinOp> {
    Ok(uniform_grid_spec(shape, n_est, eps)?.selector())
}

/// Sub-grid size for one coarse cell: `max(1, ceil(sqrt(count * eps2 / 5)))`.
pub fn adaptive_grid_size(count: f64, eps2: f64) -> usize {
    libm::ceil(libm::sqrt(count.max(0.0) * eps2 / 5.0)).max(1.0) as usize
}

/// Sub-grid selector local to one coarse cell of shape `cell_shape`.
pub fn adaptive_cell_sel(cell_shape: &[usize], count: f64, eps2: f64) -> Result<LinOp> {
    let g = adaptive_grid_size(count, eps2);
    let counts = vec![g; cell_shape.len()];
    Ok(GridSpec::with_counts(cell_shape.to_vec(), &counts)?.selector())
}

/// Adaptive refinement of `coarse` over the full domain: each coarse cell
/// is divided according to its noisy count.
pub fn adaptive_grid_sel(coarse: &GridSpec, coarse_counts: &[f64], eps2: f64) -> Result<LinOp> {
    let shapes = coarse.block_shapes();
    if shapes.len() != coarse_counts.len() {
        return Err(Error::dim("coarse counts", shapes.len(), coarse_counts.len()));
    }
    let groups = coarse.partition().groups();
    let n: usize = coarse.domain_shape.iter().product();
    let mut trip = Vec::new();
    let mut row = 0;
    for ((cells, shape), &count) in groups.iter().zip(&shapes).zip(coarse_counts) {
        let local = adaptive_cell_sel(shape, count, eps2)?;
        let pm = match local.body() {
            crate::matrix::Body::Sparse(s) => s.clone(),
            _ => unreachable!("grid selectors are sparse"),
        };
        for (i, j, v) in pm.triplets() {
            trip.push((row + i, cells[j], v));
        }
        row += pm.rows();
    }
    Ok(LinOp::sparse(Csr::from_triplets(row, n, &trip)?))
}

/// One-dimensional selector applied along a single axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    Identity,
    Total,
    Prefix,
    H2,
    Hb,
    Wavelet,
}

impl Selector {
    pub fn build(self, n: usize) -> Result<LinOp> {
        match self {
            Selector::Identity => Ok(identity_sel(n)),
            Selector::Total => Ok(total_sel(n)),
            Selector::Prefix => Ok(prefix_sel(n)),
            Selector::H2 => h2_sel(n),
            Selector::Hb => hb_sel(n),
            Selector::Wavelet => wavelet_sel(n),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => Selector::Identity,
            "total" => Selector::Total,
            "prefix" => Selector::Prefix,
            "h2" => Selector::H2,
            "hb" => Selector::Hb,
            "wavelet" => Selector::Wavelet,
            _ => return Err(Error::Config(alloc::format!("unknown selector `{s}`"))),
        })
    }
}

/// `sub` on `axis`, identity on every other axis.
pub fn stripe_select(shape: &[usize], axis: usize, sub: &LinOp) -> Result<LinOp> {
    if axis >= shape.len() {
        return Err(Error::invalid("stripe axis out of range"));
    }
    if sub.cols() != shape[axis] {
        return Err(Error::dim("stripe selector", shape[axis], sub.cols()));
    }
    let factors = shape
        .iter()
        .enumerate()
        .map(|(a, &n)| if a == axis { sub.clone() } else { LinOp::identity(n) })
        .collect();
    LinOp::kron_all(factors)
}

/// Exponential mechanism over workload rows scored by `|W (x - estimate)|`.
pub(crate) fn worst_approx_index<R: RngCore + ?Sized>(
    w: &LinOp,
    x: &[f64],
    estimate: &[f64],
    eps: f64,
    rng: &mut R,
) -> Result<usize> {
    let diff: Vec<f64> = x.iter().zip(estimate).map(|(a, b)| a - b).collect();
    let scores = w.matvec(&diff)?;
    let delta = w.max_abs_entry()?;
    let logits: Vec<f64> = scores
        .iter()
        .map(|s| if delta > 0.0 { eps * s.abs() / (2.0 * delta) } else { 0.0 })
        .collect();
    Ok(sample_exponential(&logits, rng))
}

/// Index drawn with probability proportional to `exp(logits[i])`.
pub(crate) fn sample_exponential<R: RngCore + ?Sized>(logits: &[f64], rng: &mut R) -> usize {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let weights: Vec<f64> = logits.iter().map(|l| libm::exp(l - m)).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Private selection of the workload row worst approximated by `estimate`.
/// Returns the row index and the row as a `1 x n` operator.
pub fn worst_approx(
    kernel: &mut Kernel,
    sv: SourceRef,
    workload: &LinOp,
    estimate: &[f64],
    eps: &Epsilon,
) -> Result<(usize, LinOp)> {
    let op = QueryOp::WorstApprox {
        workload: workload.clone(),
        estimate: estimate.to_vec(),
    };
    match kernel.measure(sv, &op, eps)? {
        Answer::Selected(i) => Ok((i, row_op(workload, i)?)),
        _ => Err(Error::Type("unexpected answer kind".into())),
    }
}

/// Row `i` of `w` as a sparse `1 x n` operator.
pub fn row_op(w: &LinOp, i: usize) -> Result<LinOp> {
    let r = w.row(i)?;
    let trip: Vec<_> = r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (0, j, v)).collect();
    Ok(LinOp::sparse(Csr::from_triplets(1, w.cols(), &trip)?))
}
