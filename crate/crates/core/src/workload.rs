//! Named workloads and random range-query generators.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::matrix::LinOp;
use crate::selection::{self, Selector};

/// `count` random inclusive ranges `[lo, hi]` over `0..n`.
pub fn random_ranges(n: usize, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            (a.min(b), a.max(b))
        })
        .collect()
}

/// `count` random range queries over a 1-D domain.
pub fn random_range_workload(n: usize, count: usize, seed: u64) -> Result<LinOp> {
    if n == 0 || count == 0 {
        return Err(Error::invalid("range workload needs a domain and a query count"));
    }
    LinOp::range_queries(n, &random_ranges(n, count, seed))
}

/// `count` random axis-aligned boxes over a k-D domain.
pub fn random_box_workload(shape: &[usize], count: usize, seed: u64) -> Result<LinOp> {
    if shape.is_empty() || shape.contains(&0) || count == 0 {
        return Err(Error::invalid("box workload needs a domain and a query count"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let boxes: Vec<Vec<(usize, usize)>> = (0..count)
        .map(|_| {
            shape
                .iter()
                .map(|&n| {
                    let a = rng.gen_range(0..n);
                    let b = rng.gen_range(0..n);
                    (a.min(b), a.max(b))
                })
                .collect()
        })
        .collect();
    LinOp::box_queries(shape, &boxes)
}

/// Every range `[lo, hi]` over `0..n`.
pub fn all_ranges(n: usize) -> Result<LinOp> {
    let ranges: Vec<_> = (0..n).flat_map(|lo| (lo..n).map(move |hi| (lo, hi))).collect();
    LinOp::range_queries(n, &ranges)
}

/// Marginal over the listed axes: identity on kept axes, total elsewhere.
pub fn marginal(shape: &[usize], keep: &[usize]) -> Result<LinOp> {
    if let Some(&a) = keep.iter().find(|&&a| a >= shape.len()) {
        return Err(Error::Config(format!("marginal axis {a} out of range")));
    }
    let factors = shape
        .iter()
        .enumerate()
        .map(|(a, &n)| if keep.contains(&a) { LinOp::identity(n) } else { LinOp::total(n) })
        .collect();
    LinOp::kron_all(factors)
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Config(format!("bad {what} `{s}`")))
}

/// Parses a workload name for a domain of the given shape.
///
/// Names: `identity`, `total`, `prefix`, `h2`, `hb`, `wavelet`, `quadtree`,
/// `allrange` (every range, 1-D), `allrange:<count>` (random ranges or boxes),
/// `stripe:<axis>:<selector>` and `marginals:<axes>[;<axes>...]` where axes
/// are comma separated (`marginals:0;1` is both 1-way marginals, `marginals:`
/// alone is the total).
pub fn parse_workload(name: &str, shape: &[usize], seed: u64) -> Result<LinOp> {
    let n: usize = shape.iter().product();
    if n == 0 {
        return Err(Error::invalid("empty domain"));
    }
    let mut parts = name.splitn(3, ':');
    let head = parts.next().unwrap_or_default();
    match head {
        "identity" => Ok(selection::identity_sel(n)),
        "total" => Ok(selection::total_sel(n)),
        "prefix" => {
            let factors = shape.iter().map(|&k| LinOp::prefix(k)).collect();
            LinOp::kron_all(factors)
        }
        "h2" => selection::h2_sel(n),
        "hb" => selection::hb_sel(n),
        "wavelet" => selection::wavelet_sel(n),
        "quadtree" => {
            let s2 = if shape.len() == 1 { [shape[0], 1] } else { [shape[0], shape[1]] };
            if shape.len() > 2 {
                return Err(Error::Config("quadtree workload needs a 1-D or 2-D domain".into()));
            }
            selection::quadtree_sel(&s2)
        }
        "allrange" => match parts.next() {
            None => all_ranges(n),
            Some(c) => {
                let count = parse_usize(c, "query count")?;
                if shape.len() == 1 {
                    random_range_workload(n, count, seed)
                } else {
                    random_box_workload(shape, count, seed)
                }
            }
        },
        "stripe" => {
            let axis = parse_usize(parts.next().unwrap_or_default(), "stripe axis")?;
            let sub = Selector::parse(parts.next().unwrap_or("identity"))?;
            if axis >= shape.len() {
                return Err(Error::Config(format!("stripe axis {axis} out of range")));
            }
            selection::stripe_select(shape, axis, &sub.build(shape[axis])?)
        }
        "marginals" => {
            let spec = name.strip_prefix("marginals:").unwrap_or("");
            let mut ops = Vec::new();
            for group in spec.split(';') {
                let keep = group
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse_usize(s, "marginal axis"))
                    .collect::<Result<Vec<_>>>()?;
                ops.push(marginal(shape, &keep)?);
            }
            if ops.len() == 1 {
                Ok(ops.pop().unwrap())
            } else {
                LinOp::union(ops)
            }
        }
        _ => Err(Error::Config(format!("unknown workload `{name}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_workloads() {
        assert_eq!(parse_workload("identity", &[4], 0).unwrap().shape(), (4, 4));
        assert_eq!(parse_workload("allrange", &[4], 0).unwrap().rows(), 10);
        assert_eq!(parse_workload("allrange:7", &[4, 4], 0).unwrap().shape(), (7, 16));
        let m = parse_workload("marginals:0;1", &[2, 3], 0).unwrap();
        assert_eq!(m.matvec(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(), [6.0, 15.0, 5.0, 7.0, 9.0]);
        let s = parse_workload("stripe:1:total", &[2, 3], 0).unwrap();
        assert_eq!(s.matvec(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(), [6.0, 15.0]);
        assert!(parse_workload("nope", &[4], 0).is_err());
        assert!(parse_workload("stripe:2:h2", &[2, 3], 0).is_err());
    }

    #[test]
    fn random_ranges_are_seeded() {
        assert_eq!(random_ranges(100, 5, 9), random_ranges(100, 5, 9));
        assert!(random_ranges(100, 50, 1).iter().all(|&(a, b)| a <= b && b < 100));
    }
}
