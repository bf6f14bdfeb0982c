//! Seeded synthetic histograms for experiments and tests.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// Draws `total` records from the (unnormalized) density and returns the
/// integer histogram.
pub fn sample_counts(density: &[f64], total: u64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if density.is_empty() || density.iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
        return Err(Error::invalid("density must be finite and nonnegative"));
    }
    let mut cdf = Vec::with_capacity(density.len());
    let mut acc = 0.0;
    for &d in density {
        acc += d;
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::invalid("density has zero mass"));
    }
    let mut counts = vec![0.0; density.len()];
    for _ in 0..total {
        let u = rng.gen::<f64>() * acc;
        let i = cdf.partition_point(|&c| c <= u).min(density.len() - 1);
        counts[i] += 1.0;
    }
    Ok(counts)
}

/// Step function with `pieces` random levels (some of them empty).
pub fn piecewise_density(n: usize, pieces: usize, rng: &mut impl Rng) -> Vec<f64> {
    let pieces = pieces.clamp(1, n);
    let mut cuts: Vec<usize> = (0..pieces - 1).map(|_| rng.gen_range(1..n.max(2))).collect();
    cuts.push(0);
    cuts.push(n);
    cuts.sort_unstable();
    cuts.dedup();
    let mut d = vec![0.0; n];
    for w in cuts.windows(2) {
        let level = if rng.gen::<f64>() < 0.3 { 0.0 } else { rng.gen::<f64>() };
        d[w[0]..w[1]].iter_mut().for_each(|v| *v = level);
    }
    if d.iter().all(|&v| v == 0.0) {
        d.iter_mut().for_each(|v| *v = 1.0);
    }
    d
}

/// Sum of `k` Gaussian bumps with random centres and widths.
pub fn mixture_density(n: usize, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let bumps: Vec<(f64, f64, f64)> = (0..k.max(1))
        .map(|_| {
            let c = rng.gen::<f64>() * n as f64;
            let w = (0.005 + 0.1 * rng.gen::<f64>()) * n as f64;
            (c, w.max(0.5), 0.2 + rng.gen::<f64>())
        })
        .collect();
    (0..n)
        .map(|i| {
            bumps
                .iter()
                .map(|&(c, w, a)| {
                    let z = (i as f64 - c) / w;
                    a * libm::exp(-0.5 * z * z)
                })
                .sum::<f64>()
                + 1e-9
        })
        .collect()
}

/// Power-law weights over a random permutation of the cells.
pub fn zipf_density(n: usize, s: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        idx.swap(i, rng.gen_range(0..=i));
    }
    let mut d = vec![0.0; n];
    for (rank, &i) in idx.iter().enumerate() {
        d[i] = libm::pow(rank as f64 + 1.0, -s);
    }
    d
}

/// Named 1-D dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub values: Vec<f64>,
}

/// A suite of `count` 1-D histograms of varied shape, each with `total`
/// records over `n` cells.
pub fn suite_1d(n: usize, total: u64, count: usize, seed: u64) -> Result<Vec<Dataset>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let (kind, density) = match i % 4 {
                0 => ("piecewise", piecewise_density(n, 4 + i, &mut rng)),
                1 => ("mixture", mixture_density(n, 1 + i % 5, &mut rng)),
                2 => ("zipf", zipf_density(n, 1.1, &mut rng)),
                _ => ("sparse-piecewise", piecewise_density(n, 2 + i / 2, &mut rng)),
            };
            Ok(Dataset {
                name: format!("{kind}-{i}"),
                values: sample_counts(&density, total, &mut rng)?,
            })
        })
        .collect()
}

/// Row-major 2-D histogram from a mixture of axis-aligned Gaussian bumps.
pub fn mixture_2d(shape: (usize, usize), k: usize, total: u64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (r, c) = shape;
    let a = mixture_density(r, k, &mut rng);
    let b = mixture_density(c, k, &mut rng);
    let noise: Vec<f64> = (0..r * c).map(|_| 0.5 + rng.gen::<f64>()).collect();
    let density: Vec<f64> = (0..r * c).map(|i| a[i / c] * b[i % c] * noise[i]).collect();
    sample_counts(&density, total, &mut rng)
}
