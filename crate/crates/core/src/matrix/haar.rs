//! Unnormalized Haar wavelet with `±1` coefficients.
//!
//! Row 0 is the total; row `2^k + j` is the detail coefficient of block `j`
//! at level `k` (blocks of width `n / 2^k`): the left half sum minus the
//! right half sum. Both directions run in `O(n)`.

use alloc::vec;
use alloc::vec::Vec;

pub(crate) fn forward(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    debug_assert!(n.is_power_of_two());
    let mut out = vec![0.0; n];
    let mut sums = x.to_vec();
    let mut width = n;
    while width > 1 {
        let half = width / 2;
        for j in 0..half {
            let (l, r) = (sums[2 * j], sums[2 * j + 1]);
            out[half + j] = l - r;
            sums[j] = l + r;
        }
        width = half;
        sums.truncate(width);
    }
    out[0] = sums[0];
    out
}

pub(crate) fn adjoint(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    debug_assert!(n.is_power_of_two());
    let mut v = vec![c[0]];
    let mut blocks = 1;
    while blocks < n {
        let mut next = vec![0.0; 2 * blocks];
        for j in 0..blocks {
            let d = c[blocks + j];
            next[2 * j] = v[j] + d;
            next[2 * j + 1] = v[j] - d;
        }
        v = next;
        blocks *= 2;
    }
    v
}

/// `1 + log2(n)`: every column touches the total row and one detail row per level.
pub(crate) fn l1_sensitivity(n: usize) -> f64 {
    1.0 + n.trailing_zeros() as f64
}
