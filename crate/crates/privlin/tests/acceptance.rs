//! Acceptance checks. Each test prints one `criterion N ...: PASS|FAIL`
//! line and then asserts it. Tests share a lock so timings do not overlap.

use std::collections::HashMap;
use std::hint::black_box;
use std::process::Command;
use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use privlin::io::{write_vector, VectorFormat};
use privlin_core::clock::NullClock;
use privlin_core::eval::{default_scale, expected_error_oracle, per_query_error, synthetic, unit_noise_error};
use privlin_core::inference::{default_max_iter, least_squares, nnls, MeasurementSet};
use privlin_core::kernel::{Outcome, SourceKind};
use privlin_core::matrix::{dense_cap_bytes, Csr, Dense};
use privlin_core::measurement::{noisy_count, sample_laplace, vector_laplace};
use privlin_core::partition::{dawa_partition, stripe_partition, workload_based};
use privlin_core::plans::{
    hb_striped_kron_strategy, hb_striped_strategy, run_plan, run_with_workload_reduction, PlanKind, PlanParams,
};
use privlin_core::selection::{greedy_h_sel, greedy_h_weights, h2_sel, hb_branching, hb_sel, quadtree_sel, stripe_select, worst_approx};
use privlin_core::table::{Attribute, Binning, Predicate, Schema, Table, Value};
use privlin_core::transform::Transform;
use privlin_core::workload::random_range_workload;
use privlin_core::{DataVector, Epsilon, Error, Kernel, LinOp, PartitionMap};

type M = DMatrix<f64>;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

// written to the raw stderr handle so the line survives libtest's capture
fn verdict(id: u32, name: &str, ok: bool, detail: &str) {
    let line = format!("criterion {id} ({name}): {} | {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::Write::write_all(&mut std::io::stderr(), line.as_bytes());
    assert!(ok, "criterion {id} failed: {detail}");
}

fn eps(s: &str) -> Epsilon {
    s.parse().unwrap()
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn gauss(r: &mut ChaCha20Rng) -> f64 {
    r.sample(StandardNormal)
}

// ---------------------------------------------------------------------------
// dense oracles built from the definitions

fn prefix_m(n: usize) -> M {
    M::from_fn(n, n, |i, j| if j <= i { 1.0 } else { 0.0 })
}

fn suffix_m(n: usize) -> M {
    M::from_fn(n, n, |i, j| if j >= i { 1.0 } else { 0.0 })
}

/// Row 0 is the total; row `2^k + b` is block `b` of width `n / 2^k`, left
/// half minus right half.
fn haar_m(n: usize) -> M {
    let mut m = M::zeros(n, n);
    for j in 0..n {
        m[(0, j)] = 1.0;
    }
    let mut blocks = 1;
    while blocks < n {
        let w = n / blocks;
        for b in 0..blocks {
            for j in 0..w {
                m[(blocks + b, b * w + j)] = if j < w / 2 { 1.0 } else { -1.0 };
            }
        }
        blocks *= 2;
    }
    m
}

fn ranges_m(n: usize, ranges: &[(usize, usize)]) -> M {
    let mut m = M::zeros(ranges.len(), n);
    for (i, &(lo, hi)) in ranges.iter().enumerate() {
        for j in lo..=hi {
            m[(i, j)] = 1.0;
        }
    }
    m
}

fn vstack(parts: &[M]) -> M {
    let cols = parts[0].ncols();
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut m = M::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        m.view_mut((r, 0), (p.nrows(), cols)).copy_from(p);
        r += p.nrows();
    }
    m
}

/// Internal nodes of a `b`-ary tree over `[0, n)`, breadth first, each
/// child `ceil(w / b)` wide except the last.
fn tree_nodes(n: usize, b: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if n > 1 {
        out.push((0, n));
    }
    let mut i = 0;
    while i < out.len() {
        let (lo, hi) = out[i];
        let step = (hi - lo).div_ceil(b);
        let mut a = lo;
        while a < hi {
            let c = (a + step).min(hi);
            if c - a > 1 {
                out.push((a, c));
            }
            a = c;
        }
        i += 1;
    }
    out
}

fn hierarchy_m(n: usize, b: usize) -> M {
    let nodes: Vec<_> = tree_nodes(n, b).iter().map(|&(lo, hi)| (lo, hi - 1)).collect();
    if nodes.is_empty() {
        return M::identity(n, n);
    }
    vstack(&[ranges_m(n, &nodes), M::identity(n, n)])
}

fn boxes_m(shape: (usize, usize), boxes: &[[(usize, usize); 2]]) -> M {
    let (r, c) = shape;
    let mut m = M::zeros(boxes.len(), r * c);
    for (i, b) in boxes.iter().enumerate() {
        for a in b[0].0..=b[0].1 {
            for k in b[1].0..=b[1].1 {
                m[(i, a * c + k)] = 1.0;
            }
        }
    }
    m
}

fn quadtree_m(r: usize, c: usize) -> M {
    let split = |(lo, hi): (usize, usize)| {
        if hi - lo > 1 {
            let mid = lo + (hi - lo).div_ceil(2);
            vec![(lo, mid), (mid, hi)]
        } else {
            vec![(lo, hi)]
        }
    };
    let mut rects = Vec::new();
    if r * c > 1 {
        rects.push(((0, r), (0, c)));
    }
    let mut i = 0;
    while i < rects.len() {
        let (rr, cc) = rects[i];
        for a in split(rr) {
            for b in split(cc) {
                if (a.1 - a.0) * (b.1 - b.0) > 1 {
                    rects.push((a, b));
                }
            }
        }
        i += 1;
    }
    if rects.is_empty() {
        return M::identity(r * c, r * c);
    }
    let boxes: Vec<_> = rects.iter().map(|(a, b)| [(a.0, a.1 - 1), (b.0, b.1 - 1)]).collect();
    vstack(&[boxes_m((r, c), &boxes), M::identity(r * c, r * c)])
}

fn greedy_h_m(n: usize, weights: &[f64]) -> M {
    let mut parts = Vec::new();
    for (k, &wk) in weights.iter().enumerate().rev() {
        let s = 1usize << k;
        let ranges: Vec<_> = (0..n).step_by(s).map(|lo| (lo, (lo + s).min(n) - 1)).collect();
        parts.push(ranges_m(n, &ranges) * wk);
    }
    vstack(&parts)
}

fn from_core(d: &Dense) -> M {
    M::from_row_slice(d.rows(), d.cols(), d.data())
}

fn to_core(m: &M) -> Dense {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    if rows.is_empty() {
        return Dense::zeros(0, m.ncols());
    }
    Dense::from_rows(&rows).unwrap()
}

fn random_ranges(n: usize, count: usize, r: &mut ChaCha20Rng) -> Vec<(usize, usize)> {
    (0..count)
        .map(|_| {
            let a = r.gen_range(0..n);
            let b = r.gen_range(0..n);
            (a.min(b), a.max(b))
        })
        .collect()
}

fn random_sparse(rows: usize, cols: usize, r: &mut ChaCha20Rng) -> (Csr, M) {
    let mut m = M::zeros(rows, cols);
    let mut trip = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if r.gen_bool(0.3) {
                let v = gauss(r);
                m[(i, j)] = v;
                trip.push((i, j, v));
            }
        }
    }
    (Csr::from_triplets(rows, cols, &trip).unwrap(), m)
}

fn random_dense(rows: usize, cols: usize, r: &mut ChaCha20Rng) -> M {
    M::from_fn(rows, cols, |_, _| gauss(r))
}

fn close(a: f64, b: f64, exact: bool) -> bool {
    if exact {
        a == b
    } else {
        (a - b).abs() <= 1e-10 * b.abs().max(1.0)
    }
}

fn all_close(a: &[f64], b: &[f64], exact: bool) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y, exact))
}

fn max_col_l1(m: &M) -> f64 {
    (0..m.ncols()).map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Compares every access path of `op` with its dense oracle. Returns a
/// description of the first mismatch.
fn check_op(name: &str, op: &LinOp, m: &M, r: &mut ChaCha20Rng) -> Option<String> {
    let binary = m.iter().all(|&v| v == 0.0 || v == 1.0);
    if op.shape() != (m.nrows(), m.ncols()) {
        return Some(format!("{name}: shape {:?} vs {:?}", op.shape(), m.shape()));
    }
    let x: Vec<f64> = (0..m.ncols()).map(|_| r.gen_range(-5..=5) as f64).collect();
    let u: Vec<f64> = (0..m.nrows()).map(|_| r.gen_range(-5..=5) as f64).collect();
    let want_x: Vec<f64> = (m * M::from_column_slice(x.len(), 1, &x)).iter().copied().collect();
    let want_u: Vec<f64> = (m.transpose() * M::from_column_slice(u.len(), 1, &u)).iter().copied().collect();
    if !all_close(&op.matvec(&x).unwrap(), &want_x, binary) {
        return Some(format!("{name}: matvec"));
    }
    if !all_close(&op.rmatvec(&u).unwrap(), &want_u, binary) {
        return Some(format!("{name}: rmatvec"));
    }
    if !all_close(&op.transpose().matvec(&u).unwrap(), &want_u, binary) {
        return Some(format!("{name}: transpose matvec"));
    }
    if !all_close(&op.transpose().rmatvec(&x).unwrap(), &want_x, binary) {
        return Some(format!("{name}: transpose rmatvec"));
    }
    if !close(op.sensitivity_l1().unwrap(), max_col_l1(m), binary) {
        return Some(format!("{name}: sensitivity {} vs {}", op.sensitivity_l1().unwrap(), max_col_l1(m)));
    }
    let l2 = (0..m.ncols()).map(|j| m.column(j).norm()).fold(0.0, f64::max);
    if (op.sensitivity_l2().unwrap() - l2).abs() > 1e-10 * l2.max(1.0) {
        return Some(format!("{name}: l2 sensitivity {} vs {l2}", op.sensitivity_l2().unwrap()));
    }
    let got = from_core(&op.materialize().unwrap());
    if !all_close(got.as_slice(), m.as_slice(), binary) {
        return Some(format!("{name}: materialize"));
    }
    let abs = m.map(f64::abs);
    let want_abs: Vec<f64> = (&abs * M::from_column_slice(x.len(), 1, &x)).iter().copied().collect();
    if !all_close(&op.abs().unwrap().matvec(&x).unwrap(), &want_abs, binary) {
        return Some(format!("{name}: abs"));
    }
    let sq = m.map(|v| v * v);
    let want_sq: Vec<f64> = (&sq * M::from_column_slice(x.len(), 1, &x)).iter().copied().collect();
    if !all_close(&op.sqr().unwrap().matvec(&x).unwrap(), &want_sq, binary) {
        return Some(format!("{name}: sqr"));
    }
    None
}

#[test]
fn criterion_01_implicit_matrix_fidelity() {
    let _g = serial();
    let t0 = Instant::now();
    let mut r = rng(1);
    let mut cases: Vec<(String, LinOp, M)> = Vec::new();
    for n in [1usize, 2, 3, 8, 13, 32, 37, 64] {
        cases.push((format!("identity {n}"), LinOp::identity(n), M::identity(n, n)));
        cases.push((format!("ones {n}"), LinOp::ones(3, n), M::from_element(3, n, 1.0)));
        cases.push((format!("total {n}"), LinOp::total(n), M::from_element(1, n, 1.0)));
        cases.push((format!("prefix {n}"), LinOp::prefix(n), prefix_m(n)));
        cases.push((format!("suffix {n}"), LinOp::suffix(n), suffix_m(n)));
        let rs = random_ranges(n, 12, &mut r);
        cases.push((format!("ranges {n}"), LinOp::range_queries(n, &rs).unwrap(), ranges_m(n, &rs)));
        cases.push((format!("h2 {n}"), h2_sel(n).unwrap(), hierarchy_m(n, 2)));
        cases.push((format!("hb {n}"), hb_sel(n).unwrap(), hierarchy_m(n, hb_branching(n))));
        let w = LinOp::range_queries(n, &random_ranges(n, 16, &mut r)).unwrap();
        let gw = greedy_h_weights(&w).unwrap();
        cases.push((format!("greedy_h {n}"), greedy_h_sel(&w).unwrap(), greedy_h_m(n, &gw)));
        let d = random_dense(5, n, &mut r);
        cases.push((format!("dense {n}"), LinOp::dense(to_core(&d)), d.clone()));
        let (s, sm) = random_sparse(7, n, &mut r);
        cases.push((format!("sparse {n}"), LinOp::sparse(s.clone()), sm.clone()));
        cases.push((
            format!("weighted prefix {n}"),
            LinOp::weighted(0.37, LinOp::prefix(n)),
            prefix_m(n) * 0.37,
        ));
        cases.push((
            format!("product prefix suffix {n}"),
            LinOp::product(LinOp::prefix(n), LinOp::suffix(n)).unwrap(),
            prefix_m(n) * suffix_m(n),
        ));
        let left = random_dense(4, 7, &mut r);
        cases.push((
            format!("product dense sparse {n}"),
            LinOp::product(LinOp::dense(to_core(&left)), LinOp::sparse(s)).unwrap(),
            &left * &sm,
        ));
        cases.push((
            format!("union {n}"),
            LinOp::union(vec![LinOp::prefix(n), LinOp::total(n), LinOp::weighted(2.5, LinOp::identity(n))]).unwrap(),
            vstack(&[prefix_m(n), M::from_element(1, n, 1.0), M::identity(n, n) * 2.5]),
        ));
        cases.push((format!("transposed dense {n}"), LinOp::dense(to_core(&d)).transpose(), d.transpose()));
        cases.push((format!("transposed prefix {n}"), LinOp::prefix(n).transpose(), prefix_m(n).transpose()));
        if n.is_power_of_two() {
            cases.push((format!("wavelet {n}"), LinOp::wavelet(n).unwrap(), haar_m(n)));
            cases.push((format!("wavelet transposed {n}"), LinOp::wavelet(n).unwrap().transpose(), haar_m(n).transpose()));
        }
    }
    for (a, b) in [(1usize, 1usize), (2, 3), (4, 4), (3, 5), (8, 8), (5, 7), (8, 4)] {
        cases.push((
            format!("kron prefix suffix {a}x{b}"),
            LinOp::kron(LinOp::prefix(a), LinOp::suffix(b)),
            prefix_m(a).kronecker(&suffix_m(b)),
        ));
        let da = random_dense(2, a, &mut r);
        let (sb, sbm) = random_sparse(3, b, &mut r);
        cases.push((
            format!("kron dense sparse {a}x{b}"),
            LinOp::kron(LinOp::dense(to_core(&da)), LinOp::sparse(sb)),
            da.kronecker(&sbm),
        ));
        let boxes: Vec<[(usize, usize); 2]> = (0..10)
            .map(|_| {
                let (r0, r1) = (r.gen_range(0..a), r.gen_range(0..a));
                let (c0, c1) = (r.gen_range(0..b), r.gen_range(0..b));
                [(r0.min(r1), r0.max(r1)), (c0.min(c1), c0.max(c1))]
            })
            .collect();
        let bl: Vec<Vec<(usize, usize)>> = boxes.iter().map(|b| b.to_vec()).collect();
        cases.push((format!("boxes {a}x{b}"), LinOp::box_queries(&[a, b], &bl).unwrap(), boxes_m((a, b), &boxes)));
        cases.push((format!("quadtree {a}x{b}"), quadtree_sel(&[a, b]).unwrap(), quadtree_m(a, b)));
        for axis in 0..2 {
            let len = [a, b][axis];
            let sub = hierarchy_m(len, hb_branching(len));
            let want = if axis == 0 { sub.kronecker(&M::identity(b, b)) } else { M::identity(a, a).kronecker(&sub) };
            cases.push((
                format!("stripe hb {a}x{b} axis {axis}"),
                stripe_select(&[a, b], axis, &hb_sel(len).unwrap()).unwrap(),
                want,
            ));
        }
        cases.push((
            format!("kron of union {a}x{b}"),
            LinOp::kron(LinOp::union(vec![LinOp::total(a), LinOp::identity(a)]).unwrap(), LinOp::weighted(0.5, LinOp::prefix(b))),
            vstack(&[M::from_element(1, a, 1.0), M::identity(a, a)]).kronecker(&(prefix_m(b) * 0.5)),
        ));
    }
    let mut failures = Vec::new();
    for (name, op, m) in &cases {
        if let Some(f) = check_op(name, op, m, &mut r) {
            failures.push(f);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let ok = failures.is_empty() && secs < 30.0;
    verdict(
        1,
        "implicit-matrix fidelity",
        ok,
        &format!("{} operators checked, {} mismatches {:?}, {secs:.2} s", cases.len(), failures.len(), failures.first()),
    );
}

// ---------------------------------------------------------------------------

fn time_matvec(op: &LinOp, x: &[f64]) -> f64 {
    black_box(op.matvec(x).unwrap());
    let mut reps = 1usize;
    loop {
        let t = Instant::now();
        for _ in 0..reps {
            black_box(op.matvec(black_box(x)).unwrap());
        }
        if t.elapsed().as_secs_f64() >= 0.03 || reps >= 1 << 16 {
            break;
        }
        reps *= 2;
    }
    (0..5)
        .map(|_| {
            let t = Instant::now();
            for _ in 0..reps {
                black_box(op.matvec(black_box(x)).unwrap());
            }
            t.elapsed().as_secs_f64() / reps as f64
        })
        .fold(f64::INFINITY, f64::min)
}

fn loglog_slope(ns: &[f64], ts: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = ts.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Largest `n` whose dense H2 (`2n - 1` rows) fits in `bytes`.
fn largest_dense_h2(bytes: u128) -> u128 {
    let (mut lo, mut hi) = (1u128, 1u128 << 40);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if 8 * (2 * mid - 1) * mid <= bytes {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

#[test]
fn criterion_02_scaling() {
    let _g = serial();
    let t0 = Instant::now();
    let sizes: Vec<usize> = (14..=22).map(|k| 1usize << k).collect();
    let mut prefix_t = Vec::new();
    let mut h2_t = Vec::new();
    let mut h2_bytes = 0;
    for &n in &sizes {
        let x: Vec<f64> = (0..n).map(|i| (i % 7) as f64).collect();
        prefix_t.push(time_matvec(&LinOp::prefix(n), &x));
        let h2 = h2_sel(n).unwrap();
        h2_t.push(time_matvec(&h2, &x));
        h2_bytes = h2.stored_bytes();
    }
    let ns: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let sp = loglog_slope(&ns, &prefix_t);
    let sh = loglog_slope(&ns, &h2_t);
    let big = 1usize << 22;
    let dense_refused = matches!(h2_sel(big).unwrap().materialize(), Err(Error::Capacity { .. }));
    let cap = dense_cap_bytes() as u128;
    let dense_bytes = 8 * (2 * big as u128 - 1) * big as u128;
    let dense_max_16g = largest_dense_h2(16u128 << 30);
    let ratio = big as f64 / dense_max_16g as f64;
    let secs = t0.elapsed().as_secs_f64();
    let ok = (0.8..=1.3).contains(&sp)
        && (0.8..=1.3).contains(&sh)
        && dense_refused
        && dense_bytes > cap
        && ratio >= 100.0
        && secs < 300.0;
    verdict(
        2,
        "scaling",
        ok,
        &format!(
            "slope prefix {sp:.3}, h2 {sh:.3}; h2 matvec at 2^22 {:.1} ms using {} MiB implicit vs {} GiB dense (cap {} GiB, refused {dense_refused}); \
             implicit 2^22 vs largest dense n {dense_max_16g} on 16 GiB = {ratio:.0}x; {secs:.1} s",
            h2_t.last().unwrap() * 1e3,
            h2_bytes >> 20,
            dense_bytes >> 30,
            cap >> 30,
        ),
    );
}

// ---------------------------------------------------------------------------

fn pinv_solve(q: &M, y: &[f64]) -> Vec<f64> {
    let p = q.clone().pseudo_inverse(1e-12).unwrap();
    (p * M::from_column_slice(y.len(), 1, y)).iter().copied().collect()
}

fn single_system(q: &M, y: Vec<f64>) -> MeasurementSet {
    let mut ms = MeasurementSet::new(q.ncols());
    ms.push(LinOp::dense(to_core(q)), y, 1.0).unwrap();
    ms
}

#[test]
fn criterion_03_inference() {
    let _g = serial();
    let mut r = rng(3);
    let mut ls_worst = 0.0f64;
    let mut nnls_min = f64::INFINITY;
    let mut kkt_worst = 0.0f64;
    let mut active = 0usize;
    for t in 0..100 {
        let n: usize = if t < 10 { 256 } else { r.gen_range(1..=256) };
        let m = n + r.gen_range(n.div_ceil(2)..=n) + 2;
        let q = random_dense(m, n, &mut r);
        let y: Vec<f64> = (0..m).map(|_| gauss(&mut r)).collect();
        let want = pinv_solve(&q, &y);
        let est = least_squares(&single_system(&q, y), 1e-12, default_max_iter(n)).unwrap();
        let err = est.x_hat.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ls_worst = ls_worst.max(err);

        let x0: Vec<f64> = (0..n).map(|_| gauss(&mut r)).collect();
        let qm = &q * M::from_column_slice(n, 1, &x0);
        let y2: Vec<f64> = qm.iter().map(|v| v + 0.1 * gauss(&mut r)).collect();
        let est = nnls(&single_system(&q, y2.clone()), 1e-9, 20_000).unwrap();
        let x = M::from_column_slice(n, 1, &est.x_hat);
        let g = q.transpose() * (&q * &x - M::from_column_slice(m, 1, &y2));
        let kkt = (0..n).map(|i| (x[i] - (x[i] - g[i]).max(0.0)).abs()).fold(0.0, f64::max);
        kkt_worst = kkt_worst.max(kkt);
        nnls_min = nnls_min.min(est.x_hat.iter().copied().fold(f64::INFINITY, f64::min));
        active += est.x_hat.iter().filter(|v| **v == 0.0).count();
    }

    let n = 1usize << 20;
    let data = synthetic::suite_1d(n, 1_000_000, 1, 5).unwrap().remove(0);
    let h2 = h2_sel(n).unwrap();
    let scale = h2.sensitivity_l1().unwrap();
    let mut y = h2.matvec(&data.values).unwrap();
    let noise = sample_laplace(scale, y.len(), &mut rng(9));
    for (v, e) in y.iter_mut().zip(noise) {
        *v += e;
    }
    let mut ms = MeasurementSet::new(n);
    ms.push(h2, y, scale).unwrap();
    let t = Instant::now();
    let est = least_squares(&ms, 1e-10, default_max_iter(n)).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let ok = ls_worst <= 1e-6 && nnls_min >= -1e-9 && kkt_worst <= 1e-5 && secs < 60.0;
    verdict(
        3,
        "inference",
        ok,
        &format!(
            "LS vs pseudo-inverse max |dx| {ls_worst:.2e} over 100 systems; NNLS min x {nnls_min:.2e}, max KKT {kkt_worst:.2e}, \
             {active} active bounds; LS on H2 at n=2^20 {secs:.1} s, {} iterations, converged {}",
            est.iterations, est.converged
        ),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_04_more_measurements() {
    let _g = serial();
    let mut r = rng(4);
    let mut worst = f64::NEG_INFINITY;
    let mut sm_gap = 0.0f64;
    let mut strict = 0;
    for _ in 0..500 {
        let n = r.gen_range(1..=24);
        let m = n + r.gen_range(2..=n + 2);
        let q = random_dense(m, n, &mut r);
        let b = random_dense(1, n, &mut r);
        let row: Vec<f64> = (0..n).map(|_| gauss(&mut r)).collect();
        let before = unit_noise_error(&row, &to_core(&q)).unwrap();
        let after = unit_noise_error(&row, &to_core(&vstack(&[q.clone(), b.clone()]))).unwrap();
        worst = worst.max((after - before) / before.max(1.0));
        if after < before {
            strict += 1;
        }
        // Sherman-Morrison update of the same quantity
        let ginv = (q.transpose() * &q).try_inverse().unwrap();
        let qv = M::from_row_slice(1, n, &row);
        let e0 = (&qv * &ginv * qv.transpose())[(0, 0)];
        let num = (&qv * &ginv * b.transpose())[(0, 0)];
        let den = 1.0 + (&b * &ginv * b.transpose())[(0, 0)];
        let e1 = e0 - num * num / den;
        sm_gap = sm_gap.max((e0 - before).abs() / e0.max(1.0)).max((e1 - after).abs() / e1.max(1.0));
    }
    let ok = worst <= 1e-9 && sm_gap <= 1e-6;
    verdict(
        4,
        "more measurements never hurt",
        ok,
        &format!("500 instances, max relative increase {worst:.2e}, strict decreases {strict}, oracle vs Sherman-Morrison gap {sm_gap:.2e}"),
    );
}

// ---------------------------------------------------------------------------

/// `rows x n` workload whose columns come from `groups` distinct prototypes.
fn grouped_workload(rows: usize, n: usize, groups: usize, r: &mut ChaCha20Rng) -> (M, Vec<usize>) {
    let proto = M::from_fn(rows, groups, |_, _| r.gen_range(-2..=2) as f64);
    let assign: Vec<usize> = (0..n).map(|_| r.gen_range(0..groups)).collect();
    let w = M::from_fn(rows, n, |i, j| proto[(i, assign[j])]);
    (w, assign)
}

fn distinct_columns(w: &M) -> usize {
    let mut seen: Vec<Vec<u64>> = (0..w.ncols()).map(|j| w.column(j).iter().map(|v| v.to_bits()).collect()).collect();
    seen.sort();
    seen.dedup();
    seen.len()
}

#[test]
fn criterion_05_workload_reduction() {
    let _g = serial();
    let mut r = rng(5);
    let mut ident_gap = 0.0f64;
    let mut bad_groups = 0;
    for t in 0..500 {
        let n = r.gen_range(2..=64);
        let rows = r.gen_range(1..=8);
        let (w, _) = grouped_workload(rows, n, r.gen_range(1..=n), &mut r);
        let wop = LinOp::dense(to_core(&w));
        let p = workload_based(&wop, t).unwrap();
        for g in p.groups() {
            if g.iter().any(|&j| w.column(j) != w.column(g[0])) {
                bad_groups += 1;
            }
        }
        if p.p() != distinct_columns(&w) {
            bad_groups += 1;
        }
        let x: Vec<f64> = (0..n).map(|_| r.gen_range(0..50) as f64).collect();
        let lhs = wop.matvec(&x).unwrap();
        let wr = LinOp::product(wop.clone(), p.pinv()).unwrap();
        let rhs = wr.matvec(&p.reduce(&x).unwrap()).unwrap();
        for (a, b) in lhs.iter().zip(&rhs) {
            ident_gap = ident_gap.max((a - b).abs() / a.abs().max(1.0));
        }
    }

    let mut oracle_worst = f64::NEG_INFINITY;
    let mut rows_checked = 0;
    for t in 0..500 {
        let n = r.gen_range(2..=24);
        let (w, _) = grouped_workload(r.gen_range(1..=6), n, r.gen_range(1..=n), &mut r);
        let p = workload_based(&LinOp::dense(to_core(&w)), t).unwrap();
        let pinv = from_core(&p.pinv().materialize().unwrap());
        let q = random_dense(n + r.gen_range(1..=n), n, &mut r);
        let qr = &q * &pinv;
        for i in 0..w.nrows() {
            let row: Vec<f64> = w.row(i).iter().copied().collect();
            let rrow: Vec<f64> = (w.row(i) * &pinv).iter().copied().collect();
            let e = expected_error_oracle(&row, &to_core(&q)).unwrap();
            let er = expected_error_oracle(&rrow, &to_core(&qr)).unwrap();
            oracle_worst = oracle_worst.max((er - e) / e.max(1.0));
            rows_checked += 1;
        }
    }

    let shape = vec![128usize, 64];
    let x = synthetic::mixture_2d((128, 64), 3, 100_000, 5).unwrap();
    let wl = LinOp::kron(random_range_workload(128, 64, 5).unwrap(), LinOp::total(64));
    let scale = default_scale(&x);
    let run = |kind: PlanKind, wrapped: bool, seed: u64| {
        let mut k = Kernel::from_vector(DataVector::new(x.clone(), shape.clone()).unwrap(), eps("1"), seed).unwrap();
        let root = k.root();
        let t = Instant::now();
        let res = if wrapped {
            run_with_workload_reduction(kind, &mut k, root, &wl, &eps("1"), &PlanParams::default(), &NullClock)
        } else {
            run_plan(kind, &mut k, root, &wl, &eps("1"), &PlanParams::default(), &NullClock)
        }
        .unwrap();
        let secs = t.elapsed().as_secs_f64();
        (per_query_error(&wl, res.x_hat.values(), &x, scale).unwrap(), secs)
    };
    let mean = |v: &[(f64, f64)], f: fn(&(f64, f64)) -> f64| v.iter().map(f).sum::<f64>() / v.len() as f64;
    let id_plain: Vec<_> = (0..20).map(|s| run(PlanKind::Identity, false, s)).collect();
    let id_wrap: Vec<_> = (0..20).map(|s| run(PlanKind::Identity, true, s)).collect();
    let ahp_plain: Vec<_> = (0..20).map(|s| run(PlanKind::Ahp, false, s)).collect();
    let ahp_wrap: Vec<_> = (0..20).map(|s| run(PlanKind::Ahp, true, s)).collect();
    let (e_plain, e_wrap) = (mean(&id_plain, |p| p.0), mean(&id_wrap, |p| p.0));
    let (t_plain, t_wrap) = (mean(&ahp_plain, |p| p.1), mean(&ahp_wrap, |p| p.1));
    let ok = ident_gap <= 1e-9 && bad_groups == 0 && oracle_worst <= 1e-9 && e_wrap <= e_plain && t_wrap < t_plain;
    verdict(
        5,
        "workload-based reduction",
        ok,
        &format!(
            "identity Wx = W'x' max gap {ident_gap:.2e} on 500 instances, {bad_groups} bad groupings; \
             reduced oracle error max relative excess {oracle_worst:.2e} over {rows_checked} rows; \
             identity plan mean error {e_plain:.4e} plain vs {e_wrap:.4e} reduced ({:.1}x); \
             AHP mean time {:.1} ms plain vs {:.1} ms reduced",
            e_plain / e_wrap,
            t_plain * 1e3,
            t_wrap * 1e3
        ),
    );
}

// ---------------------------------------------------------------------------

fn budget_exact(k: &Kernel, id: u32) -> String {
    k.ledger().sources.iter().find(|s| s.source_id == id).unwrap().budget_exact.clone()
}

fn schema() -> Schema {
    Schema::new(vec![
        Attribute {
            name: "age".into(),
            binning: Binning::Range { lo: 0.0, hi: 100.0, bins: 10 },
        },
        Attribute {
            name: "sex".into(),
            binning: Binning::Categorical { values: vec!["F".into(), "M".into()] },
        },
    ])
    .unwrap()
}

fn random_row(r: &mut ChaCha20Rng) -> Vec<Value> {
    vec![
        Value::Num(r.gen_range(0..=100) as f64),
        Value::Text(if r.gen_bool(0.5) { "F" } else { "M" }.into()),
    ]
}

/// A fixed request sequence; returns the transcript and the ledger rows.
fn fixed_schedule(t: Table, seed: u64) -> (Vec<(String, u32, String, Outcome)>, Vec<(u32, Option<u32>, String, String)>) {
    let mut k = Kernel::init(t, eps("1"), seed).unwrap();
    let root = k.root();
    noisy_count(&mut k, root, &eps("1/10")).unwrap();
    let young = k.transform(root, Transform::Where(Predicate::InRange("age".into(), 0.0, 50.0))).unwrap();
    let yv = k.transform(young, Transform::Vectorize).unwrap();
    vector_laplace(&mut k, yv, LinOp::identity(20), &eps("1/10")).unwrap();
    let grouped = k.transform(root, Transform::GroupBy(vec!["sex".into()])).unwrap();
    noisy_count(&mut k, grouped, &eps("1/20")).unwrap();
    let v = k.transform(root, Transform::Vectorize).unwrap();
    let kids = k.partition(v, &stripe_partition(&[10, 2], 0).unwrap()).unwrap();
    for &kid in &kids {
        vector_laplace(&mut k, kid, LinOp::prefix(10), &eps("1/5")).unwrap();
    }
    let w = random_range_workload(20, 10, 1).unwrap();
    worst_approx(&mut k, v, &w, &[0.0; 20], &eps("1/10")).unwrap();
    dawa_partition(&mut k, kids[0], &eps("1/20"), 0.1).unwrap();
    let denied = vector_laplace(&mut k, v, LinOp::identity(20), &eps("1"));
    assert!(matches!(denied, Err(Error::BudgetExceeded { .. })));
    assert!(k.request_budget(v, &eps("1/100")).unwrap());
    let ledger = k.ledger();
    (
        ledger.transcript.iter().map(|e| (e.op_name.clone(), e.source_id, e.epsilon_exact.clone(), e.outcome)).collect(),
        ledger.sources.iter().map(|s| (s.source_id, s.parent_id, s.kind.clone(), s.budget_exact.clone())).collect(),
    )
}

/// Root budget recomputed from the tree and the granted direct requests.
fn oracle_budget(k: &Kernel, direct: &HashMap<u32, Epsilon>, id: u32) -> Epsilon {
    let ledger = k.ledger();
    let row = |i: u32| ledger.sources.iter().find(|s| s.source_id == i).unwrap();
    fn go(
        rows: &[privlin_core::kernel::LedgerRow],
        direct: &HashMap<u32, Epsilon>,
        id: u32,
        row: &dyn Fn(u32) -> privlin_core::kernel::LedgerRow,
    ) -> Epsilon {
        let me = row(id);
        let kids: Vec<_> = rows.iter().filter(|s| s.parent_id == Some(id)).collect();
        let charge = |c: &privlin_core::kernel::LedgerRow| {
            let b = go(rows, direct, c.source_id, row);
            if c.kind == SourceKind::PartitionDummy.as_str() {
                b
            } else {
                &Epsilon::from_f64(c.stability).unwrap() * &b
            }
        };
        if me.kind == SourceKind::PartitionDummy.as_str() {
            kids.iter().map(|c| charge(c)).fold(Epsilon::zero(), Epsilon::max)
        } else {
            let own = direct.get(&id).cloned().unwrap_or_else(Epsilon::zero);
            kids.iter().map(|c| charge(c)).fold(own, |a, b| &a + &b)
        }
    }
    let rows = ledger.sources.clone();
    go(&rows, direct, id, &|i| row(i).clone())
}

#[test]
fn criterion_06_privacy_accounting() {
    let _g = serial();
    let mut notes = Vec::new();
    let mut ok = true;

    // sequential composition
    let mut k = Kernel::from_vector(DataVector::from_values(vec![1.0; 4]).unwrap(), eps("1"), 1).unwrap();
    let root = k.root();
    vector_laplace(&mut k, root, LinOp::identity(4), &eps("1/10")).unwrap();
    vector_laplace(&mut k, root, LinOp::prefix(4), &eps("1/5")).unwrap();
    ok &= budget_exact(&k, 0) == "3/10";
    notes.push(format!("sequential {}", budget_exact(&k, 0)));

    // parallel composition through a partition
    let mut k = Kernel::from_vector(DataVector::from_values(vec![1.0; 6]).unwrap(), eps("1"), 1).unwrap();
    let root = k.root();
    let kids = k.partition(root, &PartitionMap::new(vec![0, 0, 1, 1, 2, 2]).unwrap()).unwrap();
    for (kid, e) in kids.iter().zip(["1/5", "3/10", "1/10"]) {
        vector_laplace(&mut k, *kid, LinOp::identity(2), &eps(e)).unwrap();
    }
    ok &= budget_exact(&k, 0) == "3/10";
    vector_laplace(&mut k, kids[0], LinOp::identity(2), &eps("1/5")).unwrap();
    ok &= budget_exact(&k, 0) == "2/5" && budget_exact(&k, kids[0].id()) == "2/5";
    notes.push(format!("parallel {}", budget_exact(&k, 0)));

    // stability scaling: group-by (2) then vectorize (1); linear map with sensitivity 3
    let rows: Vec<_> = (0..20).map(|_| random_row(&mut rng(6))).collect();
    let mut k = Kernel::init(Table::new(schema(), rows).unwrap(), eps("1"), 1).unwrap();
    let root = k.root();
    let g = k.transform(root, Transform::GroupBy(vec!["sex".into()])).unwrap();
    noisy_count(&mut k, g, &eps("1/10")).unwrap();
    ok &= budget_exact(&k, 0) == "1/5";
    let v = k.transform(root, Transform::Vectorize).unwrap();
    let lin = k.transform(v, Transform::Linear(LinOp::weighted(3.0, LinOp::identity(20)))).unwrap();
    vector_laplace(&mut k, lin, LinOp::identity(20), &eps("1/10")).unwrap();
    ok &= budget_exact(&k, 0) == "1/2" && budget_exact(&k, v.id()) == "3/10";
    let snap = k.budget_snapshot();
    let denied = vector_laplace(&mut k, lin, LinOp::identity(20), &eps("1/5"));
    ok &= matches!(denied, Err(Error::BudgetExceeded { .. })) && k.budget_snapshot() == snap;
    notes.push(format!("stability {}", budget_exact(&k, 0)));

    // control flow is the same on neighbouring tables
    let mut r = rng(66);
    let mut same = 0;
    for i in 0..100 {
        let rows: Vec<_> = (0..r.gen_range(0..60)).map(|_| random_row(&mut r)).collect();
        let mut other = rows.clone();
        if !other.is_empty() && r.gen_bool(0.5) {
            let at = r.gen_range(0..other.len());
            other.remove(at);
        } else {
            other.push(random_row(&mut r));
        }
        let a = fixed_schedule(Table::new(schema(), rows).unwrap(), i);
        let b = fixed_schedule(Table::new(schema(), other).unwrap(), i);
        if a == b {
            same += 1;
        }
    }
    ok &= same == 100;

    // fuzzed schedules
    let mut r = rng(666);
    let mut violations = 0;
    let mut oracle_mismatch = 0;
    let mut denials = 0;
    let mut steps_run = 0;
    for s in 0..10_000u64 {
        let total = Epsilon::ratio(r.gen_range(1..=10), 10).unwrap();
        let mut k = Kernel::from_vector(DataVector::from_values(vec![1.0; 8]).unwrap(), total.clone(), s).unwrap();
        let mut nodes = vec![k.root()];
        let mut direct: HashMap<u32, Epsilon> = HashMap::new();
        for _ in 0..r.gen_range(1..=20) {
            steps_run += 1;
            let src = nodes[r.gen_range(0..nodes.len())];
            let len = k.len(src).unwrap();
            let snap = k.budget_snapshot();
            let sigma = Epsilon::ratio(r.gen_range(1..=10), 20).unwrap();
            let granted = match r.gen_range(0..5) {
                0 => {
                    let w = [0.5, 1.0, 2.0, 3.0][r.gen_range(0..4)];
                    let t = Transform::Linear(LinOp::weighted(w, LinOp::identity(len)));
                    nodes.push(k.transform(src, t).unwrap());
                    None
                }
                1 => {
                    let p = r.gen_range(1..=len);
                    let pm = PartitionMap::new((0..len).map(|i| if i < p { i } else { r.gen_range(0..p) }).collect()).unwrap();
                    nodes.push(k.transform(src, Transform::Reduce(pm)).unwrap());
                    None
                }
                2 => {
                    let p = r.gen_range(1..=len);
                    let pm = PartitionMap::new((0..len).map(|i| if i < p { i } else { r.gen_range(0..p) }).collect()).unwrap();
                    nodes.extend(k.partition(src, &pm).unwrap());
                    None
                }
                3 => Some(k.request_budget(src, &sigma).unwrap()),
                _ => match vector_laplace(&mut k, src, LinOp::identity(len), &sigma) {
                    Ok(_) => Some(true),
                    Err(Error::BudgetExceeded { .. }) => Some(false),
                    Err(e) => panic!("{e}"),
                },
            };
            match granted {
                Some(true) => {
                    let d = direct.entry(src.id()).or_insert_with(Epsilon::zero);
                    *d = &*d + &sigma;
                }
                Some(false) => {
                    denials += 1;
                    if k.budget_snapshot() != snap {
                        violations += 1;
                    }
                }
                None => {}
            }
            if k.budget(k.root()).unwrap() > &total {
                violations += 1;
            }
            if oracle_budget(&k, &direct, 0) != *k.budget(k.root()).unwrap() {
                oracle_mismatch += 1;
            }
        }
    }
    ok &= violations == 0 && oracle_mismatch == 0;
    verdict(
        6,
        "privacy accounting",
        ok,
        &format!(
            "hand traces [{}]; {same}/100 neighbouring pairs with identical transcripts; \
             10000 fuzzed schedules ({steps_run} steps, {denials} denials): {violations} violations, {oracle_mismatch} oracle mismatches",
            notes.join(", ")
        ),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_07_noise_calibration() {
    let _g = serial();
    let n = 64;
    let x: Vec<f64> = (0..n).map(|i| (i * 3 % 11) as f64).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, q) in [("identity", LinOp::identity(n)), ("prefix", LinOp::prefix(n)), ("h2", h2_sel(n).unwrap())] {
        let mut k = Kernel::from_vector(DataVector::from_values(x.clone()).unwrap(), eps("1000000"), 7).unwrap();
        let root = k.root();
        let truth = q.matvec(&x).unwrap();
        let e = eps("1/2");
        let want = 2.0 * (q.sensitivity_l1().unwrap() / e.to_f64()).powi(2);
        let (mut sum, mut count) = (0.0, 0usize);
        while count < 100_000 {
            let m = vector_laplace(&mut k, root, q.clone(), &e).unwrap();
            for (y, t) in m.values.iter().zip(&truth) {
                sum += (y - t) * (y - t);
                count += 1;
            }
        }
        let var = sum / count as f64;
        let rel = (var / want - 1.0).abs();
        ok &= rel <= 0.05;
        parts.push(format!("{name} {var:.1} vs {want:.1} ({:.2}%, {count} samples)", rel * 100.0));
    }
    verdict(7, "noise calibration", ok, &parts.join("; "));
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_08_mwem_variants() {
    let _g = serial();
    let t0 = Instant::now();
    let n = 4096;
    let sets = synthetic::suite_1d(n, 100_000, 10, 8).unwrap();
    let w = random_range_workload(n, 1000, 8).unwrap();
    let e = eps("0.1");
    let (mut err_b, mut err_d, mut t_b, mut t_d) = (0.0, 0.0, 0.0, 0.0);
    let mut wins = 0;
    let mut runs = 0;
    for d in &sets {
        let scale = default_scale(&d.values);
        let params = PlanParams {
            total: Some(d.values.iter().sum()),
            ..PlanParams::default()
        };
        for seed in 0..5 {
            let go = |kind| {
                let mut k = Kernel::from_vector(DataVector::from_values(d.values.clone()).unwrap(), e.clone(), seed).unwrap();
                let root = k.root();
                let t = Instant::now();
                let res = run_plan(kind, &mut k, root, &w, &e, &params, &NullClock).unwrap();
                let secs = t.elapsed().as_secs_f64();
                (per_query_error(&w, res.x_hat.values(), &d.values, scale).unwrap(), secs)
            };
            let (eb, tb) = go(PlanKind::Mwem);
            let (ed, td) = go(PlanKind::MwemD);
            err_b += eb;
            err_d += ed;
            t_b += tb;
            t_d += td;
            wins += usize::from(ed <= eb);
            runs += 1;
        }
    }
    let k = runs as f64;
    let (err_b, err_d, t_b, t_d) = (err_b / k, err_d / k, t_b / k, t_d / k);
    let secs = t0.elapsed().as_secs_f64();
    let ok = err_d <= err_b && t_d <= 20.0 * t_b && secs < 900.0;
    verdict(
        8,
        "mwem variant d",
        ok,
        &format!(
            "{} datasets x 5 seeds: mean error base {err_b:.4e}, variant d {err_d:.4e} ({:.2}x better, d wins {wins}/{runs}); \
             mean runtime base {:.1} ms, d {:.1} ms ({:.1}x); {secs:.1} s",
            sets.len(),
            err_b / err_d,
            t_b * 1e3,
            t_d * 1e3,
            t_d / t_b
        ),
    );
}

// ---------------------------------------------------------------------------

fn sorted_rows(m: &M) -> Vec<Vec<u64>> {
    let mut rows: Vec<Vec<u64>> = (0..m.nrows()).map(|i| m.row(i).iter().map(|v| v.to_bits()).collect()).collect();
    rows.sort();
    rows
}

#[test]
fn criterion_09_plan_equivalence() {
    let _g = serial();
    let shape = [8usize, 4];
    let n = 32;
    let mut ok = true;
    let mut parts = Vec::new();
    for axis in 0..2 {
        let (pm, q) = hb_striped_strategy(&shape, axis).unwrap();
        let qd = from_core(&q.materialize().unwrap());
        // effective rows from the partition groups
        let mut by_groups = Vec::new();
        for g in pm.groups() {
            let mut e = M::zeros(qd.nrows(), n);
            for (pos, &cell) in g.iter().enumerate() {
                e.column_mut(cell).copy_from(&qd.column(pos));
            }
            by_groups.push(e);
        }
        let by_groups = vstack(&by_groups);
        // effective rows through the kernel's lineage
        let mut k = Kernel::from_vector(DataVector::new(vec![0.0; n], shape.to_vec()).unwrap(), eps("1"), 1).unwrap();
        let root = k.root();
        let kids = k.partition(root, &pm).unwrap();
        let mut by_lineage = Vec::new();
        for &kid in &kids {
            let eff = LinOp::product(q.clone(), k.lineage_from(root, kid).unwrap()).unwrap();
            by_lineage.push(from_core(&eff.materialize().unwrap()));
        }
        let by_lineage = vstack(&by_lineage);
        let kron = hb_striped_kron_strategy(&shape, axis).unwrap();
        let kd = from_core(&kron.materialize().unwrap());
        let same_rows = sorted_rows(&kd) == sorted_rows(&by_groups) && sorted_rows(&kd) == sorted_rows(&by_lineage);
        // each stripe pays the selector's sensitivity in parallel
        let striped_sens = q.sensitivity_l1().unwrap();
        let kron_sens = kron.sensitivity_l1().unwrap();
        let x = synthetic::mixture_2d((8, 4), 2, 300, 3).unwrap();
        let spent = |kind| {
            let mut k = Kernel::from_vector(DataVector::new(x.clone(), shape.to_vec()).unwrap(), eps("1"), 9).unwrap();
            let root = k.root();
            let params = PlanParams { axis, ..PlanParams::default() };
            run_plan(kind, &mut k, root, &LinOp::identity(n), &eps("1/2"), &params, &NullClock).unwrap().budget_spent_exact
        };
        let same_budget = spent(PlanKind::HbStriped) == spent(PlanKind::HbStripedKron);
        ok &= same_rows && striped_sens == kron_sens && same_budget;
        parts.push(format!(
            "axis {axis}: {} rows, identical {same_rows}, sensitivity {striped_sens} vs {kron_sens}, same budget {same_budget}",
            kd.nrows()
        ));
    }
    verdict(9, "striped plan equivalence", ok, &parts.join("; "));
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_10_run_determinism() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("grid.json");
    let x = synthetic::mixture_2d((64, 64), 4, 50_000, 10).unwrap();
    write_vector(&data, &DataVector::new(x, vec![64, 64]).unwrap(), VectorFormat::Json).unwrap();
    let mut differing = Vec::new();
    let mut failed = Vec::new();
    for kind in PlanKind::ALL {
        let mut outs = Vec::new();
        for i in 0..2 {
            let out = dir.path().join(format!("{}-{i}.json", kind.name()));
            let status = Command::new(env!("CARGO_BIN_EXE_privlin"))
                .args(["run", "--plan", kind.name(), "--workload", "allrange:200", "--epsilon", "1", "--seed", "11"])
                .arg("--data")
                .arg(&data)
                .arg("--out")
                .arg(&out)
                .status()
                .unwrap();
            if !status.success() {
                failed.push(kind.name());
            }
            outs.push(std::fs::read(&out).unwrap_or_default());
        }
        if outs[0] != outs[1] || outs[0].is_empty() {
            differing.push(kind.name());
        }
    }
    let ok = differing.is_empty() && failed.is_empty();
    verdict(
        10,
        "run determinism",
        ok,
        &format!("{} plans on 64x64, differing {differing:?}, failed {failed:?}", PlanKind::ALL.len()),
    );
}
