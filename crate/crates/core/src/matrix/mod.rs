//! Matrix-free linear operators.
//!
//! A [`LinOp`] is an immutable tree of core matrices (identity, prefix sums,
//! Haar wavelet, ...) and combinators (Kronecker, vertical union, product,
//! scalar weighting). Every node knows how to apply itself and its transpose
//! to a vector without materializing anything; element-wise `abs`/`sqr` are
//! structural where possible and fall back to a dense copy (subject to the
//! global memory cap) otherwise.

mod dense;
mod desc;
mod haar;
mod sparse;

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

pub use dense::Dense;
pub use desc::{OpDesc, OpParams};
pub use sparse::Csr;

use crate::error::{Error, Result};

static DENSE_CAP_BYTES: AtomicUsize = AtomicUsize::new(2 << 30);

/// Upper bound, in bytes, on any dense or sparse materialization.
pub fn dense_cap_bytes() -> usize {
    DENSE_CAP_BYTES.load(Ordering::Relaxed)
}

pub fn set_dense_cap_bytes(bytes: usize) {
    DENSE_CAP_BYTES.store(bytes, Ordering::Relaxed);
}

pub(crate) fn check_cap(what: &'static str, bytes: u128) -> Result<()> {
    let cap = dense_cap_bytes() as u128;
    if bytes > cap {
        Err(Error::Capacity {
            what,
            requested: bytes,
            cap,
        })
    } else {
        Ok(())
    }
}

pub(crate) fn check_dense(what: &'static str, rows: usize, cols: usize) -> Result<()> {
    check_cap(what, rows as u128 * cols as u128 * 8)
}

/// Operator body. Children are reference counted so cloning an operator
/// tree is cheap.
#[derive(Clone, Debug, PartialEq)]
pub enum Body {
    Dense(Arc<Dense>),
    Sparse(Arc<Csr>),
    Identity,
    /// All-ones `m x n`; a total query is `Ones` with one row.
    Ones,
    /// Lower-triangular ones.
    Prefix,
    /// Upper-triangular ones.
    Suffix,
    Wavelet {
        transposed: bool,
    },
    Kronecker(Arc<LinOp>, Arc<LinOp>),
    Union(Arc<Vec<LinOp>>),
    /// `left * right`. `binary` records that the product is known to be
    /// 0/1 valued, which makes `abs`/`sqr` no-ops.
    Product {
        left: Arc<LinOp>,
        right: Arc<LinOp>,
        binary: bool,
    },
    Weighted(f64, Arc<LinOp>),
    Transposed(Arc<LinOp>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinOp {
    rows: usize,
    cols: usize,
    body: Body,
}

impl LinOp {
    fn new(rows: usize, cols: usize, body: Body) -> Self {
        LinOp { rows, cols, body }
    }

    pub fn identity(n: usize) -> Self {
        LinOp::new(n, n, Body::Identity)
    }

    pub fn ones(m: usize, n: usize) -> Self {
        LinOp::new(m, n, Body::Ones)
    }

    pub fn total(n: usize) -> Self {
        LinOp::ones(1, n)
    }

    pub fn prefix(n: usize) -> Self {
        LinOp::new(n, n, Body::Prefix)
    }

    pub fn suffix(n: usize) -> Self {
        LinOp::new(n, n, Body::Suffix)
    }

    /// Haar wavelet over `n = 2^k` cells.
    pub fn wavelet(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::invalid("wavelet size must be a power of two"));
        }
        Ok(LinOp::new(n, n, Body::Wavelet { transposed: false }))
    }

    pub fn dense(d: Dense) -> Self {
        LinOp::new(d.rows(), d.cols(), Body::Dense(Arc::new(d)))
    }

    pub fn sparse(s: Csr) -> Self {
        LinOp::new(s.rows(), s.cols(), Body::Sparse(Arc::new(s)))
    }

    pub fn kron(a: LinOp, b: LinOp) -> Self {
        LinOp::new(
            a.rows * b.rows,
            a.cols * b.cols,
            Body::Kronecker(Arc::new(a), Arc::new(b)),
        )
    }

    /// Kronecker product of a non-empty list, first factor outermost.
    pub fn kron_all(mut ops: Vec<LinOp>) -> Result<Self> {
        let mut acc = ops.pop().ok_or_else(|| Error::invalid("empty Kronecker product"))?;
        while let Some(next) = ops.pop() {
            acc = LinOp::kron(next, acc);
        }
        Ok(acc)
    }

    /// Vertical stacking. Nested unions are flattened.
    pub fn union(ops: Vec<LinOp>) -> Result<Self> {
        let first = ops.first().ok_or_else(|| Error::invalid("empty union"))?;
        let cols = first.cols;
        let mut flat = Vec::with_capacity(ops.len());
        for op in ops {
            if op.cols != cols {
                return Err(Error::dim("union columns", cols, op.cols));
            }
            match op.body {
                Body::Union(children) => flat.extend(children.iter().cloned()),
                _ => flat.push(op),
            }
        }
        if flat.len() == 1 {
            return Ok(flat.pop().unwrap());
        }
        let rows = flat.iter().map(|o| o.rows).sum();
        Ok(LinOp::new(rows, cols, Body::Union(Arc::new(flat))))
    }

    /// Lazy product `a * b`.
    pub fn product(a: LinOp, b: LinOp) -> Result<Self> {
        if a.cols != b.rows {
            return Err(Error::dim("product inner dimension", a.cols, b.rows));
        }
        let binary = matches!(a.body, Body::Identity) && b.is_binary()
            || matches!(b.body, Body::Identity) && a.is_binary();
        Ok(LinOp::new(
            a.rows,
            b.cols,
            Body::Product {
                left: Arc::new(a),
                right: Arc::new(b),
                binary,
            },
        ))
    }

    /// Product whose entries the caller guarantees are all 0 or 1.
    pub(crate) fn product_binary(a: LinOp, b: LinOp) -> Result<Self> {
        let mut p = LinOp::product(a, b)?;
        if let Body::Product { binary, .. } = &mut p.body {
            *binary = true;
        }
        Ok(p)
    }

    pub fn weighted(w: f64, a: LinOp) -> Self {
        LinOp::new(a.rows, a.cols, Body::Weighted(w, Arc::new(a)))
    }

    /// Inclusive 1-D ranges `[lo, hi]` as a difference of prefix rows.
    pub fn range_queries(n: usize, ranges: &[(usize, usize)]) -> Result<Self> {
        let mut trip = Vec::with_capacity(2 * ranges.len());
        for (i, &(lo, hi)) in ranges.iter().enumerate() {
            if lo > hi || hi >= n {
                return Err(Error::invalid("range out of bounds"));
            }
            trip.push((i, hi, 1.0));
            if lo > 0 {
                trip.push((i, lo - 1, -1.0));
            }
        }
        let s = Csr::from_triplets(ranges.len(), n, &trip)?;
        LinOp::product_binary(LinOp::sparse(s), LinOp::prefix(n))
    }

    /// Inclusive axis-aligned boxes over a row-major domain, each expressed
    /// by inclusion-exclusion over `2^d` corners of the Kronecker prefix.
    pub fn box_queries(shape: &[usize], boxes: &[Vec<(usize, usize)>]) -> Result<Self> {
        let d = shape.len();
        if d == 0 {
            return Err(Error::invalid("empty domain shape"));
        }
        if d == 1 {
            let ranges: Vec<_> = boxes
                .iter()
                .map(|b| b.first().copied().ok_or_else(|| Error::invalid("box rank")))
                .collect::<Result<_>>()?;
            return LinOp::range_queries(shape[0], &ranges);
        }
        let n: usize = shape.iter().product();
        let mut trip = Vec::new();
        for (i, b) in boxes.iter().enumerate() {
            if b.len() != d {
                return Err(Error::dim("box rank", d, b.len()));
            }
            for (ax, &(lo, hi)) in b.iter().enumerate() {
                if lo > hi || hi >= shape[ax] {
                    return Err(Error::invalid("box out of bounds"));
                }
            }
            'corner: for mask in 0..(1usize << d) {
                let mut idx = 0usize;
                let mut sign = 1.0;
                for ax in 0..d {
                    let (lo, hi) = b[ax];
                    let c = if mask >> ax & 1 == 1 {
                        if lo == 0 {
                            continue 'corner;
                        }
                        sign = -sign;
                        lo - 1
                    } else {
                        hi
                    };
                    idx = idx * shape[ax] + c;
                }
                trip.push((i, idx, sign));
            }
        }
        let s = Csr::from_triplets(boxes.len(), n, &trip)?;
        let k = LinOp::kron_all(shape.iter().map(|&m| LinOp::prefix(m)).collect())?;
        LinOp::product_binary(LinOp::sparse(s), k)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn body(&self) -> &Body {
        &self.body
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::dim("matvec input", self.cols, x.len()));
        }
        Ok(self.apply(x))
    }

    /// `A^T u`.
    pub fn rmatvec(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.rows {
            return Err(Error::dim("transpose matvec input", self.rows, u.len()));
        }
        Ok(self.apply_t(u))
    }

    pub(crate) fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        match &self.body {
            Body::Dense(d) => d.matvec(x),
            Body::Sparse(s) => s.matvec(x),
            Body::Identity => x.to_vec(),
            Body::Ones => vec![x.iter().sum(); self.rows],
            Body::Prefix => {
                let mut acc = 0.0;
                x.iter()
                    .map(|v| {
                        acc += v;
                        acc
                    })
                    .collect()
            }
            Body::Suffix => suffix_sums(x),
            Body::Wavelet { transposed: false } => haar::forward(x),
            Body::Wavelet { transposed: true } => haar::adjoint(x),
            Body::Kronecker(a, b) => kron_apply(a, b, x, false),
            Body::Union(ops) => {
                let mut out = Vec::with_capacity(self.rows);
                for op in ops.iter() {
                    out.extend(op.apply(x));
                }
                out
            }
            Body::Product { left, right, .. } => left.apply(&right.apply(x)),
            Body::Weighted(w, a) => {
                let mut y = a.apply(x);
                y.iter_mut().for_each(|v| *v *= w);
                y
            }
            Body::Transposed(a) => a.apply_t(x),
        }
    }

    pub(crate) fn apply_t(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.rows);
        match &self.body {
            Body::Dense(d) => d.rmatvec(u),
            Body::Sparse(s) => s.rmatvec(u),
            Body::Identity => u.to_vec(),
            Body::Ones => vec![u.iter().sum(); self.cols],
            Body::Prefix => suffix_sums(u),
            Body::Suffix => {
                let mut acc = 0.0;
                u.iter()
                    .map(|v| {
                        acc += v;
                        acc
                    })
                    .collect()
            }
            Body::Wavelet { transposed: false } => haar::adjoint(u),
            Body::Wavelet { transposed: true } => haar::forward(u),
            Body::Kronecker(a, b) => kron_apply(a, b, u, true),
            Body::Union(ops) => {
                let mut out = vec![0.0; self.cols];
                let mut off = 0;
                for op in ops.iter() {
                    let part = op.apply_t(&u[off..off + op.rows]);
                    for (o, p) in out.iter_mut().zip(part) {
                        *o += p;
                    }
                    off += op.rows;
                }
                out
            }
            Body::Product { left, right, .. } => right.apply_t(&left.apply_t(u)),
            Body::Weighted(w, a) => {
                let mut y = a.apply_t(u);
                y.iter_mut().for_each(|v| *v *= w);
                y
            }
            Body::Transposed(a) => a.apply(u),
        }
    }

    /// Structural transpose; applying it twice yields an equal operator.
    pub fn transpose(&self) -> LinOp {
        let body = match &self.body {
            Body::Dense(d) => Body::Dense(Arc::new(d.transpose())),
            Body::Sparse(s) => Body::Sparse(Arc::new(s.transpose())),
            Body::Identity => Body::Identity,
            Body::Ones => Body::Ones,
            Body::Prefix => Body::Suffix,
            Body::Suffix => Body::Prefix,
            Body::Wavelet { transposed } => Body::Wavelet {
                transposed: !transposed,
            },
            Body::Kronecker(a, b) => Body::Kronecker(Arc::new(a.transpose()), Arc::new(b.transpose())),
            Body::Union(_) => Body::Transposed(Arc::new(self.clone())),
            Body::Product {
                left,
                right,
                binary,
            } => Body::Product {
                left: Arc::new(right.transpose()),
                right: Arc::new(left.transpose()),
                binary: *binary,
            },
            Body::Weighted(w, a) => Body::Weighted(*w, Arc::new(a.transpose())),
            Body::Transposed(a) => return (**a).clone(),
        };
        LinOp::new(self.cols, self.rows, body)
    }

    /// True when every entry is known to be 0 or 1.
    pub fn is_binary(&self) -> bool {
        match &self.body {
            Body::Identity | Body::Ones | Body::Prefix | Body::Suffix => true,
            Body::Dense(d) => d.data().iter().all(|&v| v == 0.0 || v == 1.0),
            Body::Sparse(s) => s.is_binary(),
            Body::Wavelet { .. } => self.rows == 1,
            Body::Kronecker(a, b) => a.is_binary() && b.is_binary(),
            Body::Union(ops) => ops.iter().all(LinOp::is_binary),
            Body::Product { binary, .. } => *binary,
            Body::Weighted(w, a) => *w == 1.0 && a.is_binary(),
            Body::Transposed(a) => a.is_binary(),
        }
    }

    /// Element-wise absolute value.
    pub fn abs(&self) -> Result<LinOp> {
        self.elementwise(f64::abs)
    }

    /// Element-wise square.
    pub fn sqr(&self) -> Result<LinOp> {
        self.elementwise(|v| v * v)
    }

    fn elementwise(&self, f: fn(f64) -> f64) -> Result<LinOp> {
        if self.is_binary() {
            return Ok(self.clone());
        }
        let body = match &self.body {
            Body::Dense(d) => Body::Dense(Arc::new(d.map(f))),
            Body::Sparse(s) => Body::Sparse(Arc::new(s.map(f))),
            Body::Kronecker(a, b) => Body::Kronecker(Arc::new(a.elementwise(f)?), Arc::new(b.elementwise(f)?)),
            Body::Union(ops) => Body::Union(Arc::new(
                ops.iter().map(|o| o.elementwise(f)).collect::<Result<Vec<_>>>()?,
            )),
            Body::Weighted(w, a) => Body::Weighted(f(*w), Arc::new(a.elementwise(f)?)),
            Body::Transposed(a) => Body::Transposed(Arc::new(a.elementwise(f)?)),
            _ => Body::Dense(Arc::new(self.materialize()?.map(f))),
        };
        Ok(LinOp::new(self.rows, self.cols, body))
    }

    /// `abs(A)^T 1`: the L1 norm of every column.
    pub fn column_norms_l1(&self) -> Result<Vec<f64>> {
        Ok(self.abs()?.apply_t(&vec![1.0; self.rows]))
    }

    /// Maximum L1 column norm.
    pub fn sensitivity_l1(&self) -> Result<f64> {
        match &self.body {
            Body::Wavelet { transposed: false } => Ok(haar::l1_sensitivity(self.rows)),
            // columns of the transpose are rows; the total row is the widest
            Body::Wavelet { transposed: true } => Ok(self.rows as f64),
            Body::Kronecker(a, b) => Ok(a.sensitivity_l1()? * b.sensitivity_l1()?),
            Body::Weighted(w, a) => Ok(w.abs() * a.sensitivity_l1()?),
            Body::Identity if self.rows > 0 => Ok(1.0),
            _ => Ok(max_of(&self.column_norms_l1()?)),
        }
    }

    /// Maximum L2 column norm.
    pub fn sensitivity_l2(&self) -> Result<f64> {
        match &self.body {
            Body::Wavelet { transposed: false } => Ok(libm::sqrt(haar::l1_sensitivity(self.rows))),
            Body::Wavelet { transposed: true } => Ok(libm::sqrt(self.rows as f64)),
            Body::Kronecker(a, b) => Ok(a.sensitivity_l2()? * b.sensitivity_l2()?),
            Body::Weighted(w, a) => Ok(w.abs() * a.sensitivity_l2()?),
            _ => Ok(libm::sqrt(max_of(&self.sqr()?.apply_t(&vec![1.0; self.rows])))),
        }
    }

    /// Largest absolute entry.
    pub fn max_abs_entry(&self) -> Result<f64> {
        if self.rows == 0 || self.cols == 0 {
            return Ok(0.0);
        }
        Ok(match &self.body {
            Body::Identity | Body::Ones | Body::Prefix | Body::Suffix | Body::Wavelet { .. } => 1.0,
            Body::Dense(d) => d.data().iter().fold(0.0, |m, v| m.max(v.abs())),
            Body::Sparse(s) => s.max_abs(),
            Body::Kronecker(a, b) => a.max_abs_entry()? * b.max_abs_entry()?,
            Body::Union(ops) => {
                let mut m: f64 = 0.0;
                for o in ops.iter() {
                    m = m.max(o.max_abs_entry()?);
                }
                m
            }
            Body::Product { binary: true, .. } => 1.0,
            Body::Product { .. } => self.abs()?.materialize()?.data().iter().fold(0.0, |m, v| m.max(*v)),
            Body::Weighted(w, a) => w.abs() * a.max_abs_entry()?,
            Body::Transposed(a) => a.max_abs_entry()?,
        })
    }

    /// Row `i` as a dense vector, computed as `A^T e_i`.
    pub fn row(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.rows {
            return Err(Error::dim("row index", self.rows, i));
        }
        let mut e = vec![0.0; self.rows];
        e[i] = 1.0;
        Ok(self.apply_t(&e))
    }

    /// Dense copy. Fails with a capacity error before allocating when the
    /// result would exceed the memory cap.
    pub fn materialize(&self) -> Result<Dense> {
        check_dense("materialize", self.rows, self.cols)?;
        Ok(match &self.body {
            Body::Dense(d) => (**d).clone(),
            Body::Sparse(s) => s.to_dense(),
            Body::Identity => Dense::identity(self.rows),
            Body::Kronecker(a, b) => Dense::kron(&a.materialize()?, &b.materialize()?),
            Body::Union(ops) => Dense::vstack(&ops.iter().map(LinOp::materialize).collect::<Result<Vec<_>>>()?)?,
            Body::Weighted(w, a) => a.materialize()?.scale(*w),
            Body::Transposed(a) => a.materialize()?.transpose(),
            _ => {
                let mut d = Dense::zeros(self.rows, self.cols);
                let mut e = vec![0.0; self.cols];
                for j in 0..self.cols {
                    e[j] = 1.0;
                    for (i, v) in self.apply(&e).into_iter().enumerate() {
                        d.set(i, j, v);
                    }
                    e[j] = 0.0;
                }
                d
            }
        })
    }

    /// `A^T A` as a dense `n x n` matrix.
    pub fn gram(&self) -> Result<Dense> {
        check_dense("gram", self.cols, self.cols)?;
        match &self.body {
            Body::Identity => return Ok(Dense::identity(self.cols)),
            Body::Kronecker(a, b) => return Ok(Dense::kron(&a.gram()?, &b.gram()?)),
            Body::Weighted(w, a) => return Ok(a.gram()?.scale(w * w)),
            _ => {}
        }
        let n = self.cols;
        let mut g = Dense::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply_t(&self.apply(&e));
            for (i, v) in col.into_iter().enumerate() {
                g.set(i, j, v);
            }
            e[j] = 0.0;
        }
        Ok(g)
    }

    /// Explicit sparse copy. Fails with a capacity error when the number of
    /// stored entries would exceed the memory cap.
    pub fn to_csr(&self) -> Result<Csr> {
        let nnz_cap = |nnz: u128| check_cap("sparse materialize", nnz * 16);
        Ok(match &self.body {
            Body::Sparse(s) => (**s).clone(),
            Body::Dense(d) => Csr::from_dense(d),
            Body::Identity => Csr::identity(self.rows),
            Body::Ones | Body::Prefix | Body::Suffix => {
                let (m, n) = (self.rows, self.cols);
                let nnz = match self.body {
                    Body::Ones => m as u128 * n as u128,
                    _ => n as u128 * (n as u128 + 1) / 2,
                };
                nnz_cap(nnz)?;
                let mut indptr = Vec::with_capacity(m + 1);
                let mut indices = Vec::with_capacity(nnz as usize);
                indptr.push(0);
                for i in 0..m {
                    match self.body {
                        Body::Ones => indices.extend(0..n),
                        Body::Prefix => indices.extend(0..=i),
                        _ => indices.extend(i..n),
                    }
                    indptr.push(indices.len());
                }
                let values = vec![1.0; indices.len()];
                Csr::from_parts(m, n, indptr, indices, values)?
            }
            Body::Wavelet { transposed } => {
                let n = self.rows;
                nnz_cap(n as u128 * (1 + n.trailing_zeros() as u128))?;
                let mut trip = Vec::new();
                trip.extend((0..n).map(|j| (0, j, 1.0)));
                let mut blocks = 1;
                while blocks < n {
                    let width = n / blocks;
                    for b in 0..blocks {
                        for j in 0..width {
                            let sign = if j < width / 2 { 1.0 } else { -1.0 };
                            trip.push((blocks + b, b * width + j, sign));
                        }
                    }
                    blocks *= 2;
                }
                let c = Csr::from_triplets(n, n, &trip)?;
                if *transposed {
                    c.transpose()
                } else {
                    c
                }
            }
            Body::Kronecker(a, b) => {
                let (ca, cb) = (a.to_csr()?, b.to_csr()?);
                nnz_cap(ca.nnz() as u128 * cb.nnz() as u128)?;
                Csr::kron(&ca, &cb)
            }
            Body::Union(ops) => Csr::vstack(&ops.iter().map(LinOp::to_csr).collect::<Result<Vec<_>>>()?)?,
            Body::Product { left, right, .. } => match (&left.body, &right.body) {
                (Body::Sparse(s), Body::Prefix | Body::Suffix) => {
                    let prefix = matches!(right.body, Body::Prefix);
                    let c = sparse_times_triangular(s, prefix)?;
                    nnz_cap(c.nnz() as u128)?;
                    c
                }
                _ => {
                    let c = left.to_csr()?.matmul(&right.to_csr()?)?;
                    nnz_cap(c.nnz() as u128)?;
                    c
                }
            },
            Body::Weighted(w, a) => {
                let w = *w;
                a.to_csr()?.map(|v| v * w)
            }
            Body::Transposed(a) => a.to_csr()?.transpose(),
        })
    }

    /// Approximate heap footprint of this operator tree in bytes (shared
    /// children are counted once per reference).
    pub fn stored_bytes(&self) -> usize {
        let node = core::mem::size_of::<LinOp>();
        node + match &self.body {
            Body::Dense(d) => d.data().len() * 8,
            Body::Sparse(s) => s.nnz() * 16 + (s.rows() + 1) * 8,
            Body::Kronecker(a, b) => a.stored_bytes() + b.stored_bytes(),
            Body::Union(ops) => ops.iter().map(LinOp::stored_bytes).sum(),
            Body::Product { left, right, .. } => left.stored_bytes() + right.stored_bytes(),
            Body::Weighted(_, a) | Body::Transposed(a) => a.stored_bytes(),
            _ => 0,
        }
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, &x| m.max(x))
}

fn suffix_sums(x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    let mut acc = 0.0;
    for i in (0..x.len()).rev() {
        acc += x[i];
        out[i] = acc;
    }
    out
}

/// `(A ⊗ B) x` or `(A ⊗ B)^T x` without forming the product: `x` is viewed
/// as an `a_in x b_in` row-major matrix, `A` is applied to every column and
/// then `B` to every row.
fn kron_apply(a: &LinOp, b: &LinOp, x: &[f64], transposed: bool) -> Vec<f64> {
    let (a_in, a_out, b_in, b_out) = if transposed {
        (a.rows, a.cols, b.rows, b.cols)
    } else {
        (a.cols, a.rows, b.cols, b.rows)
    };
    let run = |op: &LinOp, v: &[f64]| if transposed { op.apply_t(v) } else { op.apply(v) };

    let z = if matches!(a.body, Body::Identity) {
        x.to_vec()
    } else {
        let mut z = vec![0.0; a_out * b_in];
        let mut col = vec![0.0; a_in];
        for j in 0..b_in {
            for i in 0..a_in {
                col[i] = x[i * b_in + j];
            }
            for (i, v) in run(a, &col).into_iter().enumerate() {
                z[i * b_in + j] = v;
            }
        }
        z
    };
    if matches!(b.body, Body::Identity) {
        return z;
    }
    let mut y = Vec::with_capacity(a_out * b_out);
    for i in 0..a_out {
        y.extend(run(b, &z[i * b_in..(i + 1) * b_in]));
    }
    y
}

/// `S * Prefix` (or `S * Suffix`) row by row: each row is piecewise constant
/// between the column indices of `S`, so no triangular matrix is formed.
fn sparse_times_triangular(s: &Csr, prefix: bool) -> Result<Csr> {
    let n = s.cols();
    let mut indptr = vec![0usize];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for i in 0..s.rows() {
        let ent: Vec<(usize, f64)> = s.row(i).collect();
        if prefix {
            // value at column j = sum of entries with index >= j
            let mut segs = Vec::new();
            let mut acc = 0.0;
            let mut hi = n;
            for &(k, v) in ent.iter().rev() {
                if acc != 0.0 {
                    segs.push((k + 1, hi, acc));
                }
                acc += v;
                hi = k + 1;
            }
            if acc != 0.0 {
                segs.push((0, hi, acc));
            }
            for &(lo, hi, v) in segs.iter().rev() {
                indices.extend(lo..hi);
                values.extend(core::iter::repeat(v).take(hi - lo));
            }
        } else {
            // value at column j = sum of entries with index <= j
            let mut acc = 0.0;
            let mut lo = 0;
            for &(k, v) in &ent {
                if acc != 0.0 {
                    indices.extend(lo..k);
                    values.extend(core::iter::repeat(acc).take(k - lo));
                }
                acc += v;
                lo = k;
            }
            if acc != 0.0 {
                indices.extend(lo..n);
                values.extend(core::iter::repeat(acc).take(n - lo));
            }
        }
        indptr.push(indices.len());
    }
    Csr::from_parts(s.rows(), n, indptr, indices, values)
}
