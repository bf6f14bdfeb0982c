use alloc::vec;
use alloc::vec::Vec;

use super::Dense;
use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted, de-duplicated column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    /// Builds a CSR matrix from `(row, col, value)` triplets. Duplicate
    /// coordinates are summed; explicit zeros are dropped.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut t: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(i, j, _) in &t {
            if i >= rows {
                return Err(Error::dim("sparse triplet row", rows, i));
            }
            if j >= cols {
                return Err(Error::dim("sparse triplet col", cols, j));
            }
        }
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        let mut row_of = Vec::with_capacity(t.len());
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                row_of.push(i);
                last = Some((i, j));
            }
        }
        let mut keep_idx = Vec::with_capacity(indices.len());
        let mut keep_val = Vec::with_capacity(values.len());
        for ((j, v), i) in indices.into_iter().zip(values).zip(row_of) {
            if v != 0.0 {
                keep_idx.push(j);
                keep_val.push(v);
                indptr[i + 1] += 1;
            }
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        Ok(Csr {
            rows,
            cols,
            indptr,
            indices: keep_idx,
            values: keep_val,
        })
    }

    /// Builds directly from CSR arrays. Column indices within each row must
    /// be strictly increasing.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != rows + 1 {
            return Err(Error::dim("csr indptr", rows + 1, indptr.len()));
        }
        if indices.len() != values.len() || indptr[rows] != indices.len() {
            return Err(Error::dim("csr nnz", indptr[rows], indices.len()));
        }
        for i in 0..rows {
            let r = &indices[indptr[i]..indptr[i + 1]];
            if r.windows(2).any(|w| w[0] >= w[1]) || r.last().is_some_and(|&j| j >= cols) {
                return Err(Error::invalid("csr column indices must be sorted and in range"));
            }
        }
        Ok(Csr {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Csr {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            out.extend(self.row(i).map(|(j, v)| (i, j, v)));
        }
        out
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn rmatvec(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &ui) in u.iter().enumerate() {
            if ui == 0.0 {
                continue;
            }
            for (j, v) in self.row(i) {
                out[j] += v * ui;
            }
        }
        out
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.cols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.cols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                let p = next[j];
                indices[p] = i;
                values[p] = v;
                next[j] += 1;
            }
        }
        Csr {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Csr {
        let mut out = self.clone();
        for v in &mut out.values {
            *v = f(*v);
        }
        out
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 1.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Dense {
        let mut d = Dense::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                d.set(i, j, v);
            }
        }
        d
    }

    pub fn from_dense(d: &Dense) -> Csr {
        let mut indptr = Vec::with_capacity(d.rows() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..d.rows() {
            for (j, &v) in d.row(i).iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Csr {
            rows: d.rows(),
            cols: d.cols(),
            indptr,
            indices,
            values,
        }
    }

    pub fn vstack(blocks: &[Csr]) -> Result<Csr> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        let mut indptr = vec![0usize];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut rows = 0;
        for b in blocks {
            if b.cols != cols {
                return Err(Error::dim("sparse vstack", cols, b.cols));
            }
            let base = indices.len();
            indices.extend_from_slice(&b.indices);
            values.extend_from_slice(&b.values);
            indptr.extend(b.indptr[1..].iter().map(|p| p + base));
            rows += b.rows;
        }
        Ok(Csr {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn kron(a: &Csr, b: &Csr) -> Csr {
        let mut indptr = vec![0usize];
        let mut indices = Vec::with_capacity(a.nnz() * b.nnz());
        let mut values = Vec::with_capacity(a.nnz() * b.nnz());
        for i in 0..a.rows {
            for k in 0..b.rows {
                for (j, av) in a.row(i) {
                    for (l, bv) in b.row(k) {
                        indices.push(j * b.cols + l);
                        values.push(av * bv);
                    }
                }
                indptr.push(indices.len());
            }
        }
        Csr {
            rows: a.rows * b.rows,
            cols: a.cols * b.cols,
            indptr,
            indices,
            values,
        }
    }

    /// Sparse-sparse product.
    pub fn matmul(&self, other: &Csr) -> Result<Csr> {
        if self.cols != other.rows {
            return Err(Error::dim("sparse matmul", self.cols, other.rows));
        }
        let mut acc = vec![0.0; other.cols];
        let mut mark = vec![usize::MAX; other.cols];
        let mut indptr = vec![0usize];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut touched = Vec::new();
        for i in 0..self.rows {
            touched.clear();
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                if acc[j] != 0.0 {
                    indices.push(j);
                    values.push(acc[j]);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Csr {
            rows: self.rows,
            cols: other.cols,
            indptr,
            indices,
            values,
        })
    }
}
