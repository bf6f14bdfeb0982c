//! Transformations registered in the kernel, each with a fixed stability.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Csr, LinOp};
use crate::table::Predicate;

/// Surjective map from `n` cells onto `p` groups.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionMap {
    p: usize,
    group_of: Vec<usize>,
}

impl PartitionMap {
    pub fn new(group_of: Vec<usize>) -> Result<Self> {
        let p = group_of.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; p];
        for &g in &group_of {
            seen[g] = true;
        }
        if let Some(g) = seen.iter().position(|s| !s) {
            return Err(Error::Partition(format!("group {g} is empty")));
        }
        Ok(PartitionMap { p, group_of })
    }

    /// Builds a map from explicit cell lists, which must be disjoint and
    /// cover `0..n`.
    pub fn from_groups(n: usize, groups: &[Vec<usize>]) -> Result<Self> {
        let mut group_of = vec![usize::MAX; n];
        for (g, cells) in groups.iter().enumerate() {
            if cells.is_empty() {
                return Err(Error::Partition(format!("group {g} is empty")));
            }
            for &c in cells {
                if c >= n {
                    return Err(Error::Partition(format!("cell {c} out of range")));
                }
                if group_of[c] != usize::MAX {
                    return Err(Error::Partition(format!("cell {c} is in more than one group")));
                }
                group_of[c] = g;
            }
        }
        if let Some(c) = group_of.iter().position(|&g| g == usize::MAX) {
            return Err(Error::Partition(format!("cell {c} is not covered")));
        }
        Ok(PartitionMap { p: groups.len(), group_of })
    }

    pub fn identity(n: usize) -> Self {
        PartitionMap {
            p: n,
            group_of: (0..n).collect(),
        }
    }

    /// Renumbers groups in order of first appearance.
    pub fn canonical(&self) -> Self {
        let mut remap = vec![usize::MAX; self.p];
        let mut next = 0;
        let group_of = self
            .group_of
            .iter()
            .map(|&g| {
                if remap[g] == usize::MAX {
                    remap[g] = next;
                    next += 1;
                }
                remap[g]
            })
            .collect();
        PartitionMap { p: self.p, group_of }
    }

    pub fn n(&self) -> usize {
        self.group_of.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn group_of(&self) -> &[usize] {
        &self.group_of
    }

    /// Cell indices of every group, ascending.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.p];
        for (c, &g) in self.group_of.iter().enumerate() {
            out[g].push(c);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.p];
        for &g in &self.group_of {
            s[g] += 1;
        }
        s
    }

    /// The `p x n` 0/1 matrix `P`.
    pub fn to_linop(&self) -> LinOp {
        let trip: Vec<_> = self.group_of.iter().enumerate().map(|(c, &g)| (g, c, 1.0)).collect();
        LinOp::sparse(Csr::from_triplets(self.p, self.n(), &trip).expect("partition indices are in range"))
    }

    /// `P^+ = P^T D^{-1}` with `D` the diagonal of group sizes.
    pub fn pinv(&self) -> LinOp {
        let sizes = self.sizes();
        let trip: Vec<_> = self
            .group_of
            .iter()
            .enumerate()
            .map(|(c, &g)| (c, g, 1.0 / sizes[g] as f64))
            .collect();
        LinOp::sparse(Csr::from_triplets(self.n(), self.p, &trip).expect("partition indices are in range"))
    }

    /// `P x`.
    pub fn reduce(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n() {
            return Err(Error::dim("partition reduce", self.n(), x.len()));
        }
        let mut out = vec![0.0; self.p];
        for (v, &g) in x.iter().zip(&self.group_of) {
            out[g] += v;
        }
        Ok(out)
    }

    /// `P^+ y`: spreads each group value uniformly over its cells.
    pub fn expand(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.p {
            return Err(Error::dim("partition expand", self.p, y.len()));
        }
        let sizes = self.sizes();
        Ok(self.group_of.iter().map(|&g| y[g] / sizes[g] as f64).collect())
    }

    /// Sub-vectors of `x`, one per group.
    pub fn split(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.n() {
            return Err(Error::dim("partition split", self.n(), x.len()));
        }
        Ok(self
            .groups()
            .into_iter()
            .map(|cells| cells.into_iter().map(|c| x[c]).collect())
            .collect())
    }
}

/// A transformation that can be registered under a source.
#[derive(Clone, Debug, PartialEq)]
pub enum Transform {
    Where(Predicate),
    Select(Vec<String>),
    GroupBy(Vec<String>),
    Vectorize,
    Reduce(PartitionMap),
    Linear(LinOp),
}

impl Transform {
    pub fn name(&self) -> &'static str {
        match self {
            Transform::Where(_) => "where",
            Transform::Select(_) => "select",
            Transform::GroupBy(_) => "group_by",
            Transform::Vectorize => "vectorize",
            Transform::Reduce(_) => "reduce",
            Transform::Linear(_) => "linear",
        }
    }

    pub fn on_table(&self) -> bool {
        matches!(
            self,
            Transform::Where(_) | Transform::Select(_) | Transform::GroupBy(_) | Transform::Vectorize
        )
    }

    /// Declared stability `c`: neighbouring inputs map to outputs at
    /// distance at most `c`.
    pub fn stability(&self) -> Result<f64> {
        Ok(match self {
            Transform::GroupBy(_) => 2.0,
            Transform::Linear(m) => m.sensitivity_l1()?,
            _ => 1.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_and_expand() {
        let p = PartitionMap::new(vec![0, 0, 1]).unwrap();
        assert_eq!(p.reduce(&[1.0, 2.0, 3.0]).unwrap(), vec![3.0, 3.0]);
        assert_eq!(p.expand(&[3.0, 3.0]).unwrap(), vec![1.5, 1.5, 3.0]);
        assert_eq!(p.split(&[1.0, 2.0, 3.0]).unwrap(), vec![vec![1.0, 2.0], vec![3.0]]);
        assert_eq!(p.pinv().materialize().unwrap().data(), &[0.5, 0.0, 0.5, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn overlapping_groups_rejected() {
        assert!(PartitionMap::from_groups(4, &[vec![0, 1], vec![1, 2, 3]]).is_err());
        assert!(PartitionMap::from_groups(4, &[vec![0, 1], vec![2]]).is_err());
        assert!(PartitionMap::new(vec![0, 2]).is_err());
    }

    #[test]
    fn stabilities() {
        let m = LinOp::dense(crate::matrix::Dense::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap());
        assert_eq!(Transform::Linear(m).stability().unwrap(), 2.0);
        assert_eq!(Transform::GroupBy(vec![]).stability().unwrap(), 2.0);
        assert_eq!(Transform::Vectorize.stability().unwrap(), 1.0);
    }
}
