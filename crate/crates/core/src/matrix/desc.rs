//! Serializable operator descriptions: a nested `{kind, params, children}`
//! tree with sparse blocks as triplet arrays.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};

use serde::{Deserialize, Serialize};

use super::{Body, Csr, Dense, LinOp};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OpParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    /// Row-major values of a dense block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triplets: Option<Vec<(usize, usize, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary: Option<bool>,
}

impl OpParams {
    fn is_empty(&self) -> bool {
        *self == OpParams::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpDesc {
    pub kind: String,
    #[serde(default, skip_serializing_if = "OpParams::is_empty")]
    pub params: OpParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<OpDesc>,
}

impl OpDesc {
    fn leaf(kind: &str, params: OpParams) -> Self {
        OpDesc {
            kind: kind.to_string(),
            params,
            children: Vec::new(),
        }
    }

    fn node(kind: &str, params: OpParams, children: Vec<OpDesc>) -> Self {
        OpDesc {
            kind: kind.to_string(),
            params,
            children,
        }
    }
}

fn need<T: Copy>(v: Option<T>, kind: &str, field: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("operator `{kind}` needs `{field}`")))
}

impl LinOp {
    pub fn describe(&self) -> OpDesc {
        let n = |n: usize| OpParams {
            n: Some(n),
            ..OpParams::default()
        };
        match &self.body {
            Body::Dense(d) => OpDesc::leaf(
                "dense",
                OpParams {
                    rows: Some(d.rows()),
                    cols: Some(d.cols()),
                    values: Some(d.data().to_vec()),
                    ..OpParams::default()
                },
            ),
            Body::Sparse(s) => OpDesc::leaf(
                "sparse",
                OpParams {
                    rows: Some(s.rows()),
                    cols: Some(s.cols()),
                    triplets: Some(s.triplets()),
                    ..OpParams::default()
                },
            ),
            Body::Identity => OpDesc::leaf("identity", n(self.cols)),
            Body::Ones => OpDesc::leaf(
                "ones",
                OpParams {
                    rows: Some(self.rows),
                    cols: Some(self.cols),
                    ..OpParams::default()
                },
            ),
            Body::Prefix => OpDesc::leaf("prefix", n(self.cols)),
            Body::Suffix => OpDesc::leaf("suffix", n(self.cols)),
            Body::Wavelet { transposed: false } => OpDesc::leaf("wavelet", n(self.cols)),
            Body::Wavelet { transposed: true } => {
                OpDesc::node("transpose", OpParams::default(), vec![OpDesc::leaf("wavelet", n(self.cols))])
            }
            Body::Kronecker(a, b) => OpDesc::node("kronecker", OpParams::default(), vec![a.describe(), b.describe()]),
            Body::Union(ops) => OpDesc::node("union", OpParams::default(), ops.iter().map(LinOp::describe).collect()),
            Body::Product { left, right, binary } => OpDesc::node(
                "product",
                OpParams {
                    binary: binary.then_some(true),
                    ..OpParams::default()
                },
                vec![left.describe(), right.describe()],
            ),
            Body::Weighted(w, a) => OpDesc::node(
                "weighted",
                OpParams {
                    weight: Some(*w),
                    ..OpParams::default()
                },
                vec![a.describe()],
            ),
            Body::Transposed(a) => OpDesc::node("transpose", OpParams::default(), vec![a.describe()]),
        }
    }

    pub fn from_desc(d: &OpDesc) -> Result<LinOp> {
        let k = d.kind.as_str();
        let p = &d.params;
        let children = || d.children.iter().map(LinOp::from_desc).collect::<Result<Vec<_>>>();
        let exactly = |count: usize| -> Result<Vec<LinOp>> {
            let c = children()?;
            if c.len() != count {
                return Err(Error::Config(format!("operator `{k}` takes {count} children, got {}", c.len())));
            }
            Ok(c)
        };
        Ok(match k {
            "identity" => LinOp::identity(need(p.n, k, "n")?),
            "total" => LinOp::total(need(p.n, k, "n")?),
            "ones" => LinOp::ones(need(p.rows, k, "rows")?, need(p.cols, k, "cols")?),
            "prefix" => LinOp::prefix(need(p.n, k, "n")?),
            "suffix" => LinOp::suffix(need(p.n, k, "n")?),
            "wavelet" => LinOp::wavelet(need(p.n, k, "n")?)?,
            "dense" => {
                let values = p
                    .values
                    .clone()
                    .ok_or_else(|| Error::Config("operator `dense` needs `values`".into()))?;
                LinOp::dense(Dense::new(need(p.rows, k, "rows")?, need(p.cols, k, "cols")?, values)?)
            }
            "sparse" => {
                let t = p.triplets.as_deref().unwrap_or(&[]);
                LinOp::sparse(Csr::from_triplets(need(p.rows, k, "rows")?, need(p.cols, k, "cols")?, t)?)
            }
            "kronecker" => {
                let c = children()?;
                if c.is_empty() {
                    return Err(Error::Config("operator `kronecker` needs children".into()));
                }
                LinOp::kron_all(c)?
            }
            "union" => LinOp::union(children()?)?,
            "product" => {
                let mut c = exactly(2)?;
                let b = c.pop().unwrap();
                let a = c.pop().unwrap();
                if p.binary == Some(true) {
                    LinOp::product_binary(a, b)?
                } else {
                    LinOp::product(a, b)?
                }
            }
            "weighted" => LinOp::weighted(need(p.weight, k, "weight")?, exactly(1)?.pop().unwrap()),
            "transpose" => exactly(1)?.pop().unwrap().transpose(),
            other => return Err(Error::Config(format!("unknown operator kind `{other}`"))),
        })
    }
}
