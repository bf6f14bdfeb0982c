//! The protected kernel.
//!
//! The kernel owns every private payload. Clients only see [`SourceRef`]
//! handles, public shapes and schemas, and the randomized answers of
//! budget-checked queries. Each source carries the stability of the edge to
//! its parent and a budget counter; [`Kernel::request_budget`] walks up the
//! tree, charging `stability * sigma` at ordinary nodes and only the increase
//! of the maximum child spend at partition nodes.

mod epsilon;
mod ledger;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use epsilon::Epsilon;
pub use ledger::{HistoryEntry, Ledger, LedgerRow, Outcome, TranscriptEntry};

use crate::error::{Error, Result};
use crate::matrix::{Csr, LinOp};
use crate::table::{Schema, Table};
use crate::transform::{PartitionMap, Transform};
use crate::vector::DataVector;
use crate::{measurement, partition, selection};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    Table,
    Vector,
    PartitionDummy,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Table => "table",
            SourceKind::Vector => "vector",
            SourceKind::PartitionDummy => "partition-dummy",
        }
    }
}

/// Opaque handle to a data source held by a kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SourceRef {
    id: u32,
    kind: SourceKind,
}

impl SourceRef {
    pub fn id(self) -> u32 {
        self.id
    }

    pub fn kind(self) -> SourceKind {
        self.kind
    }
}

/// Private-to-public operators the kernel can run.
#[derive(Clone, Debug, PartialEq)]
pub enum QueryOp {
    /// Laplace noise calibrated to the L1 sensitivity of the query.
    VectorLaplace(LinOp),
    /// Table row count plus Laplace noise.
    NoisyCount,
    /// Exponential-mechanism choice of the workload row worst approximated
    /// by `estimate`.
    WorstApprox { workload: LinOp, estimate: Vec<f64> },
    /// Contiguous partition of a 1-D vector into near-uniform buckets.
    /// `measure_eps` is the budget the caller plans to spend measuring the
    /// buckets; it sets the per-bucket penalty.
    DawaPartition { measure_eps: f64 },
    /// Clustering of cells with similar noisy counts.
    AhpPartition { measure_eps: f64, eta: f64 },
}

impl QueryOp {
    pub fn name(&self) -> &'static str {
        match self {
            QueryOp::VectorLaplace(_) => "vector_laplace",
            QueryOp::NoisyCount => "noisy_count",
            QueryOp::WorstApprox { .. } => "worst_approx",
            QueryOp::DawaPartition { .. } => "dawa_partition",
            QueryOp::AhpPartition { .. } => "ahp_partition",
        }
    }
}

/// Randomized answer returned by [`Kernel::measure`].
#[derive(Clone, Debug, PartialEq)]
pub enum Answer {
    Noisy { values: Vec<f64>, noise_scale: f64 },
    Count(f64),
    Selected(usize),
    Partition(PartitionMap),
}

impl Answer {
    fn digest(&self) -> String {
        let mut h = Sha256::new();
        match self {
            Answer::Noisy { values, noise_scale } => {
                h.update(b"noisy");
                h.update(noise_scale.to_le_bytes());
                for v in values {
                    h.update(v.to_le_bytes());
                }
            }
            Answer::Count(c) => {
                h.update(b"count");
                h.update(c.to_le_bytes());
            }
            Answer::Selected(i) => {
                h.update(b"selected");
                h.update((*i as u64).to_le_bytes());
            }
            Answer::Partition(p) => {
                h.update(b"partition");
                for &g in p.group_of() {
                    h.update((g as u64).to_le_bytes());
                }
            }
        }
        let bytes = h.finalize();
        let mut s = String::with_capacity(64);
        for b in bytes.iter() {
            use core::fmt::Write;
            let _ = write!(s, "{b:02x}");
        }
        s
    }
}

#[derive(Clone, Debug)]
enum Payload {
    Table(Table),
    Vector(DataVector),
    None,
}

/// How a source was derived from its parent; used to map measurements back
/// onto an ancestor's domain.
#[derive(Clone, Debug)]
enum Edge {
    Root,
    Table,
    Vectorize,
    Reduce(PartitionMap),
    Linear(LinOp),
    Dummy,
    Split(Vec<usize>),
}

#[derive(Clone, Debug)]
struct Node {
    parent: Option<u32>,
    kind: SourceKind,
    stability: Epsilon,
    budget: Epsilon,
    payload: Payload,
    edge: Edge,
    shape: Vec<usize>,
    schema: Option<Schema>,
    history: Vec<HistoryEntry>,
}

/// Holds private data and enforces the privacy budget.
///
/// All mutation goes through `&mut self`; wrap the kernel in a mutex to share
/// it across threads.
pub struct Kernel {
    nodes: Vec<Node>,
    eps_total: Epsilon,
    transcript: Vec<TranscriptEntry>,
    rng: ChaCha20Rng,
}

impl Kernel {
    /// Takes ownership of `table` with a total budget of `eps_total`.
    pub fn init(table: Table, eps_total: Epsilon, seed: u64) -> Result<Kernel> {
        let schema = table.schema().clone();
        // re-validate so later vectorization cannot fail on a row
        let table = Table::new(schema.clone(), table.rows().to_vec())?;
        Kernel::with_root(
            Node {
                parent: None,
                kind: SourceKind::Table,
                stability: Epsilon::ratio(1, 1)?,
                budget: Epsilon::zero(),
                payload: Payload::Table(table),
                edge: Edge::Root,
                shape: schema.domain_shape(),
                schema: Some(schema),
                history: Vec::new(),
            },
            eps_total,
            seed,
        )
    }

    /// Starts from an already vectorized data set.
    pub fn from_vector(x: DataVector, eps_total: Epsilon, seed: u64) -> Result<Kernel> {
        Kernel::with_root(
            Node {
                parent: None,
                kind: SourceKind::Vector,
                stability: Epsilon::ratio(1, 1)?,
                budget: Epsilon::zero(),
                shape: x.domain_shape().to_vec(),
                payload: Payload::Vector(x),
                edge: Edge::Root,
                schema: None,
                history: Vec::new(),
            },
            eps_total,
            seed,
        )
    }

    fn with_root(root: Node, eps_total: Epsilon, seed: u64) -> Result<Kernel> {
        if eps_total.is_zero() {
            return Err(Error::Config("total privacy budget must be positive".into()));
        }
        Ok(Kernel {
            nodes: vec![root],
            eps_total,
            transcript: Vec::new(),
            rng: ChaCha20Rng::seed_from_u64(seed),
        })
    }

    pub fn root(&self) -> SourceRef {
        SourceRef {
            id: 0,
            kind: self.nodes[0].kind,
        }
    }

    pub fn eps_total(&self) -> &Epsilon {
        &self.eps_total
    }

    fn node(&self, sv: SourceRef) -> Result<&Node> {
        self.nodes
            .get(sv.id as usize)
            .filter(|n| n.kind == sv.kind)
            .ok_or(Error::Lineage(sv.id))
    }

    /// Public domain shape of a vector source (or the schema shape of a table).
    pub fn shape(&self, sv: SourceRef) -> Result<&[usize]> {
        Ok(&self.node(sv)?.shape)
    }

    /// Number of cells of a vector source.
    pub fn len(&self, sv: SourceRef) -> Result<usize> {
        Ok(self.shape(sv)?.iter().product())
    }

    pub fn schema(&self, sv: SourceRef) -> Result<&Schema> {
        self.node(sv)?
            .schema
            .as_ref()
            .ok_or_else(|| Error::Type("source is not a table".into()))
    }

    pub fn parent(&self, sv: SourceRef) -> Result<Option<SourceRef>> {
        Ok(self.node(sv)?.parent.map(|p| self.handle(p)))
    }

    fn handle(&self, id: u32) -> SourceRef {
        SourceRef {
            id,
            kind: self.nodes[id as usize].kind,
        }
    }

    /// Current spend recorded at `sv`.
    pub fn budget(&self, sv: SourceRef) -> Result<&Epsilon> {
        Ok(&self.node(sv)?.budget)
    }

    /// Remaining budget at the root.
    pub fn remaining(&self) -> Epsilon {
        self.eps_total.saturating_sub(&self.nodes[0].budget)
    }

    /// Stability of `sv` relative to the root: the product of edge
    /// stabilities along the path (partition nodes count as 1).
    pub fn cumulative_stability(&self, sv: SourceRef) -> Result<Epsilon> {
        let mut id = self.node(sv)?.parent.map(|_| sv.id);
        let mut s = Epsilon::ratio(1, 1)?;
        while let Some(i) = id {
            let n = &self.nodes[i as usize];
            s = &s * &n.stability;
            id = n.parent;
        }
        Ok(s)
    }

    /// Spend at every source, in id order.
    pub fn budget_snapshot(&self) -> Vec<Epsilon> {
        self.nodes.iter().map(|n| n.budget.clone()).collect()
    }

    pub fn history(&self, sv: SourceRef) -> Result<&[HistoryEntry]> {
        Ok(&self.node(sv)?.history)
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.transcript.clone()
    }

    pub fn ledger(&self) -> Ledger {
        Ledger {
            eps_total: self.eps_total.to_f64(),
            eps_total_exact: self.eps_total.exact(),
            sources: self
                .nodes
                .iter()
                .enumerate()
                .map(|(i, n)| LedgerRow {
                    source_id: i as u32,
                    parent_id: n.parent,
                    kind: n.kind.as_str().into(),
                    stability: n.stability.to_f64(),
                    budget: n.budget.to_f64(),
                    budget_exact: n.budget.exact(),
                })
                .collect(),
            transcript: self.transcript.clone(),
        }
    }

    fn push(&mut self, node: Node) -> SourceRef {
        let id = self.nodes.len() as u32;
        let kind = node.kind;
        self.nodes.push(node);
        SourceRef { id, kind }
    }

    /// Registers `t` applied to `parent` as a new source.
    pub fn transform(&mut self, parent: SourceRef, t: Transform) -> Result<SourceRef> {
        let p = self.node(parent)?;
        let stability = Epsilon::from_f64(t.stability()?)?;
        let child = match (&p.payload, &t) {
            (Payload::Table(tab), Transform::Vectorize) => {
                let x = tab.vectorize()?;
                Node {
                    shape: x.domain_shape().to_vec(),
                    kind: SourceKind::Vector,
                    payload: Payload::Vector(x),
                    edge: Edge::Vectorize,
                    schema: None,
                    ..self.blank(parent, stability)
                }
            }
            (Payload::Table(tab), _) if t.on_table() => {
                let out = match &t {
                    Transform::Where(pred) => tab.filter(pred)?,
                    Transform::Select(a) => tab.project(a)?,
                    Transform::GroupBy(k) => tab.group_by(k)?,
                    _ => unreachable!(),
                };
                Node {
                    shape: out.schema().domain_shape(),
                    schema: Some(out.schema().clone()),
                    kind: SourceKind::Table,
                    payload: Payload::Table(out),
                    edge: Edge::Table,
                    ..self.blank(parent, stability)
                }
            }
            (Payload::Vector(x), Transform::Reduce(pm)) => {
                let y = pm.reduce(x.values())?;
                Node {
                    shape: vec![pm.p()],
                    payload: Payload::Vector(DataVector::from_values(y)?),
                    edge: Edge::Reduce(pm.clone()),
                    ..self.blank(parent, stability)
                }
            }
            (Payload::Vector(x), Transform::Linear(m)) => {
                let y = m.matvec(x.values())?;
                Node {
                    shape: vec![m.rows()],
                    payload: Payload::Vector(DataVector::from_values(y)?),
                    edge: Edge::Linear(m.clone()),
                    ..self.blank(parent, stability)
                }
            }
            _ => {
                return Err(Error::Type(alloc::format!(
                    "`{}` cannot be applied to a {} source",
                    t.name(),
                    p.kind.as_str()
                )))
            }
        };
        Ok(self.push(child))
    }

    fn blank(&self, parent: SourceRef, stability: Epsilon) -> Node {
        Node {
            parent: Some(parent.id),
            kind: SourceKind::Vector,
            stability,
            budget: Epsilon::zero(),
            payload: Payload::None,
            edge: Edge::Table,
            shape: Vec::new(),
            schema: None,
            history: Vec::new(),
        }
    }

    /// Splits a vector source into one child per group under a new
    /// partition node.
    pub fn partition(&mut self, parent: SourceRef, pm: &PartitionMap) -> Result<Vec<SourceRef>> {
        let p = self.node(parent)?;
        let x = match &p.payload {
            Payload::Vector(x) => x,
            _ => return Err(Error::Type("only vector sources can be partitioned".into())),
        };
        if pm.n() != x.len() {
            return Err(Error::dim("partition size", x.len(), pm.n()));
        }
        let parts = pm.split(x.values())?;
        let groups = pm.groups();
        let shape = p.shape.clone();
        let one = Epsilon::ratio(1, 1)?;
        let dummy = self.push(Node {
            kind: SourceKind::PartitionDummy,
            edge: Edge::Dummy,
            shape,
            ..self.blank(parent, one.clone())
        });
        let mut out = Vec::with_capacity(parts.len());
        for (values, cells) in parts.into_iter().zip(groups) {
            let n = values.len();
            let child = Node {
                shape: vec![n],
                payload: Payload::Vector(DataVector::from_values(values)?),
                edge: Edge::Split(cells),
                ..self.blank(dummy, one.clone())
            };
            out.push(self.push(child));
        }
        Ok(out)
    }

    /// Splits a table source by groups of bins of `attr`.
    pub fn partition_table(&mut self, parent: SourceRef, attr: &str, groups: &[Vec<usize>]) -> Result<Vec<SourceRef>> {
        let p = self.node(parent)?;
        let tab = match &p.payload {
            Payload::Table(t) => t,
            _ => return Err(Error::Type("only table sources can be split by attribute".into())),
        };
        let parts = tab.split(attr, groups)?;
        let one = Epsilon::ratio(1, 1)?;
        let dummy = self.push(Node {
            kind: SourceKind::PartitionDummy,
            edge: Edge::Dummy,
            ..self.blank(parent, one.clone())
        });
        let mut out = Vec::with_capacity(parts.len());
        for t in parts {
            let child = Node {
                kind: SourceKind::Table,
                shape: t.schema().domain_shape(),
                schema: Some(t.schema().clone()),
                payload: Payload::Table(t),
                edge: Edge::Table,
                ..self.blank(dummy, one.clone())
            };
            out.push(self.push(child));
        }
        Ok(out)
    }

    /// Asks for `sigma` at `sv`. Returns whether it was granted; a denial
    /// changes no counter anywhere.
    pub fn request_budget(&mut self, sv: SourceRef, sigma: &Epsilon) -> Result<bool> {
        self.node(sv)?;
        Ok(self.request(sv.id, sigma, None))
    }

    fn request(&mut self, id: u32, sigma: &Epsilon, from_child: Option<u32>) -> bool {
        let node = &self.nodes[id as usize];
        match node.parent {
            None => {
                let after = &node.budget + sigma;
                if after <= self.eps_total {
                    self.nodes[id as usize].budget = after;
                    true
                } else {
                    false
                }
            }
            Some(parent) if node.kind == SourceKind::PartitionDummy => {
                let child_budget = from_child.map_or_else(Epsilon::zero, |c| self.nodes[c as usize].budget.clone());
                let r = (&child_budget + sigma).saturating_sub(&node.budget);
                if self.request(parent, &r, Some(id)) {
                    let b = &self.nodes[id as usize].budget + &r;
                    self.nodes[id as usize].budget = b;
                    true
                } else {
                    false
                }
            }
            Some(parent) => {
                let forwarded = &node.stability * sigma;
                if self.request(parent, &forwarded, Some(id)) {
                    let b = &self.nodes[id as usize].budget + sigma;
                    self.nodes[id as usize].budget = b;
                    true
                } else {
                    false
                }
            }
        }
    }

    /// Runs a private query on `sv` after charging `eps`.
    ///
    /// Shapes and types are validated before any budget is requested. When
    /// the request is denied the transcript records the denial and
    /// [`Error::BudgetExceeded`] is returned.
    pub fn measure(&mut self, sv: SourceRef, op: &QueryOp, eps: &Epsilon) -> Result<Answer> {
        let node = self.node(sv)?;
        if eps.is_zero() {
            return Err(Error::invalid("measurement budget must be positive"));
        }
        let n: usize = node.shape.iter().product();
        match (op, &node.payload) {
            (QueryOp::NoisyCount, Payload::Table(_)) => {}
            (QueryOp::NoisyCount, _) => return Err(Error::Type("noisy count needs a table source".into())),
            (_, Payload::Vector(_)) => {}
            _ => return Err(Error::Type(alloc::format!("`{}` needs a vector source", op.name()))),
        }
        match op {
            QueryOp::VectorLaplace(q) if q.cols() != n => return Err(Error::dim("query columns", n, q.cols())),
            QueryOp::WorstApprox { workload, estimate } => {
                if workload.cols() != n || estimate.len() != n {
                    return Err(Error::dim("worst approx domain", n, workload.cols().max(estimate.len())));
                }
                if workload.rows() == 0 {
                    return Err(Error::invalid("empty workload"));
                }
            }
            QueryOp::DawaPartition { measure_eps } | QueryOp::AhpPartition { measure_eps, .. }
                if !(*measure_eps > 0.0 && measure_eps.is_finite()) =>
            {
                return Err(Error::invalid("measure_eps must be positive"));
            }
            _ => {}
        }

        if !self.request(sv.id, eps, None) {
            self.transcript.push(TranscriptEntry {
                op_name: op.name().into(),
                source_id: sv.id,
                epsilon: eps.to_f64(),
                epsilon_exact: eps.exact(),
                outcome: Outcome::BudgetExceeded,
            });
            return Err(Error::BudgetExceeded {
                source_id: sv.id,
                requested: eps.exact(),
            });
        }

        let e = eps.to_f64();
        let rng = &mut self.rng;
        let node = &self.nodes[sv.id as usize];
        let answer = match (op, &node.payload) {
            (QueryOp::NoisyCount, Payload::Table(t)) => {
                Answer::Count(t.len() as f64 + measurement::laplace(1.0 / e, rng))
            }
            (QueryOp::VectorLaplace(q), Payload::Vector(x)) => {
                let (values, noise_scale) = measurement::laplace_answer(q, x.values(), e, rng)?;
                Answer::Noisy { values, noise_scale }
            }
            (QueryOp::WorstApprox { workload, estimate }, Payload::Vector(x)) => {
                Answer::Selected(selection::worst_approx_index(workload, x.values(), estimate, e, rng)?)
            }
            (QueryOp::DawaPartition { measure_eps }, Payload::Vector(x)) => {
                Answer::Partition(partition::dawa_private(x.values(), e, *measure_eps, rng))
            }
            (QueryOp::AhpPartition { measure_eps, eta }, Payload::Vector(x)) => {
                Answer::Partition(partition::ahp_private(x.values(), e, *measure_eps, *eta, rng))
            }
            _ => unreachable!("validated above"),
        };
        let digest = answer.digest();
        self.nodes[sv.id as usize].history.push(HistoryEntry {
            op_name: op.name().into(),
            epsilon: eps.exact(),
            digest,
        });
        self.transcript.push(TranscriptEntry {
            op_name: op.name().into(),
            source_id: sv.id,
            epsilon: e,
            epsilon_exact: eps.exact(),
            outcome: Outcome::Answered,
        });
        Ok(answer)
    }

    /// Linear map `M` with `x_sv = M x_ancestor`, composed from the edges on
    /// the path between the two vector sources.
    pub fn lineage_from(&self, ancestor: SourceRef, sv: SourceRef) -> Result<LinOp> {
        self.node(ancestor)?;
        let mut maps: Vec<LinOp> = Vec::new();
        let mut id = self.node(sv)?;
        let mut cur = sv.id;
        while cur != ancestor.id {
            let node = id;
            let parent = node.parent.ok_or(Error::Lineage(ancestor.id))?;
            let parent_len: usize = self.nodes[parent as usize].shape.iter().product();
            match &node.edge {
                Edge::Reduce(pm) => maps.push(pm.to_linop()),
                Edge::Linear(m) => maps.push(m.clone()),
                Edge::Split(cells) => {
                    let trip: Vec<_> = cells.iter().enumerate().map(|(i, &c)| (i, c, 1.0)).collect();
                    maps.push(LinOp::sparse(Csr::from_triplets(cells.len(), parent_len, &trip)?));
                }
                Edge::Dummy => {}
                Edge::Root | Edge::Table | Edge::Vectorize => return Err(Error::Lineage(ancestor.id)),
            }
            cur = parent;
            id = &self.nodes[cur as usize];
        }
        if id.kind != SourceKind::Vector {
            return Err(Error::Type("lineage needs vector sources".into()));
        }
        let mut acc: Option<LinOp> = None;
        for m in maps {
            acc = Some(match acc {
                None => m,
                Some(a) => LinOp::product(a, m)?,
            });
        }
        Ok(acc.unwrap_or_else(|| LinOp::identity(id.shape.iter().product())))
    }
}
