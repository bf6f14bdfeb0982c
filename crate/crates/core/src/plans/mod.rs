//! Catalog of complete algorithms built from the kernel operators.
//!
//! Every plan takes a vector source, a workload over that source's domain
//! and a budget, and spends exactly that budget.

mod mwem;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::error::{Error, Result};
use crate::inference::{self, Estimate, MeasurementSet};
use crate::kernel::{Epsilon, Kernel, Ledger, SourceRef, TranscriptEntry};
use crate::matrix::{Csr, LinOp};
use crate::measurement::{vector_laplace, Measurement};
use crate::partition;
use crate::selection::{self, GridSpec};
use crate::transform::{PartitionMap, Transform};
use crate::vector::DataVector;

/// Tunable plan parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanParams {
    /// MWEM rounds.
    pub rounds: usize,
    /// Share of the budget spent on private partition selection.
    pub rho: f64,
    /// AHP zeroing threshold multiplier.
    pub eta: f64,
    /// Stripe axis for the striped plans.
    pub axis: usize,
    /// Public record count used by the MWEM family.
    pub total: Option<f64>,
    pub mw_iters: usize,
    pub ls_tol: f64,
    /// Least-squares iteration cap; `None` means `max(2n, 20)`.
    pub ls_max_iter: Option<usize>,
    pub nnls_tol: f64,
    /// Relative objective decrease below which NNLS stops early.
    pub nnls_ftol: f64,
    pub nnls_max_iter: usize,
    /// Seed of the public hashing used by workload-based reduction.
    pub workload_seed: u64,
}

impl Default for PlanParams {
    fn default() -> Self {
        PlanParams {
            rounds: 10,
            rho: 0.25,
            eta: 1.0,
            axis: 0,
            total: None,
            mw_iters: 100,
            ls_tol: 1e-10,
            ls_max_iter: None,
            nnls_tol: 1e-8,
            nnls_ftol: 1e-9,
            nnls_max_iter: 500,
            workload_seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    Identity,
    Privelet,
    H2,
    Hb,
    GreedyH,
    Uniform,
    Mwem,
    MwemB,
    MwemC,
    MwemD,
    Ahp,
    Dawa,
    Quadtree,
    Ugrid,
    Agrid,
    HbStriped,
    DawaStriped,
    HbStripedKron,
}

impl PlanKind {
    pub const ALL: [PlanKind; 18] = [
        PlanKind::Identity,
        PlanKind::Privelet,
        PlanKind::H2,
        PlanKind::Hb,
        PlanKind::GreedyH,
        PlanKind::Uniform,
        PlanKind::Mwem,
        PlanKind::MwemB,
        PlanKind::MwemC,
        PlanKind::MwemD,
        PlanKind::Ahp,
        PlanKind::Dawa,
        PlanKind::Quadtree,
        PlanKind::Ugrid,
        PlanKind::Agrid,
        PlanKind::HbStriped,
        PlanKind::DawaStriped,
        PlanKind::HbStripedKron,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlanKind::Identity => "identity",
            PlanKind::Privelet => "privelet",
            PlanKind::H2 => "h2",
            PlanKind::Hb => "hb",
            PlanKind::GreedyH => "greedyh",
            PlanKind::Uniform => "uniform",
            PlanKind::Mwem => "mwem",
            PlanKind::MwemB => "mwem_b",
            PlanKind::MwemC => "mwem_c",
            PlanKind::MwemD => "mwem_d",
            PlanKind::Ahp => "ahp",
            PlanKind::Dawa => "dawa",
            PlanKind::Quadtree => "quadtree",
            PlanKind::Ugrid => "ugrid",
            PlanKind::Agrid => "agrid",
            PlanKind::HbStriped => "hb_striped",
            PlanKind::DawaStriped => "dawa_striped",
            PlanKind::HbStripedKron => "hb_striped_kron",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        PlanKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown plan `{s}`")))
    }

    /// Whether the plan needs the public record count.
    pub fn needs_total(self) -> bool {
        matches!(self, PlanKind::Mwem | PlanKind::MwemB | PlanKind::MwemC | PlanKind::MwemD)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub op: String,
    pub ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub plan: String,
    pub x_hat: DataVector,
    pub workload_answers: Vec<f64>,
    pub budget_spent: f64,
    pub budget_spent_exact: String,
    /// Domain size the plan measured on (smaller than `x_hat` after
    /// workload-based reduction).
    pub inner_domain: usize,
    pub iterations: usize,
    pub converged: bool,
    pub transcript: Vec<TranscriptEntry>,
    pub ledger: Ledger,
    pub timing: Vec<TimingEntry>,
}

/// Execution state shared by the plan bodies.
pub(crate) struct Ctx<'a> {
    pub k: &'a mut Kernel,
    pub params: &'a PlanParams,
    clock: &'a dyn Clock,
    timing: Vec<TimingEntry>,
    iterations: usize,
    converged: bool,
}

impl<'a> Ctx<'a> {
    fn new(k: &'a mut Kernel, params: &'a PlanParams, clock: &'a dyn Clock) -> Self {
        Ctx {
            k,
            params,
            clock,
            timing: Vec::new(),
            iterations: 0,
            converged: true,
        }
    }

    pub fn start(&self) -> u64 {
        self.clock.now_ns()
    }

    pub fn stop(&mut self, op: &str, t0: u64) {
        let ms = self.clock.now_ns().saturating_sub(t0) as f64 / 1e6;
        match self.timing.iter_mut().find(|t| t.op == op) {
            Some(t) => t.ms += ms,
            None => self.timing.push(TimingEntry { op: op.into(), ms }),
        }
    }

    pub fn measure(&mut self, sv: SourceRef, q: LinOp, eps: &Epsilon) -> Result<Measurement> {
        let t0 = self.start();
        let m = vector_laplace(self.k, sv, q, eps);
        self.stop("measure", t0);
        m
    }

    pub fn record(&mut self, e: &Estimate) {
        self.iterations += e.iterations;
        self.converged &= e.converged;
    }

    /// Weighted least squares over measurements mapped onto `target`.
    pub fn least_squares(&mut self, target: SourceRef, ms: &[Measurement]) -> Result<Vec<f64>> {
        let t0 = self.start();
        let set = MeasurementSet::from_measurements(self.k, target, ms)?;
        let max_iter = self.params.ls_max_iter.unwrap_or_else(|| inference::default_max_iter(set.n()));
        let e = inference::least_squares(&set, self.params.ls_tol, max_iter)?;
        self.stop("infer", t0);
        self.record(&e);
        Ok(e.x_hat)
    }
}

fn coerce_2d(shape: &[usize]) -> Result<[usize; 2]> {
    match shape {
        [n] => Ok([*n, 1]),
        [r, c] => Ok([*r, *c]),
        _ => Err(Error::invalid("plan needs a 1-D or 2-D domain")),
    }
}

/// `rho * eps` and the remainder.
fn split_budget(eps: &Epsilon, rho: f64) -> Result<(Epsilon, Epsilon)> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid("rho must lie strictly between 0 and 1"));
    }
    let first = eps.clone() * Epsilon::from_f64(rho)?;
    let rest = eps.saturating_sub(&first);
    Ok((first, rest))
}

/// Zero-padding embedding of `n` cells into `big >= n` cells.
fn pad_embedding(n: usize, big: usize) -> Result<LinOp> {
    if n == big {
        return Ok(LinOp::identity(n));
    }
    let trip: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
    Ok(LinOp::sparse(Csr::from_triplets(big, n, &trip)?))
}

fn single(cx: &mut Ctx, sv: SourceRef, q: LinOp, eps: &Epsilon) -> Result<Vec<f64>> {
    let m = cx.measure(sv, q, eps)?;
    cx.least_squares(sv, &[m])
}

fn privelet(cx: &mut Ctx, sv: SourceRef, eps: &Epsilon) -> Result<Vec<f64>> {
    let shape = cx.k.shape(sv)?.to_vec();
    let padded: Vec<usize> = shape.iter().map(|n| n.next_power_of_two()).collect();
    let t0 = cx.start();
    let target = if padded != shape {
        let embed = shape
            .iter()
            .zip(&padded)
            .map(|(&n, &b)| pad_embedding(n, b))
            .collect::<Result<Vec<_>>>()?;
        cx.k.transform(sv, Transform::Linear(LinOp::kron_all(embed)?))?
    } else {
        sv
    };
    let q = LinOp::kron_all(padded.iter().map(|&b| LinOp::wavelet(b)).collect::<Result<Vec<_>>>()?)?;
    cx.stop("select", t0);
    let m = cx.measure(target, q, eps)?;
    cx.least_squares(sv, &[m])
}

fn ugrid(cx: &mut Ctx, sv: SourceRef, eps: &Epsilon) -> Result<Vec<f64>> {
    let shape = coerce_2d(cx.k.shape(sv)?)?;
    let n = shape[0] * shape[1];
    let (e_est, e_grid) = split_budget(eps, 0.1)?;
    let total = cx.measure(sv, LinOp::total(n), &e_est)?;
    let n_est = total.values[0].max(1.0);
    let t0 = cx.start();
    let grid = selection::uniform_grid_sel(&shape, n_est, e_grid.to_f64())?;
    cx.stop("select", t0);
    let m = cx.measure(sv, grid, &e_grid)?;
    cx.least_squares(sv, &[total, m])
}

/// Coarse grid size of the adaptive grid: `max(10, ceil(sqrt(N eps / 10) / 4))`.
pub fn adaptive_coarse_size(n_est: f64, eps: f64) -> usize {
    let g = libm::ceil(libm::sqrt(n_est.max(0.0) * eps / 10.0) / 4.0) as usize;
    g.max(10)
}

fn agrid(cx: &mut Ctx, sv: SourceRef, eps: &Epsilon) -> Result<Vec<f64>> {
    let shape = coerce_2d(cx.k.shape(sv)?)?;
    let n = shape[0] * shape[1];
    let half = eps.div_int(2)?;
    let (e_est, e_coarse) = split_budget(&half, 0.2)?;
    let e_fine = eps.saturating_sub(&half);
    let total = cx.measure(sv, LinOp::total(n), &e_est)?;
    let g1 = adaptive_coarse_size(total.values[0], eps.to_f64());
    let coarse = GridSpec::with_counts(shape.to_vec(), &[g1, g1])?;
    let cm = cx.measure(sv, coarse.selector(), &e_coarse)?;
    let kids = cx.k.partition(sv, &coarse.partition())?;
    let mut ms = vec![total];
    let shapes = coarse.block_shapes();
    let e2 = e_fine.to_f64();
    for ((kid, cell), &count) in kids.into_iter().zip(&shapes).zip(&cm.values) {
        let t0 = cx.start();
        let q = selection::adaptive_cell_sel(cell, count, e2)?;
        cx.stop("select", t0);
        ms.push(cx.measure(kid, q, &e_fine)?);
    }
    ms.push(cm);
    cx.least_squares(sv, &ms)
}

/// Partition by AHP, then measure every group once.
fn ahp(cx: &mut Ctx, sv: SourceRef, eps: &Epsilon) -> Result<Vec<f64>> {
    let (e1, e2) = split_budget(eps, cx.params.rho)?;
    let t0 = cx.start();
    let p = partition::ahp_partition(cx.k, sv, &e1, e2.to_f64(), cx.params.eta)?;
    let reduced = cx.k.transform(sv, Transform::Reduce(p.clone()))?;
    cx.stop("partition", t0);
    let m = cx.measure(reduced, LinOp::identity(p.p()), &e2)?;
    cx.least_squares(sv, &[m])
}

/// Dawa on a 1-D vector source with workload `w` over that source;
/// returns the measurement on the reduced source.
fn dawa_measure(cx: &mut Ctx, sv: SourceRef, w: &LinOp, eps: &Epsilon) -> Result<Measurement> {
    let (e1, e2) = split_budget(eps, cx.params.rho)?;
    let t0 = cx.start();
    let p = partition::dawa_partition(cx.k, sv, &e1, e2.to_f64())?;
    let reduced = cx.k.transform(sv, Transform::Reduce(p.clone()))?;
    cx.stop("partition", t0);
    let t0 = cx.start();
    let w_red = LinOp::product(w.clone(), p.pinv())?;
    let q = selection::greedy_h_sel(&w_red)?;
    cx.stop("select", t0);
    cx.measure(reduced, q, &e2)
}

fn stripes(cx: &mut Ctx, sv: SourceRef) -> Result<(Vec<usize>, PartitionMap)> {
    let shape = cx.k.shape(sv)?.to_vec();
    let pm = partition::stripe_partition(&shape, cx.params.axis)?;
    Ok((shape, pm))
}

/// Stripes along `axis` and the HB selector measured on each stripe.
pub fn hb_striped_strategy(shape: &[usize], axis: usize) -> Result<(PartitionMap, LinOp)> {
    let pm = partition::stripe_partition(shape, axis)?;
    Ok((pm, selection::hb_sel(shape[axis])?))
}

/// HB on `axis` combined with identity on the other axes in one operator.
pub fn hb_striped_kron_strategy(shape: &[usize], axis: usize) -> Result<LinOp> {
    if axis >= shape.len() {
        return Err(Error::invalid("stripe axis out of range"));
    }
    selection::stripe_select(shape, axis, &selection::hb_sel(shape[axis])?)
}

fn hb_striped(cx: &mut Ctx, sv: SourceRef, eps: &Epsilon) -> Result<Vec<f64>> {
    let shape = cx.k.shape(sv)?.to_vec();
    let (pm, q) = hb_striped_strategy(&shape, cx.params.axis)?;
    let kids = cx.k.partition(sv, &pm)?;
    let mut ms = Vec::with_capacity(kids.len());
    for kid in kids {
        ms.push(cx.measure(kid, q.clone(), eps)?);
    }
    cx.least_squares(sv, &ms)
}

fn dawa_striped(cx: &mut Ctx, sv: SourceRef, w: &LinOp, eps: &Epsilon) -> Result<Vec<f64>> {
    let (_, pm) = stripes(cx, sv)?;
    let n = pm.n();
    let kids = cx.k.partition(sv, &pm)?;
    let mut ms = Vec::with_capacity(kids.len());
    for (kid, cells) in kids.into_iter().zip(pm.groups()) {
        let trip: Vec<_> = cells.iter().enumerate().map(|(i, &c)| (c, i, 1.0)).collect();
        let embed = LinOp::sparse(Csr::from_triplets(n, cells.len(), &trip)?);
        let w_stripe = LinOp::product(w.clone(), embed)?;
        ms.push(dawa_measure(cx, kid, &w_stripe, eps)?);
    }
    cx.least_squares(sv, &ms)
}

fn hb_striped_kron(cx: &mut Ctx, sv: SourceRef, eps: &Epsilon) -> Result<Vec<f64>> {
    let shape = cx.k.shape(sv)?.to_vec();
    let q = hb_striped_kron_strategy(&shape, cx.params.axis)?;
    single(cx, sv, q, eps)
}

fn dispatch(cx: &mut Ctx, kind: PlanKind, sv: SourceRef, w: &LinOp, eps: &Epsilon) -> Result<Vec<f64>> {
    let n = cx.k.len(sv)?;
    let shape = cx.k.shape(sv)?.to_vec();
    let sel = |cx: &mut Ctx, f: &dyn Fn() -> Result<LinOp>| -> Result<LinOp> {
        let t0 = cx.start();
        let q = f();
        cx.stop("select", t0);
        q
    };
    match kind {
        PlanKind::Identity => single(cx, sv, LinOp::identity(n), eps),
        PlanKind::Uniform => single(cx, sv, LinOp::total(n), eps),
        PlanKind::H2 => {
            let q = sel(cx, &|| selection::h2_sel(n))?;
            single(cx, sv, q, eps)
        }
        PlanKind::Hb => {
            let q = sel(cx, &|| selection::hb_sel(n))?;
            single(cx, sv, q, eps)
        }
        PlanKind::GreedyH => {
            let q = sel(cx, &|| selection::greedy_h_sel(w))?;
            single(cx, sv, q, eps)
        }
        PlanKind::Quadtree => {
            let s2 = coerce_2d(&shape)?;
            let q = sel(cx, &|| selection::quadtree_sel(&s2))?;
            single(cx, sv, q, eps)
        }
        PlanKind::Privelet => privelet(cx, sv, eps),
        PlanKind::Ugrid => ugrid(cx, sv, eps),
        PlanKind::Agrid => agrid(cx, sv, eps),
        PlanKind::Ahp => ahp(cx, sv, eps),
        PlanKind::Dawa => {
            let m = dawa_measure(cx, sv, w, eps)?;
            cx.least_squares(sv, &[m])
        }
        PlanKind::HbStriped => hb_striped(cx, sv, eps),
        PlanKind::DawaStriped => dawa_striped(cx, sv, w, eps),
        PlanKind::HbStripedKron => hb_striped_kron(cx, sv, eps),
        PlanKind::Mwem => mwem::run(cx, sv, w, eps, false, false),
        PlanKind::MwemB => mwem::run(cx, sv, w, eps, true, false),
        PlanKind::MwemC => mwem::run(cx, sv, w, eps, false, true),
        PlanKind::MwemD => mwem::run(cx, sv, w, eps, true, true),
    }
}

fn finish(
    cx: Ctx,
    kind: PlanKind,
    sv: SourceRef,
    w: &LinOp,
    x_hat: Vec<f64>,
    inner_domain: usize,
    before: &Epsilon,
) -> Result<PlanResult> {
    let root = cx.k.root();
    let spent = cx.k.budget(root)?.saturating_sub(before);
    let shape = cx.k.shape(sv)?.to_vec();
    Ok(PlanResult {
        plan: kind.name().into(),
        workload_answers: w.matvec(&x_hat)?,
        x_hat: DataVector::new(x_hat, shape)?,
        budget_spent: spent.to_f64(),
        budget_spent_exact: spent.exact(),
        inner_domain,
        iterations: cx.iterations,
        converged: cx.converged,
        transcript: cx.k.transcript(),
        ledger: cx.k.ledger(),
        timing: cx.timing,
    })
}

fn check_inputs(k: &Kernel, sv: SourceRef, w: &LinOp, eps: &Epsilon) -> Result<()> {
    let n = k.len(sv)?;
    if w.cols() != n {
        return Err(Error::dim("workload columns", n, w.cols()));
    }
    if eps.is_zero() {
        return Err(Error::invalid("plan budget must be positive"));
    }
    Ok(())
}

/// Runs one catalog plan on the vector source `sv`.
pub fn run_plan(
    kind: PlanKind,
    k: &mut Kernel,
    sv: SourceRef,
    w: &LinOp,
    eps: &Epsilon,
    params: &PlanParams,
    clock: &dyn Clock,
) -> Result<PlanResult> {
    check_inputs(k, sv, w, eps)?;
    let before = k.budget(k.root())?.clone();
    let mut cx = Ctx::new(k, params, clock);
    let x_hat = dispatch(&mut cx, kind, sv, w, eps)?;
    let n = x_hat.len();
    finish(cx, kind, sv, w, x_hat, n, &before)
}

/// Runs `kind` on the domain reduced by workload-based partitioning: cells
/// the workload cannot tell apart are merged, the plan runs against
/// `W P^+` on the merged cells, and the estimate is spread back with `P^+`.
pub fn run_with_workload_reduction(
    kind: PlanKind,
    k: &mut Kernel,
    sv: SourceRef,
    w: &LinOp,
    eps: &Epsilon,
    params: &PlanParams,
    clock: &dyn Clock,
) -> Result<PlanResult> {
    check_inputs(k, sv, w, eps)?;
    let before = k.budget(k.root())?.clone();
    let mut cx = Ctx::new(k, params, clock);
    let t0 = cx.start();
    let p = partition::workload_based(w, params.workload_seed)?;
    cx.stop("reduce", t0);
    if p.p() == p.n() {
        let x_hat = dispatch(&mut cx, kind, sv, w, eps)?;
        let n = x_hat.len();
        return finish(cx, kind, sv, w, x_hat, n, &before);
    }
    let reduced = cx.k.transform(sv, Transform::Reduce(p.clone()))?;
    let w_red = LinOp::product(w.clone(), p.pinv())?;
    let inner = dispatch(&mut cx, kind, reduced, &w_red, eps)?;
    let x_hat = p.expand(&inner)?;
    finish(cx, kind, sv, w, x_hat, p.p(), &before)
}
