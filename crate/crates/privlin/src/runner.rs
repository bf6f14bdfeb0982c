//! Single runs and parameter sweeps over the plan catalog.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use privlin_core::clock::Clock;
use privlin_core::eval::{default_scale, per_query_error};
use privlin_core::plans::{run_plan, run_with_workload_reduction, PlanKind, PlanParams, PlanResult};
use privlin_core::table::Table;
use privlin_core::transform::Transform;
use privlin_core::{DataVector, Epsilon, Kernel, SourceRef};

use crate::error::{CliError, CliResult};
use crate::io;

/// Private input: a vectorized histogram or a table plus schema.
#[derive(Clone, Debug)]
pub enum DataSource {
    Vector(DataVector),
    Table(Table),
}

impl DataSource {
    /// CSV files need a schema; anything else is read as a vector file.
    pub fn load(path: &Path, schema: Option<&Path>) -> CliResult<Self> {
        if path.extension().is_some_and(|e| e == "csv") {
            let schema = schema.ok_or_else(|| CliError::Usage("CSV data needs --schema".into()))?;
            let s = io::load_schema(schema)?;
            Ok(DataSource::Table(io::read_csv(path, &s)?))
        } else {
            Ok(DataSource::Vector(io::read_vector(path)?))
        }
    }

    pub fn vector(&self) -> CliResult<DataVector> {
        match self {
            DataSource::Vector(x) => Ok(x.clone()),
            DataSource::Table(t) => Ok(t.vectorize()?),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            DataSource::Vector(x) => x.domain_shape().to_vec(),
            DataSource::Table(t) => t.schema().domain_shape(),
        }
    }

    /// Fresh kernel over this data and the vector source plans run on.
    pub fn kernel(&self, eps: Epsilon, seed: u64) -> CliResult<(Kernel, SourceRef)> {
        match self {
            DataSource::Vector(x) => {
                let k = Kernel::from_vector(x.clone(), eps, seed)?;
                let r = k.root();
                Ok((k, r))
            }
            DataSource::Table(t) => {
                let mut k = Kernel::init(t.clone(), eps, seed)?;
                let r = k.root();
                let v = k.transform(r, Transform::Vectorize)?;
                Ok((k, v))
            }
        }
    }
}

pub fn parse_epsilon(s: &str) -> CliResult<Epsilon> {
    let e: Epsilon = s.parse().map_err(|_| CliError::Usage(format!("bad epsilon `{s}`")))?;
    if e.is_zero() {
        return Err(CliError::Usage("epsilon must be positive".into()));
    }
    Ok(e)
}

#[derive(Clone, Debug)]
pub struct RunSpec {
    pub plan: PlanKind,
    pub workload: String,
    pub workload_seed: u64,
    pub epsilon: String,
    pub seed: u64,
    pub workload_reduce: bool,
    pub scale: Option<f64>,
    pub params: PlanParams,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub plan: String,
    pub workload: String,
    pub epsilon: String,
    pub seed: u64,
    pub workload_reduce: bool,
    pub scale: f64,
    pub error: f64,
    /// Set when the MWEM record count was taken from the data.
    pub total_from_data: bool,
    pub result: PlanResult,
}

/// Executes one plan on a fresh kernel whose total budget is the plan's.
pub fn run_once(data: &DataSource, spec: &RunSpec, clock: &dyn Clock) -> CliResult<RunReport> {
    let eps = parse_epsilon(&spec.epsilon)?;
    let x = data.vector()?;
    let w = io::load_workload(&spec.workload, x.domain_shape(), spec.workload_seed)?;
    let mut params = spec.params.clone();
    let total_from_data = spec.plan.needs_total() && params.total.is_none();
    if total_from_data {
        params.total = Some(x.total().max(1.0));
    }
    let (mut k, sv) = data.kernel(eps.clone(), spec.seed)?;
    let result = if spec.workload_reduce {
        run_with_workload_reduction(spec.plan, &mut k, sv, &w, &eps, &params, clock)?
    } else {
        run_plan(spec.plan, &mut k, sv, &w, &eps, &params, clock)?
    };
    let scale = match spec.scale {
        Some(s) if s > 0.0 => s,
        Some(_) => return Err(CliError::Usage("--scale must be positive".into())),
        None => default_scale(x.values()),
    };
    let error = per_query_error(&w, result.x_hat.values(), x.values(), scale)?;
    Ok(RunReport {
        plan: spec.plan.name().into(),
        workload: spec.workload.clone(),
        epsilon: eps.exact(),
        seed: spec.seed,
        workload_reduce: spec.workload_reduce,
        scale,
        error,
        total_from_data,
        result,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub plan: String,
    pub dataset: String,
    pub workload: String,
    pub epsilon: String,
    pub seed: u64,
    pub error: f64,
    pub runtime_ms: f64,
}

/// Kernel seed for the `index`-th tuple of a sweep.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Every (plan, epsilon, seed) combination, streamed as JSON lines.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    data: &DataSource,
    dataset: &str,
    plans: &[PlanKind],
    epsilons: &[String],
    seeds: &[u64],
    base: &RunSpec,
    clock: &dyn Clock,
    out: &mut dyn Write,
) -> CliResult<usize> {
    let mut index = 0u64;
    for &plan in plans {
        for eps in epsilons {
            for &seed in seeds {
                let spec = RunSpec {
                    plan,
                    epsilon: eps.clone(),
                    seed: derive_seed(seed, index),
                    ..base.clone()
                };
                let t0 = clock.now_ns();
                let report = run_once(data, &spec, clock)?;
                let runtime_ms = clock.now_ns().saturating_sub(t0) as f64 / 1e6;
                let row = SweepRow {
                    plan: plan.name().into(),
                    dataset: dataset.into(),
                    workload: base.workload.clone(),
                    epsilon: report.epsilon,
                    seed,
                    error: report.error,
                    runtime_ms,
                };
                let line = serde_json::to_string(&row).map_err(|e| CliError::format(dataset, e))?;
                writeln!(out, "{line}").map_err(|e| CliError::io(dataset, e))?;
                index += 1;
            }
        }
    }
    Ok(index as usize)
}
