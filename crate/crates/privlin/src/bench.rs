//! Matvec and inference timings per operator representation.

use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use privlin_core::inference::{default_max_iter, least_squares, MeasurementSet};
use privlin_core::matrix::dense_cap_bytes;
use privlin_core::selection;
use privlin_core::{Error as CoreError, LinOp};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Implicit,
    Sparse,
    Dense,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BenchMatrix {
    Prefix,
    H2,
    Wavelet,
    Identity,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub matrix: BenchMatrix,
    pub representation: Representation,
    pub n: usize,
    /// `ok`, `skipped` or `timeout`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stored_bytes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub build_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matvec_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infer_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infer_iterations: Option<usize>,
}

fn implicit(matrix: BenchMatrix, n: usize) -> Result<LinOp, CoreError> {
    match matrix {
        BenchMatrix::Prefix => Ok(LinOp::prefix(n)),
        BenchMatrix::H2 => selection::h2_sel(n),
        BenchMatrix::Wavelet => LinOp::wavelet(n),
        BenchMatrix::Identity => Ok(LinOp::identity(n)),
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

struct Timings {
    stored_bytes: usize,
    build_ms: f64,
    matvec_ms: f64,
    infer: Option<(f64, usize)>,
}

fn measure(matrix: BenchMatrix, rep: Representation, n: usize, reps: usize, infer: bool) -> Result<Timings, CoreError> {
    let t0 = Instant::now();
    let base = implicit(matrix, n)?;
    let op = match rep {
        Representation::Implicit => base,
        Representation::Sparse => LinOp::sparse(base.to_csr()?),
        Representation::Dense => LinOp::dense(base.materialize()?),
    };
    let build_ms = ms(t0.elapsed());
    let x: Vec<f64> = (0..n).map(|i| (i % 7) as f64).collect();
    let mut times = Vec::with_capacity(reps);
    let mut y = Vec::new();
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        y = op.matvec(&x)?;
        times.push(ms(t.elapsed()));
    }
    let infer = if infer {
        let mut set = MeasurementSet::new(n);
        let stored = op.clone();
        set.push(stored, y, 1.0)?;
        let t = Instant::now();
        let e = least_squares(&set, 1e-10, default_max_iter(n))?;
        Some((ms(t.elapsed()), e.iterations))
    } else {
        None
    };
    Ok(Timings {
        stored_bytes: op.stored_bytes(),
        build_ms,
        matvec_ms: median(times),
        infer,
    })
}

/// Times one case in a worker thread; a case still running after `timeout`
/// is reported as `timeout` and abandoned.
pub fn bench_case(
    matrix: BenchMatrix,
    rep: Representation,
    n: usize,
    reps: usize,
    infer: bool,
    timeout: Duration,
) -> CliResult<BenchRow> {
    let mut row = BenchRow {
        matrix,
        representation: rep,
        n,
        status: "ok".into(),
        reason: None,
        stored_bytes: None,
        build_ms: None,
        matvec_ms: None,
        infer_ms: None,
        infer_iterations: None,
    };
    if rep == Representation::Dense {
        let rows = implicit(matrix, n)?.rows();
        let bytes = rows as u128 * n as u128 * 8;
        if bytes > dense_cap_bytes() as u128 {
            row.status = "skipped".into();
            row.reason = Some(format!("dense form needs {bytes} bytes, cap is {}", dense_cap_bytes()));
            return Ok(row);
        }
    }
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let _ = tx.send(measure(matrix, rep, n, reps, infer));
    });
    match rx.recv_timeout(timeout) {
        Ok(Ok(t)) => {
            row.stored_bytes = Some(t.stored_bytes);
            row.build_ms = Some(t.build_ms);
            row.matvec_ms = Some(t.matvec_ms);
            if let Some((ms, it)) = t.infer {
                row.infer_ms = Some(ms);
                row.infer_iterations = Some(it);
            }
        }
        Ok(Err(CoreError::Capacity { what, requested, cap })) => {
            row.status = "skipped".into();
            row.reason = Some(format!("{what} needs {requested} bytes, cap is {cap}"));
        }
        Ok(Err(e)) => return Err(CliError::Core(e)),
        Err(_) => {
            row.status = "timeout".into();
            row.reason = Some(format!("exceeded {} s", timeout.as_secs_f64()));
        }
    }
    Ok(row)
}
