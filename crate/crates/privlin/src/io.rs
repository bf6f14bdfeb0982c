//! Schema, CSV, data-vector and workload files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use privlin_core::matrix::OpDesc;
use privlin_core::table::{Schema, Table};
use privlin_core::workload::parse_workload;
use privlin_core::{DataVector, Error as CoreError, LinOp};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum VectorFormat {
    Json,
    Bin,
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn load_schema(path: &Path) -> CliResult<Schema> {
    let s: Schema = serde_json::from_str(&read_text(path)?).map_err(|e| CliError::format(path, e))?;
    Ok(Schema::new(s.attributes)?)
}

/// Reads a CSV with a header row; columns are matched to schema attributes
/// by name and extra columns are ignored. Row numbers in errors count data
/// rows from 0.
pub fn read_csv(path: &Path, schema: &Schema) -> CliResult<Table> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::format(path, e))?;
    let header = rdr.headers().map_err(|e| CliError::format(path, e))?.clone();
    let cols = schema
        .attributes
        .iter()
        .map(|a| {
            header
                .iter()
                .position(|h| h.trim() == a.name)
                .ok_or_else(|| CliError::format(path, format!("missing column `{}`", a.name)))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::format(path, format!("row {i}: {e}")))?;
        let row = cols
            .iter()
            .enumerate()
            .map(|(a, &c)| {
                let raw = rec.get(c).unwrap_or("");
                schema
                    .parse_field(a, raw)
                    .map_err(|message| CliError::Core(CoreError::Ingestion { row: i, message }))
            })
            .collect::<CliResult<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(Table::new(schema.clone(), rows)?)
}

#[derive(Serialize, Deserialize)]
struct BinHeader {
    domain_shape: Vec<usize>,
    len: usize,
    encoding: String,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

/// JSON `{domain_shape, values}`, or raw little-endian f64 with a
/// `<path>.json` header.
pub fn write_vector(path: &Path, x: &DataVector, format: VectorFormat) -> CliResult<()> {
    match format {
        VectorFormat::Json => write_json(path, x),
        VectorFormat::Bin => {
            let mut w = create(path)?;
            for v in x.values() {
                w.write_all(&v.to_le_bytes()).map_err(|e| CliError::io(path, e))?;
            }
            w.flush().map_err(|e| CliError::io(path, e))?;
            let header = BinHeader {
                domain_shape: x.domain_shape().to_vec(),
                len: x.len(),
                encoding: "f64le".into(),
            };
            write_json(&sidecar(path), &header)
        }
    }
}

pub fn read_vector(path: &Path) -> CliResult<DataVector> {
    let side = sidecar(path);
    if side.exists() && path.extension().is_some_and(|e| e != "json") {
        let header: BinHeader = serde_json::from_str(&read_text(&side)?).map_err(|e| CliError::format(&side, e))?;
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        if bytes.len() != header.len * 8 {
            return Err(CliError::format(path, format!("expected {} values", header.len)));
        }
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        return Ok(DataVector::new(values, header.domain_shape)?);
    }
    let x: DataVector = serde_json::from_str(&read_text(path)?).map_err(|e| CliError::format(path, e))?;
    Ok(DataVector::new(x.values().to_vec(), x.domain_shape().to_vec())?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::format(path, e))?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// A named workload, or a path to a JSON operator description.
pub fn load_workload(spec: &str, shape: &[usize], seed: u64) -> CliResult<LinOp> {
    let p = Path::new(spec);
    if spec.ends_with(".json") || p.is_file() {
        let desc: OpDesc = serde_json::from_str(&read_text(p)?).map_err(|e| CliError::format(p, e))?;
        let w = LinOp::from_desc(&desc)?;
        let n: usize = shape.iter().product();
        if w.cols() != n {
            return Err(CliError::Core(CoreError::Dimension {
                context: "workload columns",
                expected: n,
                actual: w.cols(),
            }));
        }
        return Ok(w);
    }
    Ok(parse_workload(spec, shape, seed)?)
}
