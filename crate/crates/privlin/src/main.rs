use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use privlin::bench::{bench_case, BenchMatrix, Representation};
use privlin::io::{self, VectorFormat};
use privlin::runner::{self, DataSource, RunSpec};
use privlin::{apply_env_cap, CliError, CliResult, WallClock};
use privlin_core::plans::{PlanKind, PlanParams};

#[derive(Parser)]
#[command(name = "privlin", version, about = "Differentially private linear query answering")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Turn a CSV table into a data vector file.
    Vectorize {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: VectorFormat,
    },
    /// Run one plan and write its result, ledger and transcript as JSON.
    Run {
        #[arg(long)]
        plan: String,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epsilon: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write per-operator wall-clock timings.
        #[arg(long)]
        timing: bool,
    },
    /// Run every plan x epsilon x seed combination and write JSON lines.
    Sweep {
        /// Comma-separated plan names.
        #[arg(long, value_delimiter = ',')]
        plans: Vec<String>,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        epsilons: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Dataset label for the output rows (defaults to the file stem).
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Time matvec (and optionally least squares) per representation.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "prefix,h2")]
        matrices: Vec<BenchMatrix>,
        #[arg(long, value_delimiter = ',', default_value = "implicit,sparse,dense")]
        representations: Vec<Representation>,
        /// Domain sizes.
        #[arg(long, value_delimiter = ',', default_value = "1024,16384,262144")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Also time least-squares inference.
        #[arg(long)]
        infer: bool,
        /// Seconds before a case is abandoned.
        #[arg(long, default_value_t = 1000.0)]
        timeout: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Data vector file (JSON or binary) or a CSV table.
    #[arg(long)]
    data: PathBuf,
    /// Schema for CSV data.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Workload name or JSON operator file.
    #[arg(long, default_value = "identity")]
    workload: String,
    #[arg(long, default_value_t = 0)]
    workload_seed: u64,
    /// Run on the domain reduced by workload-based partitioning.
    #[arg(long)]
    workload_reduce: bool,
    /// Error normalization (defaults to the record count).
    #[arg(long)]
    scale: Option<f64>,
    /// Public record count for the MWEM family (defaults to the data's).
    #[arg(long)]
    total: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    axis: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn params(&self) -> PlanParams {
        let d = PlanParams::default();
        PlanParams {
            total: self.total,
            rounds: self.rounds.unwrap_or(d.rounds),
            rho: self.rho.unwrap_or(d.rho),
            eta: self.eta.unwrap_or(d.eta),
            axis: self.axis.unwrap_or(d.axis),
            ..d
        }
    }

    fn spec(&self, plan: PlanKind, epsilon: String, seed: u64) -> RunSpec {
        RunSpec {
            plan,
            workload: self.workload.clone(),
            workload_seed: self.workload_seed,
            epsilon,
            seed,
            workload_reduce: self.workload_reduce,
            scale: self.scale,
            params: self.params(),
        }
    }
}

fn plan(name: &str) -> CliResult<PlanKind> {
    PlanKind::parse(name).map_err(|e| CliError::Usage(e.to_string()))
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn execute(cmd: Cmd) -> CliResult<()> {
    apply_env_cap()?;
    let clock = WallClock::new();
    match cmd {
        Cmd::Vectorize {
            data,
            schema,
            out,
            format,
        } => {
            let s = io::load_schema(&schema)?;
            let x = io::read_csv(&data, &s)?.vectorize()?;
            io::write_vector(&out, &x, format)
        }
        Cmd::Run {
            plan: name,
            common,
            epsilon,
            seed,
            timing,
        } => {
            let spec = common.spec(plan(&name)?, epsilon, seed);
            runner::parse_epsilon(&spec.epsilon)?;
            let data = DataSource::load(&common.data, common.schema.as_deref())?;
            let mut report = runner::run_once(&data, &spec, &clock)?;
            if !timing {
                report.result.timing.clear();
            }
            match &common.out {
                Some(p) => io::write_json(p, &report),
                None => {
                    let s = serde_json::to_string_pretty(&report).map_err(|e| CliError::format("stdout", e))?;
                    println!("{s}");
                    Ok(())
                }
            }
        }
        Cmd::Sweep {
            plans,
            common,
            epsilons,
            seeds,
            dataset,
        } => {
            let kinds = plans.iter().map(|p| plan(p)).collect::<CliResult<Vec<_>>>()?;
            if kinds.is_empty() || epsilons.is_empty() || seeds.is_empty() {
                return Err(CliError::Usage("sweep needs --plans, --epsilons and --seeds".into()));
            }
            for e in &epsilons {
                runner::parse_epsilon(e)?;
            }
            let data = DataSource::load(&common.data, common.schema.as_deref())?;
            let label = dataset.unwrap_or_else(|| {
                common.data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            });
            let base = common.spec(kinds[0], epsilons[0].clone(), 0);
            let mut out = output(common.out.as_deref())?;
            runner::sweep(&data, &label, &kinds, &epsilons, &seeds, &base, &clock, &mut out)?;
            out.flush().map_err(|e| CliError::io("output", e))
        }
        Cmd::Bench {
            matrices,
            representations,
            sizes,
            reps,
            infer,
            timeout,
            out,
        } => {
            if !(timeout > 0.0) {
                return Err(CliError::Usage("--timeout must be positive".into()));
            }
            let mut w = output(out.as_deref())?;
            for &m in &matrices {
                for &rep in &representations {
                    for &n in &sizes {
                        let row = bench_case(m, rep, n, reps, infer, Duration::from_secs_f64(timeout))?;
                        let line = serde_json::to_string(&row).map_err(|e| CliError::format("bench", e))?;
                        writeln!(w, "{line}").map_err(|e| CliError::io("output", e))?;
                        w.flush().map_err(|e| CliError::io("output", e))?;
                    }
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("privlin: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
