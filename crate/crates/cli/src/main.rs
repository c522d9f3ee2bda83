use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod analyze;
mod calc;
mod error;
mod infer;
mod report;
mod roundtrip;
mod simulate;
mod target;

use error::CliError;

/// GPU memory-hierarchy microbenchmarking lab.
#[derive(Debug, Parser)]
#[command(name = "memlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a fine-grained pointer chase against a simulated target and emit its trace.
    Simulate(SimulateArgs),
    /// Recover cache parameters from a simulated target or recorded traces.
    Infer(InferArgs),
    /// Generate random caches, infer them back and diff.
    Roundtrip(RoundtripArgs),
    /// Bandwidth calculators, Little's law sizing and bank-conflict degrees.
    Calc(CalcArgs),
    /// Periodicity, miss classification and latency histogram of one trace.
    Analyze(AnalyzeArgs),
    /// Merge reports and emit plot-ready CSV series.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Shipped cache or hierarchy preset.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    pub preset: Option<String>,
    /// TOML file holding a cache target or hierarchy config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Array size in bytes.
    #[arg(long = "N", value_name = "BYTES")]
    pub n: Option<u64>,
    /// Uniform stride in bytes.
    #[arg(long = "s", value_name = "BYTES", conflicts_with_all = ["segments", "spectrum"])]
    pub s: Option<u64>,
    /// Segmented walk as `start/stride/hops;...` in elements.
    #[arg(long, conflicts_with = "spectrum")]
    pub segments: Option<String>,
    /// Use the latency-spectrum walk (hierarchy targets only).
    #[arg(long)]
    pub spectrum: bool,
    /// Timed loads.
    #[arg(long = "k")]
    pub k: Option<u64>,
    #[arg(long, default_value_t = 4)]
    pub element_bytes: u64,
    /// Skip the untimed warm-up pass.
    #[arg(long)]
    pub no_preheat: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trace destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// `sim:<preset>` or `dir:<directory of traces>`.
    #[arg(long)]
    pub probe: String,
    /// Size-search stride and N granularity in bytes.
    #[arg(long)]
    pub unit: Option<u64>,
    #[arg(long)]
    pub floor: Option<u64>,
    #[arg(long)]
    pub ceiling: Option<u64>,
    /// Comma-separated seeds for the replacement test.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub min_evictions: Option<u64>,
    /// JSON report destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RoundtripArgs {
    #[arg(long, default_value_t = 20)]
    pub random_configs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalcArgs {
    #[arg(long)]
    pub device: String,
    /// Shared-memory latency in cycles for Little's law; the conflict-free
    /// calibration point when omitted.
    #[arg(long)]
    pub latency: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub ilp: u32,
    /// Word stride for a bank-conflict reading.
    #[arg(long)]
    pub stride: Option<u64>,
    /// Measured shared-memory sweep CSV (cta_size,ctas_per_sm,ilp,throughput_gbps).
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Expected period in accesses; N/s for uniform traces when omitted.
    #[arg(long)]
    pub period: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Latency histogram as CSV.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for one CSV per tabular section.
    #[arg(long)]
    pub plot_dir: Option<PathBuf>,
}

fn invocation() -> Vec<String> {
    std::env::args().collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => simulate::run(&a),
        Command::Infer(a) => infer::run(&a, invocation()),
        Command::Roundtrip(a) => roundtrip::run(&a, invocation()),
        Command::Calc(a) => calc::run(&a, invocation()),
        Command::Analyze(a) => analyze::run(&a, invocation()),
        Command::Report(a) => report::run(&a, invocation()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { CliError::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
