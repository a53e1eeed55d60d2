use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qfuse::{build_hea, fuse_circuit, FusionPolicy};
use qfuse_cli::{run_bench, scan_blocks, write_reports, BenchConfig, BenchReport, Format, Result};

#[derive(Parser)]
#[command(name = "qfuse", version, about = "Fused adjoint-gradient benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Time one gradient configuration.
    Bench {
        #[command(flatten)]
        config: BenchConfig,
        #[command(flatten)]
        output: Output,
    },
    /// Run one checkpointed configuration per block size.
    Scan {
        #[command(flatten)]
        config: BenchConfig,
        /// Comma-separated block sizes; defaults to every divisor of --layers.
        #[arg(long, value_delimiter = ',')]
        blocks: Vec<usize>,
        #[command(flatten)]
        output: Output,
    },
    /// Print the ansatz circuit in text form.
    Circuit {
        #[arg(long, default_value_t = 4)]
        qubits: usize,
        #[arg(long, default_value_t = 1)]
        layers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the fused block structure of the ansatz.
    Fuse {
        #[arg(long, default_value_t = 4)]
        qubits: usize,
        #[arg(long, default_value_t = 1)]
        layers: usize,
    },
}

fn emit(reports: &[BenchReport], output: &Output) -> Result<()> {
    match &output.out {
        Some(path) => write_reports(reports, output.format, BufWriter::new(File::create(path)?)),
        None => write_reports(reports, output.format, io::stdout().lock()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bench { config, output } => emit(&[run_bench(&config)?], &output),
        Command::Scan { config, blocks, output } => {
            let reports = scan_blocks(&config, &blocks)?;
            if let Some(best) = reports.iter().min_by(|a, b| a.peak_units.total_cmp(&b.peak_units)) {
                eprintln!("lowest peak: {} units at block {}", best.peak_units, best.block.unwrap_or(0));
            }
            emit(&reports, &output)
        }
        Command::Circuit { qubits, layers, seed } => {
            let c = build_hea(qubits, layers, seed)?;
            io::stdout().lock().write_all(c.to_text().as_bytes())?;
            Ok(())
        }
        Command::Fuse { qubits, layers } => {
            let c = build_hea(qubits, layers, 0)?;
            let f = fuse_circuit(&c, FusionPolicy::default())?;
            write!(io::stdout().lock(), "{f}")?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
