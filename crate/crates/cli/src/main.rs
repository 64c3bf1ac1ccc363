use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qdiffusion_cli::{parse_config, run_scenario, CliError, EvolutionReport};

#[derive(Parser)]
#[command(name = "qdiffusion", version, about = "Quantum diffusion channel scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the configured input through every requested route.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Worker threads; 0 runs serially.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
}

fn run(config: PathBuf, output_dir: Option<PathBuf>, threads: usize) -> Result<EvolutionReport, CliError> {
    let text = std::fs::read_to_string(&config).map_err(|source| CliError::ConfigRead { path: config, source })?;
    let mut cfg = parse_config(&text)?;
    if let Some(dir) = output_dir {
        cfg.set_output_dir(dir);
    }
    run_scenario(&cfg, threads)
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        output_dir,
        threads,
    } = Cli::parse().command;
    let code = match run(config, output_dir, threads) {
        Ok(report) => {
            println!(
                "{}: {} cells, {} route pairs, max trace distance {:.3e}",
                report.input,
                report.cells.len(),
                report.pairs.len(),
                report.max_trace_distance()
            );
            for f in &report.failures {
                println!("FAIL {f}");
            }
            println!("status: {:?}", report.status);
            report.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
