use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gridtwin::ledger::{self, FileVerdict};
use gridtwin::pipeline::{self, PipelineError, RunConfig};

/// Smart-building energy optimization pipeline.
#[derive(Debug, Parser)]
#[command(name = "gridtwin", version)]
struct Cli {
    /// Run configuration (JSON). Defaults to the bundled demo.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for all artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic hourly dataset.
    GenData {
        /// Number of hourly rows.
        #[arg(long)]
        hours: Option<usize>,
        /// Write values rounded to three decimals.
        #[arg(long)]
        round3: bool,
    },
    /// Train the physics-penalized consumption surrogate.
    TrainSurrogate,
    /// Train the Q-learning scheduler against the twin.
    TrainAgent,
    /// Run the real-time loop, logging every step to the ledger.
    Simulate {
        /// Sleep for the modeled consensus time of each block.
        #[arg(long)]
        real_delay: bool,
    },
    /// Write metric, coverage and summary reports.
    Evaluate,
    /// Write plot-ready CSVs from a completed run.
    Report,
    /// All steps in order.
    Run {
        #[arg(long)]
        real_delay: bool,
    },
    /// Ledger file tools.
    Ledger {
        #[command(subcommand)]
        command: LedgerCommand,
    },
}

#[derive(Debug, Subcommand)]
enum LedgerCommand {
    /// Check hashes and linkage of a saved chain.
    Verify { file: PathBuf },
}

fn load_config(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::demo(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    if let Command::Ledger {
        command: LedgerCommand::Verify { file },
    } = &cli.command
    {
        let bytes = ledger::load_chain_bytes(file)?;
        return match ledger::verify_bytes(&bytes) {
            FileVerdict::Ok { blocks } => {
                println!("ok: {blocks} blocks");
                Ok(())
            }
            FileVerdict::BadBlock(i) => Err(PipelineError::Tampered(format!("bad block {i}"))),
            FileVerdict::Malformed(m) => Err(PipelineError::Tampered(format!("malformed chain ({m})"))),
        };
    }

    let cfg = load_config(cli)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::GenData { hours, round3 } => {
            let rows = pipeline::gen_data(&cfg, out, *hours, *round3)?;
            println!("wrote {} rows to {}", rows.len(), out.join(&cfg.paths.dataset).display());
        }
        Command::TrainSurrogate => {
            let r = pipeline::train_surrogate(&cfg, out)?;
            let l = r.final_loss;
            println!(
                "surrogate trained: data {:.6} physics {:.6} comfort {:.6} total {:.6}",
                l.data, l.physics, l.comfort, l.total
            );
        }
        Command::TrainAgent => {
            let t = pipeline::train_agent(&cfg, out)?;
            let last = t.returns.last().map_or(0.0, |r| r.total_return);
            println!(
                "agent trained: {} episodes, {} states, final return {last:.4}",
                t.returns.len(),
                t.table.n_states()
            );
        }
        Command::Simulate { real_delay } => {
            let r = pipeline::simulate(&cfg, out, *real_delay)?;
            print_simulation(&r);
        }
        Command::Evaluate => {
            let s = pipeline::evaluate(&cfg, out)?;
            let report = out.join(&cfg.paths.report_dir).join(pipeline::REPORT_TXT);
            if let Ok(text) = std::fs::read_to_string(report) {
                print!("{text}");
            }
            println!(
                "cost reduction {:.2}%  comfort index {:.1}%  renewable utilization {:.1}%",
                s.energy_cost_reduction_pct, s.user_comfort_index_pct, s.renewable_utilization_pct
            );
        }
        Command::Report => {
            let dir = pipeline::report_bundle(&cfg, out)?;
            println!("wrote bundle to {}", dir.display());
        }
        Command::Run { real_delay } => {
            let r = pipeline::run_all(&cfg, out, *real_delay)?;
            print_simulation(&r.simulation);
            println!(
                "surrogate MAE {:.4} vs linear {:.4}; cost reduction {:.2}%",
                r.evaluation.surrogate_mae, r.evaluation.linear_mae, r.evaluation.energy_cost_reduction_pct
            );
        }
        Command::Ledger { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn print_simulation(r: &pipeline::SimulationRun) {
    let s = &r.summary;
    println!(
        "agent cost {:.4} vs always-on {:.4} over {} h; {} blocks, {} fallbacks, simulated consensus {:.3} s, mean decision latency {:.2e} s",
        s.agent_cost,
        s.naive_cost,
        s.horizon,
        s.ledger_blocks,
        s.fallbacks,
        s.simulated_consensus_time_s,
        r.mean_latency_s
    );
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
