use std::path::PathBuf;

use anyhow::Result;
use clap::{ArgGroup, Parser, Subcommand};
use trendshare::bench::bench_file;
use trendshare::{run, EventSource, RunConfig, StrategyChoice};

#[derive(Parser)]
#[command(
    name = "trendshare",
    version,
    about = "Shared Kleene trend aggregation over event streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a query workload over an event file or a generated stream.
    #[command(group(ArgGroup::new("source").required(true).args(["events", "generate"])))]
    Run {
        /// Schema JSON; implied by the generator spec when generating.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        queries: PathBuf,
        /// Event file, one JSON object per line.
        #[arg(long)]
        events: Option<PathBuf>,
        /// Generator spec JSON.
        #[arg(long)]
        generate: Option<PathBuf>,
        /// dynamic, static-shared, non-shared or oracle.
        #[arg(long, default_value = "dynamic")]
        strategy: StrategyChoice,
        #[arg(long)]
        decision_log: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare strategies over a matrix of stream rates and workload sizes.
    Bench {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            schema,
            queries,
            events,
            generate,
            strategy,
            decision_log,
            out,
            seed,
        } => {
            let source = match (events, generate) {
                (Some(e), _) => EventSource::File(e),
                (None, Some(g)) => EventSource::Generator(g),
                (None, None) => unreachable!("clap enforces an event source"),
            };
            let config = RunConfig {
                schema,
                queries,
                source,
                strategy,
                decision_log,
                out: out.clone(),
                seed,
            };
            let exec = run(&config)?;
            let m = &exec.metrics;
            eprintln!(
                "{}: {} events, {} result rows, {:.0} events/s, peak state {} bytes; wrote {}",
                m.strategy,
                m.events,
                exec.results.len(),
                m.throughput,
                m.peak_state_bytes,
                out.display()
            );
        }
        Command::Bench { matrix, out } => {
            let rows = bench_file(&matrix, &out)?;
            eprintln!(
                "{} rows written to {}",
                rows.len(),
                out.join("comparison.csv").display()
            );
        }
    }
    Ok(())
}
