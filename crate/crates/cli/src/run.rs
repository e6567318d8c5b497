use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use trendshare_core::engine::{DecisionRecord, EngineConfig};
use trendshare_core::optimizer::CostVariant;
use trendshare_core::oracle::{evaluate_workload, OracleError, DEFAULT_CAP};
use trendshare_core::runtime::RuntimeConfig;
use trendshare_core::{Event, Query, ResultTable, Runtime, Schema, Strategy};

use crate::generator::GeneratorSpec;
use crate::io;
use crate::metrics::{Metrics, StdClock};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyChoice {
    Engine(Strategy),
    Oracle,
}

impl StrategyChoice {
    pub const ALL: [StrategyChoice; 4] = [
        StrategyChoice::Engine(Strategy::Dynamic),
        StrategyChoice::Engine(Strategy::StaticShared),
        StrategyChoice::Engine(Strategy::NonShared),
        StrategyChoice::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyChoice::Engine(s) => s.name(),
            StrategyChoice::Oracle => "oracle",
        }
    }
}

impl fmt::Display for StrategyChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyChoice {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyChoice::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                anyhow!(
                    "unknown strategy {s:?}; expected dynamic, static-shared, non-shared or oracle"
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventSource {
    File(PathBuf),
    Generator(PathBuf),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Optional with a generator, whose spec implies a schema.
    pub schema: Option<PathBuf>,
    pub queries: PathBuf,
    pub source: EventSource,
    pub strategy: StrategyChoice,
    pub decision_log: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub results: ResultTable,
    pub metrics: Metrics,
    pub decisions: Vec<DecisionRecord>,
}

/// Evaluates `queries` over `events` with one strategy, timing the whole run.
pub fn execute(
    schema: &Schema,
    queries: &[Query],
    events: Vec<Event>,
    strategy: StrategyChoice,
    log_decisions: bool,
) -> Result<Execution> {
    match strategy {
        StrategyChoice::Oracle => {
            let n = events.len() as u64;
            let conformed = events
                .into_iter()
                .map(|e| schema.conform(e))
                .collect::<Result<Vec<_>, _>>()?;
            let start = Instant::now();
            let results = evaluate_workload(queries, &conformed, DEFAULT_CAP).map_err(|e| match e {
                OracleError::CapExceeded { .. } => anyhow!(
                    "{e}; the oracle enumerates every trend and only accepts up to {DEFAULT_CAP} matched events per window, use another strategy"
                ),
                other => anyhow!(other),
            })?;
            let wall = start.elapsed().as_nanos() as u64;
            Ok(Execution {
                results,
                metrics: Metrics::oracle(n, wall),
                decisions: Vec::new(),
            })
        }
        StrategyChoice::Engine(s) => {
            let clock = StdClock::new();
            let config = RuntimeConfig {
                strategy: s,
                variant: CostVariant::default(),
                engine: EngineConfig {
                    log_decisions,
                    ..EngineConfig::default()
                },
            };
            let runtime = Runtime::with_config(schema.clone(), queries.to_vec(), config, clock)?;
            let start = Instant::now();
            let out = runtime.run(events)?;
            let wall = start.elapsed().as_nanos() as u64;
            Ok(Execution {
                metrics: Metrics::from_run(s.name(), &out.metrics, wall),
                results: out.results,
                decisions: out.decisions,
            })
        }
    }
}

/// Loads inputs, evaluates, and writes `results.csv`, `metrics.json` and,
/// when asked for, the decision log.
pub fn run(config: &RunConfig) -> Result<Execution> {
    let (schema, events) = match &config.source {
        EventSource::File(path) => {
            let Some(schema_path) = &config.schema else {
                bail!("--schema is required when reading events from a file");
            };
            (io::read_schema(schema_path)?, io::read_events(path)?)
        }
        EventSource::Generator(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read generator spec {}", path.display()))?;
            let spec: GeneratorSpec = serde_json::from_str(&text)
                .with_context(|| format!("invalid generator spec {}", path.display()))?;
            let schema = match &config.schema {
                Some(p) => io::read_schema(p)?,
                None => spec.schema()?,
            };
            (schema, spec.generate(config.seed)?)
        }
    };
    let queries = io::read_queries(&config.queries, &schema)?;
    if config.decision_log.is_some() && config.strategy == StrategyChoice::Oracle {
        bail!("--decision-log needs an engine strategy; the oracle makes no sharing decisions");
    }
    let exec = execute(
        &schema,
        &queries,
        events,
        config.strategy,
        config.decision_log.is_some(),
    )?;

    io::write_string(
        &config.out.join("results.csv"),
        &io::results_csv(&exec.results),
    )?;
    let metrics = serde_json::to_string_pretty(&exec.metrics)?;
    io::write_string(&config.out.join("metrics.json"), &metrics)?;
    if let Some(log) = &config.decision_log {
        io::write_decisions(log, &exec.decisions)?;
    }
    Ok(exec)
}
