//! Strategy comparison over a grid of stream rates and workload sizes.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use trendshare_core::{parse_query_file, Query, Schema};

use crate::generator::GeneratorSpec;
use crate::io;
use crate::run::{execute, StrategyChoice};

/// Query text instantiated once per query. `{i}` becomes the query index and
/// `{i%N}` the index modulo `N`; each instance gets the id `q<i>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadTemplate {
    pub template: String,
}

impl WorkloadTemplate {
    pub fn new(template: impl Into<String>) -> WorkloadTemplate {
        WorkloadTemplate {
            template: template.into(),
        }
    }

    pub fn instantiate(&self, i: usize) -> Result<String> {
        let mut out = String::new();
        let mut rest = self.template.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let close = rest[open..]
                .find('}')
                .with_context(|| format!("unclosed placeholder in {:?}", self.template))?
                + open;
            let inner = rest[open + 1..close].trim();
            let value = match inner.split_once('%') {
                None if inner == "i" => i,
                Some(("i", m)) => {
                    let m: usize = m
                        .trim()
                        .parse()
                        .with_context(|| format!("bad modulus in {{{inner}}}"))?;
                    ensure!(m > 0, "modulus must be positive in {{{inner}}}");
                    i % m
                }
                _ => bail!("unknown placeholder {{{inner}}}; use {{i}} or {{i%N}}"),
            };
            write!(out, "{value}").unwrap();
            rest = &rest[close + 1..];
        }
        out.push_str(rest);
        Ok(format!("QUERY q{i}\n{out}\n"))
    }

    pub fn queries(&self, k: usize, schema: &Schema) -> Result<Vec<Query>> {
        let text = (0..k)
            .map(|i| self.instantiate(i))
            .collect::<Result<String>>()?;
        Ok(parse_query_file(&text, schema)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchMatrix {
    pub generator: GeneratorSpec,
    pub workload: WorkloadTemplate,
    pub query_counts: Vec<usize>,
    /// Defaults to the generator's own rate.
    #[serde(default)]
    pub events_per_minute: Vec<u64>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    /// Each cell keeps its fastest repetition.
    #[serde(default = "one")]
    pub repeats: usize,
}

fn default_strategies() -> Vec<String> {
    ["dynamic", "static-shared", "non-shared"]
        .map(String::from)
        .to_vec()
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub strategy: String,
    pub events_per_minute: u64,
    pub queries: usize,
    pub events: u64,
    pub wall_nanos: u64,
    pub throughput: f64,
    pub mean_latency_nanos: f64,
    pub max_latency_nanos: u64,
    pub peak_state_bytes: usize,
    pub snapshots: u64,
    pub shared_graphlets: u64,
    pub decision_nanos: u64,
    pub decision_overhead: f64,
    /// Throughput relative to the non-shared strategy in the same cell.
    pub speedup: Option<f64>,
    /// Whether the result table equals the first strategy's in the cell.
    pub agrees: bool,
}

pub const CSV_HEADER: &str = "strategy,events_per_minute,queries,events,wall_ms,throughput_eps,mean_latency_us,max_latency_us,peak_state_bytes,snapshots,shared_graphlets,decision_overhead,speedup_vs_non_shared,agrees";

impl BenchRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{:.3},{:.1},{:.3},{:.3},{},{},{},{:.6},{},{}",
            self.strategy,
            self.events_per_minute,
            self.queries,
            self.events,
            self.wall_nanos as f64 / 1e6,
            self.throughput,
            self.mean_latency_nanos / 1e3,
            self.max_latency_nanos as f64 / 1e3,
            self.peak_state_bytes,
            self.snapshots,
            self.shared_graphlets,
            self.decision_overhead,
            self.speedup.map(|s| format!("{s:.3}")).unwrap_or_default(),
            self.agrees
        )
    }
}

pub fn bench(matrix: &BenchMatrix) -> Result<Vec<BenchRow>> {
    ensure!(matrix.repeats > 0, "repeats must be positive");
    let strategies: Vec<StrategyChoice> = matrix
        .strategies
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_>>()?;
    let rates = if matrix.events_per_minute.is_empty() {
        vec![matrix.generator.events_per_minute]
    } else {
        matrix.events_per_minute.clone()
    };
    let mut rows = Vec::new();
    for &rate in &rates {
        let spec = GeneratorSpec {
            events_per_minute: rate,
            ..matrix.generator.clone()
        };
        let schema = spec.schema()?;
        let events = spec.generate(matrix.seed)?;
        for &k in &matrix.query_counts {
            let queries = matrix.workload.queries(k, &schema)?;
            let mut cell: Vec<BenchRow> = Vec::new();
            let mut reference = None;
            for &strategy in &strategies {
                let mut best: Option<crate::run::Execution> = None;
                for _ in 0..matrix.repeats {
                    let exec = execute(&schema, &queries, events.clone(), strategy, false)?;
                    if best
                        .as_ref()
                        .is_none_or(|b| exec.metrics.wall_nanos < b.metrics.wall_nanos)
                    {
                        best = Some(exec);
                    }
                }
                let exec = best.expect("at least one repetition");
                let agrees = match &reference {
                    None => {
                        reference = Some(exec.results.clone());
                        true
                    }
                    Some(r) => exec.results.rows == r.rows,
                };
                let m = &exec.metrics;
                cell.push(BenchRow {
                    strategy: strategy.name().to_string(),
                    events_per_minute: rate,
                    queries: k,
                    events: m.events,
                    wall_nanos: m.wall_nanos,
                    throughput: m.throughput,
                    mean_latency_nanos: m.mean_latency_nanos,
                    max_latency_nanos: m.max_latency_nanos,
                    peak_state_bytes: m.peak_state_bytes,
                    snapshots: m.snapshots,
                    shared_graphlets: m.shared_graphlets,
                    decision_nanos: m.decision_nanos,
                    decision_overhead: m.decision_overhead,
                    speedup: None,
                    agrees,
                });
            }
            if let Some(base) = cell
                .iter()
                .find(|r| r.strategy == "non-shared")
                .map(|r| r.throughput)
            {
                for r in &mut cell {
                    r.speedup = Some(r.throughput / base);
                }
            }
            rows.extend(cell);
        }
    }
    Ok(rows)
}

pub fn comparison_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}

/// Reads a matrix file and writes `comparison.csv` into `out`.
pub fn bench_file(matrix: &Path, out: &Path) -> Result<Vec<BenchRow>> {
    let text = std::fs::read_to_string(matrix)
        .with_context(|| format!("cannot read matrix {}", matrix.display()))?;
    let matrix: BenchMatrix = serde_json::from_str(&text)
        .with_context(|| format!("invalid matrix {}", matrix.display()))?;
    let rows = bench(&matrix)?;
    io::write_string(&out.join("comparison.csv"), &comparison_csv(&rows))?;
    Ok(rows)
}
