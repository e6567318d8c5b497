use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use trendshare_core::optimizer::Action;
use trendshare_core::runtime::RunMetrics;
use trendshare_core::Clock;

/// Monotonic nanoseconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct StdClock {
    origin: Instant,
}

impl StdClock {
    pub fn new() -> StdClock {
        StdClock {
            origin: Instant::now(),
        }
    }
}

impl Default for StdClock {
    fn default() -> Self {
        StdClock::new()
    }
}

impl Clock for StdClock {
    fn now_nanos(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct QueryLatency {
    pub results: u64,
    pub mean_nanos: f64,
    pub max_nanos: u64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Metrics {
    pub strategy: String,
    pub events: u64,
    pub wall_nanos: u64,
    /// Events per second, end to end.
    pub throughput: f64,
    /// Mean over all emitted results of every query.
    pub mean_latency_nanos: f64,
    pub max_latency_nanos: u64,
    pub latency: BTreeMap<String, QueryLatency>,
    pub peak_state_bytes: usize,
    pub partitions: usize,
    pub pane_len: u64,
    pub panes: usize,
    pub snapshots: u64,
    pub graphlets: u64,
    pub shared_graphlets: u64,
    pub decisions: BTreeMap<&'static str, u64>,
    pub decision_nanos: u64,
    /// Decision time as a fraction of wall time.
    pub decision_overhead: f64,
}

impl Metrics {
    pub fn from_run(strategy: &str, m: &RunMetrics, wall_nanos: u64) -> Metrics {
        let wall = wall_nanos.max(1);
        let (count, total) = m.latency.values().fold((0u64, 0u128), |(c, t), l| {
            (c + l.results, t + l.total_nanos)
        });
        Metrics {
            strategy: strategy.to_string(),
            events: m.events_in,
            wall_nanos,
            throughput: m.events_in as f64 * 1e9 / wall as f64,
            mean_latency_nanos: if count == 0 {
                0.0
            } else {
                total as f64 / count as f64
            },
            max_latency_nanos: m.latency.values().map(|l| l.max_nanos).max().unwrap_or(0),
            latency: m
                .latency
                .iter()
                .map(|(q, l)| {
                    (
                        q.clone(),
                        QueryLatency {
                            results: l.results,
                            mean_nanos: l.mean_nanos(),
                            max_nanos: l.max_nanos,
                        },
                    )
                })
                .collect(),
            peak_state_bytes: m.peak_bytes,
            partitions: m.partitions,
            pane_len: m.pane_len,
            panes: m.pane_counts.len(),
            snapshots: m.engine.snapshots,
            graphlets: m.engine.graphlets,
            shared_graphlets: m.engine.shared_graphlets,
            decisions: Action::ALL
                .iter()
                .zip(m.engine.decisions)
                .map(|(a, n)| (a.name(), n))
                .collect(),
            decision_nanos: m.engine.decision_nanos,
            decision_overhead: m.engine.decision_nanos as f64 / wall as f64,
        }
    }

    /// Metrics for a run evaluated by the brute-force oracle, which keeps
    /// no incremental state.
    pub fn oracle(events: u64, wall_nanos: u64) -> Metrics {
        let mut m = Metrics::from_run("oracle", &RunMetrics::default(), wall_nanos);
        m.events = events;
        m.throughput = events as f64 * 1e9 / wall_nanos.max(1) as f64;
        m
    }
}
