//! Drives a workload over an event stream: routing, pane advance, sharing
//! policy and result assembly.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use num_bigint::BigInt;
use thiserror::Error;

use crate::clock::Clock;
use crate::engine::plan::compile_workload;
use crate::engine::{
    combine_conjunction, Closed, DecisionRecord, EngineConfig, EngineStats, Env, GroupPlan,
    Partial, PartitionEngine, Pending, ResultKey, ResultTable, SharedTrace,
};
use crate::event::{Event, EventError, Schema, Value};
use crate::optimizer::{
    CostVariant, DynamicPolicy, NonSharedPolicy, SharingPolicy, StaticSharedPolicy,
};
use crate::partition::{pane_config, partition_key, PaneConfig, RoutingError};
use crate::query::{Pattern, Query, QueryError, Window};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Query(#[from] QueryError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Cost-based sharing decision per burst.
    #[default]
    Dynamic,
    /// Share whenever two or more queries could.
    StaticShared,
    /// Every query propagates on its own.
    NonShared,
}

impl Strategy {
    pub fn policy(self, variant: CostVariant) -> Box<dyn SharingPolicy> {
        match self {
            Strategy::Dynamic => Box::new(DynamicPolicy { variant }),
            Strategy::StaticShared => Box::new(StaticSharedPolicy),
            Strategy::NonShared => Box::new(NonSharedPolicy),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Dynamic => "dynamic",
            Strategy::StaticShared => "static-shared",
            Strategy::NonShared => "non-shared",
        }
    }

    pub const ALL: [Strategy; 3] = [
        Strategy::Dynamic,
        Strategy::StaticShared,
        Strategy::NonShared,
    ];
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RuntimeConfig {
    pub strategy: Strategy,
    pub variant: CostVariant,
    pub engine: EngineConfig,
}

/// Result latency of one query, in clock nanoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LatencyStats {
    pub results: u64,
    pub total_nanos: u128,
    pub max_nanos: u64,
}

impl LatencyStats {
    fn record(&mut self, nanos: u64) {
        self.results += 1;
        self.total_nanos += u128::from(nanos);
        self.max_nanos = self.max_nanos.max(nanos);
    }

    pub fn mean_nanos(&self) -> f64 {
        if self.results == 0 {
            0.0
        } else {
            self.total_nanos as f64 / self.results as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub events_in: u64,
    /// Pane length used for `pane_counts`: the gcd over every window.
    pub pane_len: u64,
    pub pane_counts: BTreeMap<u64, u64>,
    pub peak_bytes: usize,
    pub partitions: usize,
    pub latency: BTreeMap<String, LatencyStats>,
    pub engine: EngineStats,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub results: ResultTable,
    pub metrics: RunMetrics,
    pub decisions: Vec<DecisionRecord>,
    /// Filled when [`EngineConfig::trace`] is set.
    pub traces: Vec<SharedTrace>,
}

struct GroupState {
    plan: GroupPlan,
    pane: Option<u64>,
    parts: BTreeMap<String, PartitionEngine>,
}

pub struct Runtime<C: Clock> {
    schema: Schema,
    queries: Vec<Query>,
    groups: Vec<GroupState>,
    policy: Box<dyn SharingPolicy>,
    clock: C,
    config: EngineConfig,
    global_pane: PaneConfig,
    last_time: Option<u64>,
    partials: BTreeMap<ResultKey, Partial>,
    decisions: Vec<DecisionRecord>,
    traces: Vec<SharedTrace>,
    metrics: RunMetrics,
    bytes: usize,
}

fn render(v: &Value, out: &mut String) {
    match v {
        Value::Text(s) => out.push_str(s),
        v => {
            let _ = write!(out, "{v}");
        }
    }
}

/// GROUPBY values of a partition, in GROUPBY order.
fn group_key(values: &BTreeMap<String, Value>, attrs: &[String]) -> String {
    let mut key = String::new();
    for (i, a) in attrs.iter().enumerate() {
        if i > 0 {
            key.push('|');
        }
        if let Some(v) = values.get(a) {
            render(v, &mut key);
        }
    }
    key
}

impl<C: Clock> Runtime<C> {
    pub fn new(
        schema: Schema,
        queries: Vec<Query>,
        strategy: Strategy,
        clock: C,
    ) -> Result<Self, RuntimeError> {
        Self::with_config(
            schema,
            queries,
            RuntimeConfig {
                strategy,
                ..RuntimeConfig::default()
            },
            clock,
        )
    }

    pub fn with_config(
        schema: Schema,
        queries: Vec<Query>,
        config: RuntimeConfig,
        clock: C,
    ) -> Result<Self, RuntimeError> {
        let policy = config.strategy.policy(config.variant);
        Self::with_policy(schema, queries, policy, config.engine, clock)
    }

    /// Runs with a caller-supplied sharing policy.
    pub fn with_policy(
        schema: Schema,
        queries: Vec<Query>,
        policy: Box<dyn SharingPolicy>,
        config: EngineConfig,
        clock: C,
    ) -> Result<Self, RuntimeError> {
        let (plans, _) = compile_workload(&queries, &schema)?;
        let windows: Vec<Window> = queries.iter().map(|q| q.window).collect();
        let global_pane = if windows.is_empty() {
            PaneConfig { len: 1 }
        } else {
            pane_config(&windows)
        };
        let metrics = RunMetrics {
            pane_len: global_pane.len,
            latency: queries
                .iter()
                .map(|q| (q.id.clone(), LatencyStats::default()))
                .collect(),
            ..RunMetrics::default()
        };
        Ok(Runtime {
            schema,
            groups: plans
                .into_iter()
                .map(|plan| GroupState {
                    plan,
                    pane: None,
                    parts: BTreeMap::new(),
                })
                .collect(),
            queries,
            policy,
            clock,
            config,
            global_pane,
            last_time: None,
            partials: BTreeMap::new(),
            decisions: Vec::new(),
            traces: Vec::new(),
            metrics,
            bytes: 0,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    /// Feeds one event. Events must come in non-decreasing time order.
    pub fn push(&mut self, event: Event) -> Result<(), RuntimeError> {
        let event = self.schema.conform(event)?;
        if let Some(prev) = self.last_time {
            if event.time < prev {
                return Err(EventError::OutOfOrder {
                    prev,
                    got: event.time,
                }
                .into());
            }
        }
        let ty = self
            .schema
            .type_id(&event.kind)
            .ok_or_else(|| EventError::UnknownType(event.kind.clone()))?;

        let mut routes = Vec::new();
        for (gi, gs) in self.groups.iter().enumerate() {
            let matched = gs.plan.matched(ty, &event);
            if !matched.is_empty() {
                let key = partition_key(&event, &gs.plan.attrs)?;
                routes.push((gi, key, matched));
            }
        }

        self.last_time = Some(event.time);
        self.metrics.events_in += 1;
        *self
            .metrics
            .pane_counts
            .entry(self.global_pane.pane_of(event.time))
            .or_default() += 1;
        let arrival = self.clock.now_nanos();

        for gi in 0..self.groups.len() {
            let pane = self.groups[gi].plan.pane.pane_of(event.time);
            if self.groups[gi].pane.is_none_or(|cur| cur < pane) {
                self.advance_group(gi, pane);
            }
        }
        let last = routes.len().saturating_sub(1);
        let mut event = Some(event);
        for (i, (gi, key, matched)) in routes.into_iter().enumerate() {
            let event = if i == last {
                event.take().expect("event moved once")
            } else {
                event.clone().expect("event present")
            };
            let item = Pending {
                event,
                ty,
                matched,
                arrival,
            };
            self.with_partition(gi, key, item);
        }
        Ok(())
    }

    /// Ends the stream and returns everything computed.
    pub fn finish(mut self) -> RunOutput {
        for gi in 0..self.groups.len() {
            let keys: Vec<String> = self.groups[gi].parts.keys().cloned().collect();
            for key in keys {
                self.run_on(gi, &key, |part, plan, env| part.finish(plan, env));
            }
        }
        let mut results = ResultTable::new();
        for q in &self.queries {
            results
                .labels
                .insert(q.id.clone(), alloc::format!("{}", q.aggregate));
        }
        let by_id: BTreeMap<&str, &Query> =
            self.queries.iter().map(|q| (q.id.as_str(), q)).collect();
        for (key, partial) in core::mem::take(&mut self.partials) {
            let q = by_id[key.query.as_str()];
            let value = partial.finalize(&q.aggregate);
            results.insert(key, value);
        }
        self.metrics.partitions = self.groups.iter().map(|g| g.parts.len()).sum();
        RunOutput {
            results,
            metrics: self.metrics,
            decisions: self.decisions,
            traces: self.traces,
        }
    }

    /// Pushes every event, then finishes.
    pub fn run(
        mut self,
        events: impl IntoIterator<Item = Event>,
    ) -> Result<RunOutput, RuntimeError> {
        for e in events {
            self.push(e)?;
        }
        Ok(self.finish())
    }

    fn advance_group(&mut self, gi: usize, pane: u64) {
        self.groups[gi].pane = Some(pane);
        let keys: Vec<String> = self.groups[gi].parts.keys().cloned().collect();
        for key in keys {
            self.run_on(gi, &key, |part, plan, env| part.advance(plan, pane, env));
        }
    }

    fn with_partition(&mut self, gi: usize, key: String, item: Pending) {
        let gs = &mut self.groups[gi];
        if !gs.parts.contains_key(&key) {
            let values = gs
                .plan
                .attrs
                .iter()
                .filter_map(|a| item.event.attr(a).map(|v| (a.clone(), v.clone())))
                .collect();
            let mut part = PartitionEngine::new(&gs.plan, values);
            if let Some(pane) = gs.pane {
                let mut closed = Vec::new();
                let mut env = Env {
                    policy: &mut *self.policy,
                    clock: &self.clock,
                    config: self.config,
                    stats: &mut self.metrics.engine,
                    decisions: &mut self.decisions,
                    traces: &mut self.traces,
                    closed: &mut closed,
                };
                part.advance(&gs.plan, pane, &mut env);
            }
            gs.parts.insert(key.clone(), part);
        }
        self.run_on(gi, &key, |part, plan, env| part.push(plan, item, env));
    }

    fn run_on(
        &mut self,
        gi: usize,
        key: &str,
        f: impl FnOnce(&mut PartitionEngine, &GroupPlan, &mut Env<'_>),
    ) {
        let mut closed = Vec::new();
        let gs = &mut self.groups[gi];
        let part = gs.parts.get_mut(key).expect("partition exists");
        let before = part.bytes();
        {
            let mut env = Env {
                policy: &mut *self.policy,
                clock: &self.clock,
                config: self.config,
                stats: &mut self.metrics.engine,
                decisions: &mut self.decisions,
                traces: &mut self.traces,
                closed: &mut closed,
            };
            f(part, &gs.plan, &mut env);
        }
        let after = part.bytes();
        self.bytes = self.bytes + after - before;
        self.metrics.peak_bytes = self.metrics.peak_bytes.max(self.bytes);
        if !closed.is_empty() {
            let values = part.key_values.clone();
            self.absorb(gi, &values, closed);
        }
    }

    fn absorb(&mut self, gi: usize, values: &BTreeMap<String, Value>, closed: Vec<Closed>) {
        let now = self.clock.now_nanos();
        let plan = &self.groups[gi].plan;
        // Conjunction queries need both operands of a window before they
        // can contribute.
        let mut conj: BTreeMap<(usize, u64), [Option<Partial>; 2]> = BTreeMap::new();
        let mut last_arrivals: BTreeMap<(usize, u64), u64> = BTreeMap::new();
        for c in closed {
            let p = &plan.plans[c.plan];
            let q = &self.queries[p.query];
            if matches!(q.pattern, Pattern::And(..)) {
                conj.entry((p.query, c.inst)).or_default()[p.conjunct] = Some(c.partial);
                let la = last_arrivals.entry((p.query, c.inst)).or_default();
                *la = (*la).max(c.last_arrival);
                continue;
            }
            let (s, e) = q.window.bounds(c.inst);
            let key = ResultKey {
                query: q.id.clone(),
                window_start: s,
                window_end: e,
                group: group_key(values, &q.groupby),
            };
            self.metrics
                .latency
                .get_mut(&q.id)
                .expect("query latency slot")
                .record(now.saturating_sub(c.last_arrival));
            self.partials.entry(key).or_default().merge(&c.partial);
        }
        for ((qi, inst), [left, right]) in conj {
            let q = &self.queries[qi];
            let count = |p: &Option<Partial>| {
                BigInt::from(p.as_ref().map(|p| p.count.clone()).unwrap_or_default())
            };
            let pairs = combine_conjunction(&count(&left), &count(&right), &BigInt::from(0))
                .expect("counts are non-negative");
            let (s, e) = q.window.bounds(inst);
            let key = ResultKey {
                query: q.id.clone(),
                window_start: s,
                window_end: e,
                group: group_key(values, &q.groupby),
            };
            self.metrics
                .latency
                .get_mut(&q.id)
                .expect("query latency slot")
                .record(now.saturating_sub(last_arrivals[&(qi, inst)]));
            let partial = Partial {
                count: pairs,
                ..Partial::default()
            };
            self.partials.entry(key).or_default().merge(&partial);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::NullClock;
    use crate::engine::AggValue;
    use crate::event::AttrKind;
    use crate::query::parse_query_file;

    fn schema() -> Schema {
        Schema::from_slices(&[("A", &[]), ("B", &[("x", AttrKind::Integer)]), ("C", &[])]).unwrap()
    }

    #[test]
    fn kleene_over_three_events() {
        let s = schema();
        let w =
            parse_query_file("QUERY q RETURN COUNT(*) PATTERN B+ WITHIN 10 SLIDE 10", &s).unwrap();
        for strategy in Strategy::ALL {
            let rt = Runtime::new(s.clone(), w.clone(), strategy, NullClock).unwrap();
            let out = rt.run((1..=3).map(|t| Event::new(t, "B"))).unwrap();
            assert_eq!(
                out.results.get("q", 0, 10, ""),
                Some(&AggValue::Count(7u32.into()))
            );
        }
    }

    #[test]
    fn out_of_order_is_rejected() {
        let s = schema();
        let w =
            parse_query_file("QUERY q RETURN COUNT(*) PATTERN B+ WITHIN 10 SLIDE 10", &s).unwrap();
        let mut rt = Runtime::new(s, w, Strategy::Dynamic, NullClock).unwrap();
        rt.push(Event::new(5, "B")).unwrap();
        assert!(matches!(
            rt.push(Event::new(3, "B")),
            Err(RuntimeError::Event(EventError::OutOfOrder {
                prev: 5,
                got: 3
            }))
        ));
    }

    #[test]
    fn empty_window_count_is_zero() {
        let s = schema();
        let w = parse_query_file(
            "QUERY q RETURN COUNT(*) PATTERN SEQ(A, B+) WITHIN 10 SLIDE 10",
            &s,
        )
        .unwrap();
        let rt = Runtime::new(s, w, Strategy::NonShared, NullClock).unwrap();
        let out = rt.run([Event::new(1, "B")]).unwrap();
        assert_eq!(
            out.results.get("q", 0, 10, ""),
            Some(&AggValue::Count(0u32.into()))
        );
    }
}
