//! Per-partition execution state: stored events, graphlets, window contexts
//! and the burst-by-burst propagation of intermediate aggregates.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Zero;

use super::acc::Acc;
use super::expr::{SnapshotExpr, SnapshotId, SnapshotTable};
use super::plan::{GroupPlan, PlanSet};
use super::result::Partial;
use crate::clock::Clock;
use crate::event::{Event, TypeId, Value};
use crate::optimizer::{Action, BurstProfile, SharingPolicy};
use crate::partition::{Burst, BurstBuffer};

/// An event waiting in the burst buffer.
#[derive(Debug, Clone)]
pub struct Pending {
    pub event: Event,
    pub ty: TypeId,
    pub matched: PlanSet,
    /// Clock reading when the event was pushed.
    pub arrival: u64,
}

/// A finished window context of one plan.
#[derive(Debug, Clone)]
pub struct Closed {
    pub plan: usize,
    pub inst: u64,
    pub partial: Partial,
    pub last_arrival: u64,
}

/// One optimizer decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionRecord {
    pub pane: u64,
    pub burst_type: String,
    pub b: u64,
    pub n: u64,
    pub s_c: u64,
    pub s_p: u64,
    pub shared_cost: u128,
    pub nonshared_cost: u128,
    pub action: Action,
    pub shared_set: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub snapshots: u64,
    pub graphlets: u64,
    pub shared_graphlets: u64,
    /// Indexed like [`Action::ALL`].
    pub decisions: [u64; 4],
    pub decision_nanos: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineConfig {
    /// Largest number of snapshot terms an expression may carry before it
    /// is replaced by a fresh snapshot.
    pub expr_cap: usize,
    pub log_decisions: bool,
    /// Keep a [`SharedTrace`] of every shared graphlet.
    pub trace: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            expr_cap: 64,
            log_decisions: false,
            trace: false,
        }
    }
}

/// Everything a partition needs from its caller while it runs.
pub struct Env<'a> {
    pub policy: &'a mut dyn SharingPolicy,
    pub clock: &'a dyn Clock,
    pub config: EngineConfig,
    pub stats: &'a mut EngineStats,
    pub decisions: &'a mut Vec<DecisionRecord>,
    pub traces: &'a mut Vec<SharedTrace>,
    pub closed: &'a mut Vec<Closed>,
}

/// The symbolic state of one shared graphlet after its burst.
#[derive(Debug, Clone)]
pub struct SharedTrace {
    pub burst_type: String,
    pub times: Vec<u64>,
    /// Query id and window instance of each table column.
    pub columns: Vec<(String, u64)>,
    pub table: SnapshotTable,
    /// Intermediate count of each burst event.
    pub exprs: Vec<SnapshotExpr>,
}

impl SharedTrace {
    pub fn column(&self, query: &str, inst: u64) -> Option<usize> {
        self.columns
            .iter()
            .position(|(q, i)| q == query && *i == inst)
    }

    /// Value of snapshot `id` for one query and window instance.
    pub fn snapshot(&self, id: SnapshotId, query: &str, inst: u64) -> Option<&Acc> {
        self.table.value(id, self.column(query, inst)?)
    }

    /// Intermediate count of the burst event at `pos`.
    pub fn event_value(&self, pos: usize, query: &str, inst: u64) -> Option<Acc> {
        self.table
            .evaluate(&self.exprs[pos], self.column(query, inst)?)
            .ok()
    }
}

#[derive(Debug, Clone)]
struct Own {
    plan: usize,
    first_inst: u64,
    vals: Vec<Acc>,
}

#[derive(Debug, Clone)]
struct Node {
    time: u64,
    ty: TypeId,
    event: Event,
    matched: PlanSet,
    graphlet: u64,
    pos: u32,
    own: Vec<Own>,
    bytes: usize,
}

#[derive(Debug, Clone, Copy)]
struct ColGroup {
    plan: usize,
    start: usize,
    first_inst: u64,
    n: usize,
}

/// The shared computation of one plan set over one graphlet.
#[derive(Debug, Clone)]
struct Part {
    cols: Vec<ColGroup>,
    table: SnapshotTable,
    exprs: Vec<SnapshotExpr>,
}

impl Part {
    fn column(&self, plan: usize, inst: u64) -> Option<usize> {
        let cg = self.cols.iter().find(|c| c.plan == plan)?;
        let k = inst.checked_sub(cg.first_inst)? as usize;
        (k < cg.n).then_some(cg.start + k)
    }

    fn approx_bytes(&self) -> usize {
        self.table.approx_bytes()
            + self
                .exprs
                .iter()
                .map(SnapshotExpr::approx_bytes)
                .sum::<usize>()
    }
}

#[derive(Debug, Clone)]
struct Graphlet {
    first_node: u64,
    len: u64,
    parts: Vec<Part>,
    bytes: usize,
}

#[derive(Debug, Clone)]
struct Ctx {
    tot: Vec<Acc>,
    result: Acc,
    last_arrival: u64,
}

/// Window contexts of one plan, indexed by instance number.
#[derive(Debug, Clone, Default)]
struct CtxRing {
    base: u64,
    slots: VecDeque<Option<Ctx>>,
}

impl CtxRing {
    fn ensure(&mut self, range: core::ops::Range<u64>, ntypes: usize) {
        if self.slots.is_empty() {
            self.base = range.start;
        }
        debug_assert!(range.start >= self.base);
        while self.base + (self.slots.len() as u64) < range.end {
            self.slots.push_back(None);
        }
        for inst in range {
            let slot = &mut self.slots[(inst - self.base) as usize];
            if slot.is_none() {
                *slot = Some(Ctx {
                    tot: alloc::vec![Acc::zero(); ntypes],
                    result: Acc::zero(),
                    last_arrival: 0,
                });
            }
        }
    }

    fn get(&self, inst: u64) -> &Ctx {
        self.slots
            .get((inst - self.base) as usize)
            .and_then(Option::as_ref)
            .expect("window context exists")
    }

    fn get_mut(&mut self, inst: u64) -> &mut Ctx {
        self.slots
            .get_mut((inst - self.base) as usize)
            .and_then(Option::as_mut)
            .expect("window context exists")
    }
}

/// Stored events of the partition and the graphlet values they refer to.
#[derive(Debug, Clone, Default)]
struct Store {
    nodes: VecDeque<Node>,
    base: u64,
    by_type: Vec<VecDeque<u64>>,
    graphlets: BTreeMap<u64, Graphlet>,
}

impl Store {
    fn node(&self, id: u64) -> &Node {
        &self.nodes[(id - self.base) as usize]
    }

    fn next_id(&self) -> u64 {
        self.base + self.nodes.len() as u64
    }

    /// Ids of stored `ty` events with time at least `since` and id below
    /// `before`, oldest first.
    fn ids_since(&self, ty: TypeId, since: u64, before: u64) -> impl Iterator<Item = u64> + '_ {
        let list = &self.by_type[ty];
        let from = list.partition_point(|&id| self.node(id).time < since);
        list.range(from..)
            .copied()
            .take_while(move |&id| id < before)
    }

    fn add_value(&self, out: &mut Acc, g: &GroupPlan, id: u64, p: usize, inst: u64) {
        let n = self.node(id);
        if !n.matched.contains(p) {
            return;
        }
        if let Some(own) = n.own.iter().find(|o| o.plan == p) {
            out.add_assign(&own.vals[(inst - own.first_inst) as usize]);
            return;
        }
        if let Some(gl) = self.graphlets.get(&n.graphlet) {
            for part in &gl.parts {
                if let Some(col) = part.column(p, inst) {
                    let v = part
                        .table
                        .evaluate(&part.exprs[n.pos as usize], col)
                        .expect("snapshot values are complete");
                    out.add_assign(&v);
                    return;
                }
            }
        }
        panic!(
            "no stored value for plan `{}` at event {id} ({})",
            g.plans[p].query_id, g.type_names[n.ty]
        );
    }

    fn value_of(&self, g: &GroupPlan, id: u64, p: usize, inst: u64) -> Acc {
        let mut v = Acc::zero();
        self.add_value(&mut v, g, id, p, inst);
        v
    }

    /// Adds the contribution of events outside the current graphlet (ids
    /// below `before`) that may directly precede `event` in a trend of `p`.
    #[allow(clippy::too_many_arguments)]
    fn add_cross(
        &self,
        out: &mut Acc,
        g: &GroupPlan,
        p: usize,
        ty: TypeId,
        event: &Event,
        inst: u64,
        ctx: &Ctx,
        before: u64,
    ) {
        let plan = &g.plans[p];
        let since = plan.window.bounds(inst).0;
        for f in plan.template.pt(ty).iter() {
            match plan.edge_checks(f, ty) {
                None => out.add_assign(&ctx.tot[f]),
                Some(checks) => {
                    for id in self.ids_since(f, since, before) {
                        let n = self.node(id);
                        if n.matched.contains(p) && checks.iter().all(|c| c.holds(&n.event, event))
                        {
                            self.add_value(out, g, id, p, inst);
                        }
                    }
                }
            }
        }
    }
}

/// Per candidate plan and burst event: what blocks a shared expression.
#[derive(Debug, Clone, Default)]
struct Row {
    matched: bool,
    /// Every earlier predecessor outside the graphlet connects.
    cross_ok: bool,
    /// Earlier burst positions this plan matched but cannot connect from.
    fails: Vec<u32>,
}

#[derive(Debug, Clone, Copy)]
struct RowView<'a> {
    matched: bool,
    cross_ok: bool,
    fails: &'a [u32],
}

impl RowView<'_> {
    fn clean(&self) -> bool {
        self.matched && self.cross_ok && self.fails.is_empty()
    }
}

/// Rows of every candidate over one burst.
#[derive(Debug, Clone)]
struct Analysis {
    cands: Vec<usize>,
    first_node: u64,
    /// `None` for a plan without checks on edges into the burst type: its
    /// row is just the match bit.
    rows: Vec<Option<Vec<Row>>>,
    /// Per burst position: every candidate's row is clean.
    clean: Vec<bool>,
}

impl Analysis {
    fn row<'a>(&'a self, store: &Store, c: usize, i: usize) -> RowView<'a> {
        match &self.rows[c] {
            Some(rows) => {
                let r = &rows[i];
                RowView {
                    matched: r.matched,
                    cross_ok: r.cross_ok,
                    fails: &r.fails,
                }
            }
            None => RowView {
                matched: store
                    .node(self.first_node + i as u64)
                    .matched
                    .contains(self.cands[c]),
                cross_ok: true,
                fails: &[],
            },
        }
    }

    /// Per candidate: burst events at which it would need its own snapshot.
    fn introduced(&self, store: &Store) -> Vec<u64> {
        let dirty: Vec<usize> = (0..self.clean.len()).filter(|&i| !self.clean[i]).collect();
        (0..self.cands.len())
            .map(|c| {
                dirty
                    .iter()
                    .filter(|&&i| !self.row(store, c, i).clean())
                    .count() as u64
            })
            .collect()
    }
}

/// One group partition of the stream.
#[derive(Debug, Clone)]
pub struct PartitionEngine {
    /// Values of the partitioning attributes.
    pub key_values: BTreeMap<String, Value>,
    store: Store,
    ctxs: Vec<CtxRing>,
    buffer: BurstBuffer<Pending>,
    next_graphlet: u64,
    last_type: Option<TypeId>,
    run_len: u64,
    shared_state: BTreeMap<(TypeId, usize), bool>,
    bytes: usize,
}

fn materialize(table: &mut SnapshotTable, expr: &SnapshotExpr) -> SnapshotExpr {
    let vals = (0..table.columns())
        .map(|c| {
            table
                .evaluate(expr, c)
                .expect("snapshot values are complete")
        })
        .collect();
    SnapshotExpr::snapshot(table.insert(vals))
}

fn node_bytes(n: &Node) -> usize {
    64 + n.event.attrs.len() * 48
        + n.matched.approx_bytes()
        + n.own
            .iter()
            .map(|o| 32 + o.vals.iter().map(Acc::approx_bytes).sum::<usize>())
            .sum::<usize>()
}

impl PartitionEngine {
    pub fn new(g: &GroupPlan, key_values: BTreeMap<String, Value>) -> PartitionEngine {
        PartitionEngine {
            key_values,
            store: Store {
                by_type: alloc::vec![VecDeque::new(); g.ntypes],
                ..Store::default()
            },
            ctxs: alloc::vec![CtxRing::default(); g.plans.len()],
            buffer: BurstBuffer::new(),
            next_graphlet: 0,
            last_type: None,
            run_len: 0,
            shared_state: BTreeMap::new(),
            bytes: 0,
        }
    }

    /// Logical bytes of stored events and graphlet values.
    pub fn bytes(&self) -> usize {
        self.bytes
    }

    /// Buffers an event already routed to this partition; processes the
    /// burst it completes, if any.
    pub fn push(&mut self, g: &GroupPlan, item: Pending, env: &mut Env<'_>) {
        let pane = g.pane.pane_of(item.event.time);
        if let Some(burst) = self.buffer.push(item.ty, pane, item) {
            self.process_burst(g, burst, env);
        }
    }

    /// Moves to `pane`: finishes the open burst of an earlier pane, closes
    /// the window contexts that end before the pane and drops events no
    /// open window can still use.
    pub fn advance(&mut self, g: &GroupPlan, pane: u64, env: &mut Env<'_>) {
        if let Some(burst) = self.buffer.close_before(pane) {
            self.process_burst(g, burst, env);
        }
        let start = g.pane.start_of(pane);
        self.close_contexts(g, Some(start), env);
        self.purge(g, start);
    }

    /// End of stream: processes what is buffered and closes every context.
    pub fn finish(&mut self, g: &GroupPlan, env: &mut Env<'_>) {
        if let Some(burst) = self.buffer.flush() {
            self.process_burst(g, burst, env);
        }
        self.close_contexts(g, None, env);
    }

    fn close_contexts(&mut self, g: &GroupPlan, before: Option<u64>, env: &mut Env<'_>) {
        for p in 0..g.plans.len() {
            let window = g.plans[p].window;
            let mut done = Vec::new();
            let ring = &mut self.ctxs[p];
            while !ring.slots.is_empty() {
                let inst = ring.base;
                if before.is_some_and(|start| window.bounds(inst).1 > start) {
                    break;
                }
                let slot = ring.slots.pop_front().unwrap();
                ring.base += 1;
                if let Some(ctx) = slot {
                    done.push((inst, ctx));
                }
            }
            for (inst, ctx) in done {
                let mut partial = Partial {
                    count: ctx.result.count.clone(),
                    sum: ctx.result.sum(),
                    events: ctx.result.events(),
                    min: None,
                    max: None,
                };
                if g.plans[p].extreme.is_some() {
                    self.extremes(g, p, inst, &mut partial);
                }
                env.closed.push(Closed {
                    plan: p,
                    inst,
                    partial,
                    last_arrival: ctx.last_arrival,
                });
            }
        }
    }

    /// Values of the aggregated attribute over events that lie on some
    /// complete trend: a positive count and a path to an end-type event.
    fn extremes(&self, g: &GroupPlan, p: usize, inst: u64, partial: &mut Partial) {
        let plan = &g.plans[p];
        let ext = plan.extreme.as_ref().expect("extreme aggregate");
        let (s, e) = plan.window.bounds(inst);
        let nodes = &self.store.nodes;
        let lo = nodes.partition_point(|n| n.time < s);
        let hi = nodes.partition_point(|n| n.time < e);
        let mut seen = alloc::vec![false; g.ntypes];
        let mut alive: Vec<Vec<usize>> = alloc::vec![Vec::new(); g.ntypes];
        for idx in (lo..hi).rev() {
            let node = &nodes[idx];
            if !node.matched.contains(p) {
                continue;
            }
            let id = self.store.base + idx as u64;
            if self.store.value_of(g, id, p, inst).count.is_zero() {
                continue;
            }
            let ty = node.ty;
            let reaches_end = plan.template.is_end(ty)
                || plan
                    .template
                    .successors(ty)
                    .iter()
                    .any(|f| match plan.edge_checks(ty, f) {
                        None => seen[f],
                        Some(checks) => alive[f]
                            .iter()
                            .any(|&m| checks.iter().all(|c| c.holds(&node.event, &nodes[m].event))),
                    });
            if reaches_end {
                seen[ty] = true;
                alive[ty].push(idx);
                if ty == ext.ty {
                    if let Some(v) = node.event.attr(&ext.attr) {
                        partial.observe(v);
                    }
                }
            }
        }
    }

    fn purge(&mut self, g: &GroupPlan, pane_start: u64) {
        let store = &mut self.store;
        while let Some(n) = store.nodes.front() {
            if n.time + g.max_size > pane_start {
                break;
            }
            self.bytes -= n.bytes;
            store.nodes.pop_front();
            store.base += 1;
        }
        for list in &mut store.by_type {
            while list.front().is_some_and(|&id| id < store.base) {
                list.pop_front();
            }
        }
        while let Some(entry) = store.graphlets.first_entry() {
            let gl = entry.get();
            if gl.first_node + gl.len > store.base {
                break;
            }
            self.bytes -= gl.bytes;
            entry.remove();
        }
    }

    fn process_burst(&mut self, g: &GroupPlan, burst: Burst<Pending>, env: &mut Env<'_>) {
        let ty = burst.ty;
        let pane = burst.pane;
        let b = burst.items.len();
        if self.last_type == Some(ty) {
            self.run_len += b as u64;
        } else {
            self.run_len = b as u64;
        }
        self.last_type = Some(ty);

        let gid = self.next_graphlet;
        self.next_graphlet += 1;
        let first_node = self.store.next_id();
        let pane_start = g.pane.start_of(pane);

        let mut involved = PlanSet::new();
        for it in &burst.items {
            involved.union_with(&it.matched);
        }
        for p in involved.iter() {
            self.ctxs[p].ensure(g.plans[p].window.instances_at(pane_start), g.ntypes);
        }
        let mut last_arrival = Vec::new();
        let mut pending = involved.clone();
        for it in burst.items.iter().rev() {
            if pending.is_empty() {
                break;
            }
            for p in it.matched.iter() {
                if pending.contains(p) {
                    last_arrival.push((p, it.arrival));
                    pending.remove(p);
                }
            }
        }
        for (pos, it) in burst.items.into_iter().enumerate() {
            let id = self.store.next_id();
            self.store.by_type[ty].push_back(id);
            self.store.nodes.push_back(Node {
                time: it.event.time,
                ty,
                event: it.event,
                matched: it.matched,
                graphlet: gid,
                pos: pos as u32,
                own: Vec::new(),
                bytes: 0,
            });
        }
        env.stats.graphlets += 1;

        let mut sharing = PlanSet::new();
        let mut shared_sets = Vec::new();
        if env.policy.may_share() {
            for class in 0..g.classes.len() {
                let cands: Vec<usize> = g.kleene[ty][class]
                    .iter()
                    .copied()
                    .filter(|&p| involved.contains(p))
                    .collect();
                if cands.len() < 2 {
                    continue;
                }
                let analysis = self.analyze(g, ty, cands, first_node, b, pane_start);
                let introduced = analysis.introduced(&self.store);
                let t0 = env.clock.now_nanos();
                let profile = BurstProfile {
                    b: b as u64,
                    n: (self.store.nodes.len()) as u64,
                    g: self.run_len,
                    t: analysis
                        .cands
                        .iter()
                        .map(|&p| g.plans[p].template.types.len() as u64)
                        .max()
                        .unwrap_or(0),
                    p: analysis
                        .cands
                        .iter()
                        .map(|&p| g.plans[p].template.max_predecessors() as u64)
                        .max()
                        .unwrap_or(0),
                    s_p: 1,
                    introduced,
                };
                let choice = env.policy.choose(&profile);
                let now_shared = choice.shares();
                let was_shared = self
                    .shared_state
                    .insert((ty, class), now_shared)
                    .unwrap_or(false);
                let action = Action::between(was_shared, now_shared);
                let ai = Action::ALL.iter().position(|a| *a == action).unwrap();
                env.stats.decisions[ai] += 1;
                if env.config.log_decisions {
                    env.decisions.push(DecisionRecord {
                        pane,
                        burst_type: g.type_names[ty].clone(),
                        b: profile.b,
                        n: profile.n,
                        s_c: choice.s_c,
                        s_p: profile.s_p,
                        shared_cost: choice.shared_cost,
                        nonshared_cost: choice.nonshared_cost,
                        action,
                        shared_set: choice
                            .shared
                            .iter()
                            .map(|&i| g.plans[analysis.cands[i]].query_id.clone())
                            .collect(),
                    });
                }
                env.stats.decision_nanos += env.clock.now_nanos().saturating_sub(t0);
                if now_shared {
                    for &i in &choice.shared {
                        sharing.insert(analysis.cands[i]);
                    }
                    shared_sets.push((class, choice.shared, analysis));
                }
            }
        }

        let solo: Vec<usize> = involved.iter().filter(|&p| !sharing.contains(p)).collect();
        if !solo.is_empty() {
            for i in 0..b as u64 {
                for &p in &solo {
                    if self.store.node(first_node + i).matched.contains(p) {
                        self.step(g, p, first_node + i, pane_start);
                    }
                }
            }
        }

        let mut parts = Vec::new();
        for (class, members, analysis) in shared_sets {
            if let Some(part) =
                self.run_shared(g, ty, class, &analysis, &members, b, pane_start, env)
            {
                parts.push(part);
            }
        }

        for (p, arrival) in last_arrival {
            let plan = &g.plans[p];
            for inst in plan.window.instances_at(pane_start) {
                let ctx = self.ctxs[p].get_mut(inst);
                ctx.last_arrival = ctx.last_arrival.max(arrival);
            }
        }
        for i in 0..b {
            let idx = (first_node - self.store.base) as usize + i;
            let n = &mut self.store.nodes[idx];
            n.bytes = node_bytes(n);
            self.bytes += n.bytes;
        }
        if !sharing.is_empty() {
            env.stats.shared_graphlets += 1;
        }
        if !parts.is_empty() {
            let bytes = parts.iter().map(Part::approx_bytes).sum::<usize>() + 48;
            self.bytes += bytes;
            self.store.graphlets.insert(
                gid,
                Graphlet {
                    first_node,
                    len: b as u64,
                    parts,
                    bytes,
                },
            );
        }
    }

    /// Per candidate plan and burst position: match, predecessor checks
    /// against earlier graphlets, and failing in-burst edges.
    fn analyze(
        &self,
        g: &GroupPlan,
        ty: TypeId,
        cands: Vec<usize>,
        first_node: u64,
        b: usize,
        pane_start: u64,
    ) -> Analysis {
        let store = &self.store;
        let all: PlanSet = cands.iter().copied().collect();
        let mut clean: Vec<bool> = (0..b)
            .map(|i| store.node(first_node + i as u64).matched.contains_all(&all))
            .collect();
        let rows = cands
            .iter()
            .map(|&p| {
                let plan = &g.plans[p];
                let into: Vec<_> = plan
                    .template
                    .pt(ty)
                    .iter()
                    .filter_map(|f| plan.edge_checks(f, ty).map(|c| (f, c)))
                    .collect();
                let self_checks = plan.edge_checks(ty, ty);
                if into.is_empty() && self_checks.is_none() {
                    return None;
                }
                let earliest = plan
                    .window
                    .bounds(plan.window.instances_at(pane_start).start)
                    .0;
                let rows: Vec<Row> = (0..b)
                    .map(|i| {
                        let node = store.node(first_node + i as u64);
                        if !node.matched.contains(p) {
                            return Row::default();
                        }
                        let cross_ok = into.iter().all(|(f, checks)| {
                            store.ids_since(*f, earliest, first_node).all(|id| {
                                let n = store.node(id);
                                !n.matched.contains(p)
                                    || checks.iter().all(|c| c.holds(&n.event, &node.event))
                            })
                        });
                        let fails = match self_checks {
                            None => Vec::new(),
                            Some(checks) => (0..i)
                                .filter(|&j| {
                                    let nj = store.node(first_node + j as u64);
                                    nj.matched.contains(p)
                                        && !checks.iter().all(|c| c.holds(&nj.event, &node.event))
                                })
                                .map(|j| j as u32)
                                .collect(),
                        };
                        Row {
                            matched: true,
                            cross_ok,
                            fails,
                        }
                    })
                    .collect();
                for (c, r) in clean.iter_mut().zip(&rows) {
                    *c &= r.matched && r.cross_ok && r.fails.is_empty();
                }
                Some(rows)
            })
            .collect();
        Analysis {
            cands,
            first_node,
            rows,
            clean,
        }
    }

    /// Non-shared propagation of one event for one plan in every window
    /// instance covering its pane.
    fn step(&mut self, g: &GroupPlan, p: usize, id: u64, pane_start: u64) {
        let plan = &g.plans[p];
        let node = self.store.node(id);
        let ty = node.ty;
        let weight = g.weight(plan.class, ty, &node.event);
        let insts = plan.window.instances_at(pane_start);
        let start = plan.template.is_start(ty);
        let end = plan.template.is_end(ty);
        let keep = plan.needs_values.contains(ty);
        let mut vals = Vec::new();
        for inst in insts.clone() {
            let mut v = if start { Acc::one() } else { Acc::zero() };
            self.store.add_cross(
                &mut v,
                g,
                p,
                ty,
                &node.event,
                inst,
                self.ctxs[p].get(inst),
                id,
            );
            v.apply(&weight);
            let ctx = self.ctxs[p].get_mut(inst);
            ctx.tot[ty].add_assign(&v);
            if end {
                ctx.result.add_assign(&v);
            }
            if keep {
                vals.push(v);
            }
        }
        if keep {
            let idx = (id - self.store.base) as usize;
            self.store.nodes[idx].own.push(Own {
                plan: p,
                first_inst: insts.start,
                vals,
            });
        }
    }

    /// Propagates one burst through a shared expression per event. Returns
    /// the expressions when some member must read per-event values later.
    #[allow(clippy::too_many_arguments)]
    fn run_shared(
        &mut self,
        g: &GroupPlan,
        ty: TypeId,
        class: usize,
        analysis: &Analysis,
        member_idx: &[usize],
        b: usize,
        pane_start: u64,
        env: &mut Env<'_>,
    ) -> Option<Part> {
        let cap = env.config.expr_cap;
        let first_node = analysis.first_node;
        let members: Vec<usize> = member_idx.iter().map(|&c| analysis.cands[c]).collect();
        let keep = members
            .iter()
            .any(|&p| g.plans[p].needs_values.contains(ty));
        let self_checks = members
            .iter()
            .any(|&p| g.plans[p].edge_checks(ty, ty).is_some());
        let mut cols = Vec::with_capacity(members.len());
        let mut ncols = 0;
        for &p in &members {
            let r = g.plans[p].window.instances_at(pane_start);
            let n = (r.end - r.start) as usize;
            cols.push(ColGroup {
                plan: p,
                start: ncols,
                first_inst: r.start,
                n,
            });
            ncols += n;
        }
        let starts: Vec<bool> = members
            .iter()
            .map(|&p| g.plans[p].template.is_start(ty))
            .collect();
        let uniform_start = starts.iter().all(|&s| s == starts[0]);

        let mut table = SnapshotTable::new(ncols);
        let mut xv = Vec::with_capacity(ncols);
        for (cg, &start) in cols.iter().zip(&starts) {
            let pt = g.plans[cg.plan].template.pt(ty);
            for k in 0..cg.n {
                let ctx = self.ctxs[cg.plan].get(cg.first_inst + k as u64);
                let mut v = if start && !uniform_start {
                    Acc::one()
                } else {
                    Acc::zero()
                };
                for f in pt.iter() {
                    v.add_assign(&ctx.tot[f]);
                }
                xv.push(v);
            }
        }
        let x = table.insert(xv);
        env.stats.snapshots += 1;
        let mut seed = SnapshotExpr::snapshot(x);
        if uniform_start && starts[0] {
            seed.add_assign(&SnapshotExpr::constant(Acc::one()));
        }

        let store = &self.store;
        let row = |m: usize, i: usize| analysis.row(store, member_idx[m], i);
        let mut total = SnapshotExpr::zero();
        let mut exprs: Vec<SnapshotExpr> = Vec::new();
        for i in 0..b {
            let id = first_node + i as u64;
            let node = store.node(id);
            let weight = g.weight(class, ty, &node.event);
            let exclusions = if analysis.clean[i] {
                Some(Vec::new())
            } else {
                shared_exclusions(members.len(), &row, i)
            };
            let expr = match exclusions {
                Some(excluded) => {
                    let mut e = seed.clone();
                    if excluded.is_empty() {
                        e.add_assign(&total);
                    } else {
                        for (j, ej) in exprs.iter().enumerate() {
                            if excluded.binary_search(&(j as u32)).is_err() {
                                e.add_assign(ej);
                            }
                        }
                    }
                    e.apply(&weight);
                    e
                }
                None => {
                    let mut vals = Vec::with_capacity(ncols);
                    for (m, (cg, &start)) in cols.iter().zip(&starts).enumerate() {
                        let r = row(m, i);
                        for k in 0..cg.n {
                            if !r.matched {
                                vals.push(Acc::zero());
                                continue;
                            }
                            let col = cg.start + k;
                            let inst = cg.first_inst + k as u64;
                            let mut v = if start { Acc::one() } else { Acc::zero() };
                            store.add_cross(
                                &mut v,
                                g,
                                cg.plan,
                                ty,
                                &node.event,
                                inst,
                                self.ctxs[cg.plan].get(inst),
                                first_node,
                            );
                            if r.fails.is_empty() {
                                v.add_assign(
                                    &table
                                        .evaluate(&total, col)
                                        .expect("snapshot values are complete"),
                                );
                            } else {
                                for (j, ej) in exprs.iter().enumerate() {
                                    if r.fails.binary_search(&(j as u32)).is_err() {
                                        v.add_assign(
                                            &table
                                                .evaluate(ej, col)
                                                .expect("snapshot values are complete"),
                                        );
                                    }
                                }
                            }
                            v.apply(&weight);
                            vals.push(v);
                        }
                    }
                    env.stats.snapshots += 1;
                    SnapshotExpr::snapshot(table.insert(vals))
                }
            };
            let expr = if expr.len() > cap {
                env.stats.snapshots += 1;
                materialize(&mut table, &expr)
            } else {
                expr
            };
            total.add_assign(&expr);
            if total.len() > cap {
                env.stats.snapshots += 1;
                total = materialize(&mut table, &total);
            }
            if keep || self_checks || env.config.trace {
                exprs.push(expr);
            }
        }

        if env.config.trace {
            env.traces.push(SharedTrace {
                burst_type: g.type_names[ty].clone(),
                times: (0..b as u64)
                    .map(|i| store.node(first_node + i).time)
                    .collect(),
                columns: cols
                    .iter()
                    .flat_map(|cg| {
                        (0..cg.n as u64)
                            .map(|k| (g.plans[cg.plan].query_id.clone(), cg.first_inst + k))
                    })
                    .collect(),
                table: table.clone(),
                exprs: exprs.clone(),
            });
        }
        for cg in &cols {
            let end = g.plans[cg.plan].template.is_end(ty);
            for k in 0..cg.n {
                let v = table
                    .evaluate(&total, cg.start + k)
                    .expect("snapshot values are complete");
                let ctx = self.ctxs[cg.plan].get_mut(cg.first_inst + k as u64);
                if end {
                    ctx.result.add_assign(&v);
                }
                ctx.tot[ty].add_assign(&v);
            }
        }
        keep.then_some(Part { cols, table, exprs })
    }
}

/// For burst position `i`, the positions every member skips when the event
/// can ride a shared expression; `None` when the members disagree and the
/// event needs its own snapshot.
fn shared_exclusions<'a>(
    members: usize,
    row: &impl Fn(usize, usize) -> RowView<'a>,
    i: usize,
) -> Option<Vec<u32>> {
    let here: Vec<RowView<'a>> = (0..members).map(|m| row(m, i)).collect();
    if !here.iter().all(|r| r.matched && r.cross_ok) {
        return None;
    }
    let mut candidates: Vec<u32> = here.iter().flat_map(|r| r.fails.iter().copied()).collect();
    if candidates.is_empty() {
        return Some(candidates);
    }
    candidates.sort_unstable();
    candidates.dedup();
    let mut excluded = Vec::new();
    for j in candidates {
        let (mut fail, mut pass) = (false, false);
        for (m, r) in here.iter().enumerate() {
            if !row(m, j as usize).matched {
                continue;
            }
            if r.fails.binary_search(&j).is_ok() {
                fail = true;
            } else {
                pass = true;
            }
        }
        if fail && pass {
            return None;
        }
        if fail {
            excluded.push(j);
        }
    }
    Some(excluded)
}
