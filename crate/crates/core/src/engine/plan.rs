//! Compiled execution plans.
//!
//! Every query becomes one plan, or two for a top-level `AND`. Plans are
//! grouped by their partitioning attributes; each group runs on its own
//! partitioned stream.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_rational::BigRational;

use super::acc::Weight;
use crate::event::{Event, Schema, TypeId, Value};
use crate::partition::{pane_config, PaneConfig};
use crate::query::sharing::share_classes;
use crate::query::{
    Aggregate, CmpOp, Predicate, Query, QueryError, ShareClass, Template, TypeSet, Window,
};

/// Dense set of plan indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PlanSet {
    words: Vec<u64>,
}

impl PlanSet {
    pub fn new() -> PlanSet {
        PlanSet::default()
    }

    pub fn insert(&mut self, i: usize) {
        let w = i / 64;
        if self.words.len() <= w {
            self.words.resize(w + 1, 0);
        }
        self.words[w] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words
            .get(i / 64)
            .is_some_and(|w| w & (1 << (i % 64)) != 0)
    }

    pub fn remove(&mut self, i: usize) {
        if let Some(w) = self.words.get_mut(i / 64) {
            *w &= !(1 << (i % 64));
        }
    }

    /// Whether `other` is a subset of `self`.
    pub fn contains_all(&self, other: &PlanSet) -> bool {
        other
            .words
            .iter()
            .enumerate()
            .all(|(i, &w)| w & !self.words.get(i).copied().unwrap_or(0) == 0)
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn union_with(&mut self, other: &PlanSet) {
        if self.words.len() < other.words.len() {
            self.words.resize(other.words.len(), 0);
        }
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            core::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + b)
            })
        })
    }

    pub fn approx_bytes(&self) -> usize {
        24 + 8 * self.words.len()
    }
}

impl FromIterator<usize> for PlanSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> PlanSet {
        let mut s = PlanSet::new();
        for i in iter {
            s.insert(i);
        }
        s
    }
}

/// `left.a op right.b` between consecutive trend events.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCheck {
    pub left_attr: String,
    pub op: CmpOp,
    pub right_attr: String,
}

impl EdgeCheck {
    pub fn holds(&self, left: &Event, right: &Event) -> bool {
        match (left.attr(&self.left_attr), right.attr(&self.right_attr)) {
            (Some(l), Some(r)) => self.op.holds(l, r),
            _ => false,
        }
    }
}

/// What a class adds per event of its weighted type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Weighting {
    Plain,
    Weighted { ty: TypeId, attr: Option<String> },
}

impl Weighting {
    pub fn weight(&self, ty: TypeId, event: &Event) -> Weight {
        match self {
            Weighting::Weighted { ty: wt, attr } if *wt == ty => Weight {
                value: attr
                    .as_ref()
                    .and_then(|a| event.attr(a))
                    .and_then(to_rational),
                delta: true,
            },
            _ => Weight::IDENTITY,
        }
    }
}

pub(crate) fn to_rational(v: &Value) -> Option<BigRational> {
    match v {
        Value::Int(i) => Some(BigRational::from_integer(BigInt::from(*i))),
        Value::Real(r) => BigRational::from_float(*r),
        Value::Text(_) => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extreme {
    pub ty: TypeId,
    pub attr: String,
}

#[derive(Debug, Clone)]
pub struct Plan {
    /// Workload index of the query.
    pub query: usize,
    pub query_id: String,
    pub conjunct: usize,
    pub template: Template,
    pub window: Window,
    pub class: usize,
    pub extreme: Option<Extreme>,
    /// Types whose per-event values must stay readable after their graphlet
    /// closes.
    pub needs_values: TypeSet,
    required: Option<(TypeId, String)>,
    locals: Vec<(TypeId, String, CmpOp, Value)>,
    edges: BTreeMap<(TypeId, TypeId), Vec<EdgeCheck>>,
}

impl Plan {
    pub fn matches(&self, ty: TypeId, event: &Event) -> bool {
        if !self.template.types.contains(ty) {
            return false;
        }
        if let Some((rt, attr)) = &self.required {
            if *rt == ty && event.attr(attr).is_none() {
                return false;
            }
        }
        self.locals
            .iter()
            .filter(|(t, ..)| *t == ty)
            .all(|(_, attr, op, value)| event.attr(attr).is_some_and(|v| op.holds(v, value)))
    }

    fn checks_attrs(&self, ty: TypeId) -> bool {
        self.required.as_ref().is_some_and(|(rt, _)| *rt == ty)
            || self.locals.iter().any(|(t, ..)| *t == ty)
    }

    /// Checks on the edge `from -> to`, if it carries any.
    pub fn edge_checks(&self, from: TypeId, to: TypeId) -> Option<&[EdgeCheck]> {
        self.edges.get(&(from, to)).map(Vec::as_slice)
    }

    pub fn edge_ok(&self, from: TypeId, left: &Event, to: TypeId, right: &Event) -> bool {
        self.edge_checks(from, to)
            .is_none_or(|cs| cs.iter().all(|c| c.holds(left, right)))
    }

    pub fn has_checks_into(&self, to: TypeId) -> bool {
        self.template
            .pt(to)
            .iter()
            .any(|f| self.edges.contains_key(&(f, to)))
    }
}

/// Plans that run over the same partitioned stream.
#[derive(Debug, Clone)]
pub struct GroupPlan {
    pub attrs: Vec<String>,
    pub plans: Vec<Plan>,
    pub classes: Vec<ShareClass>,
    pub weightings: Vec<Weighting>,
    pub pane: PaneConfig,
    pub max_size: u64,
    pub ntypes: usize,
    pub type_names: Vec<String>,
    /// Per type and class: plans where the type carries a Kleene loop.
    pub kleene: Vec<Vec<Vec<usize>>>,
    /// Per type: plans that match every event of the type, and plans that
    /// check its attributes first.
    by_type: Vec<(PlanSet, Vec<usize>)>,
}

impl GroupPlan {
    pub fn weight(&self, class: usize, ty: TypeId, event: &Event) -> Weight {
        self.weightings[class].weight(ty, event)
    }

    pub fn matched(&self, ty: TypeId, event: &Event) -> PlanSet {
        let (always, checked) = &self.by_type[ty];
        let mut set = always.clone();
        for &p in checked {
            if self.plans[p].matches(ty, event) {
                set.insert(p);
            }
        }
        set
    }
}

fn tid(schema: &Schema, name: &str) -> Result<TypeId, QueryError> {
    schema
        .type_id(name)
        .ok_or_else(|| QueryError::UnknownType(name.into()))
}

fn compile_plan(
    q: &Query,
    qi: usize,
    conjunct: usize,
    pattern: &crate::query::Pattern,
    class: usize,
    schema: &Schema,
) -> Result<Plan, QueryError> {
    let template = Template::from_pattern(pattern, schema)?;
    let mut locals = Vec::new();
    let mut edges: BTreeMap<(TypeId, TypeId), Vec<EdgeCheck>> = BTreeMap::new();
    for pred in &q.predicates {
        match pred {
            Predicate::Local {
                ty,
                attr,
                op,
                value,
            } => {
                let t = tid(schema, ty)?;
                if template.types.contains(t) {
                    locals.push((t, attr.clone(), *op, value.clone()));
                }
            }
            Predicate::Adjacent {
                left_ty,
                left_attr,
                op,
                right_ty,
                right_attr,
            } => {
                let (l, r) = (tid(schema, left_ty)?, tid(schema, right_ty)?);
                if template.has_edge(l, r) {
                    edges.entry((l, r)).or_default().push(EdgeCheck {
                        left_attr: left_attr.clone(),
                        op: *op,
                        right_attr: right_attr.clone(),
                    });
                }
            }
            Predicate::Equivalence(_) => {}
        }
    }
    let required = match (q.aggregate.target_type(), q.aggregate.attribute()) {
        (Some(t), Some(a)) => Some((tid(schema, t)?, String::from(a))),
        _ => None,
    };
    let extreme = match &q.aggregate {
        Aggregate::Min(t, a) | Aggregate::Max(t, a) => Some(Extreme {
            ty: tid(schema, t)?,
            attr: a.clone(),
        }),
        _ => None,
    };
    let mut needs_values = TypeSet::EMPTY;
    if extreme.is_some() {
        needs_values = template.types;
    }
    for &(from, _) in edges.keys() {
        needs_values.insert(from);
    }
    Ok(Plan {
        query: qi,
        query_id: q.id.clone(),
        conjunct,
        template,
        window: q.window,
        class,
        extreme,
        needs_values,
        required,
        locals,
        edges,
    })
}

/// Validates the workload and compiles it into plan groups. Returns the
/// groups and, per query, its `(group, plan)` indices.
#[allow(clippy::type_complexity)]
pub fn compile_workload(
    workload: &[Query],
    schema: &Schema,
) -> Result<(Vec<GroupPlan>, Vec<Vec<(usize, usize)>>), QueryError> {
    for q in workload {
        q.validate(schema)?;
    }
    let mut by_attrs: BTreeMap<Vec<String>, Vec<usize>> = BTreeMap::new();
    for (i, q) in workload.iter().enumerate() {
        by_attrs.entry(q.partition_attrs()).or_default().push(i);
    }
    let mut groups = Vec::new();
    let mut placement = alloc::vec![Vec::new(); workload.len()];
    for (attrs, members) in by_attrs {
        let queries: Vec<&Query> = members.iter().map(|&i| &workload[i]).collect();
        let classes_per_query = share_classes(&queries);
        let mut classes: Vec<ShareClass> = Vec::new();
        let mut plans = Vec::new();
        for ((&qi, q), class) in members.iter().zip(&queries).zip(&classes_per_query) {
            let ci = match classes.iter().position(|c| c == class) {
                Some(ci) => ci,
                None => {
                    classes.push(class.clone());
                    classes.len() - 1
                }
            };
            for (conjunct, pattern) in q.pattern.conjuncts().into_iter().enumerate() {
                placement[qi].push((groups.len(), plans.len()));
                plans.push(compile_plan(q, qi, conjunct, pattern, ci, schema)?);
            }
        }
        let weightings = classes
            .iter()
            .map(|c| match c {
                ShareClass::Weighted { ty, attr } => Ok(Weighting::Weighted {
                    ty: tid(schema, ty)?,
                    attr: attr.clone(),
                }),
                _ => Ok(Weighting::Plain),
            })
            .collect::<Result<Vec<_>, QueryError>>()?;
        let windows: Vec<Window> = plans.iter().map(|p: &Plan| p.window).collect();
        let ntypes = schema.len();
        let mut kleene = alloc::vec![alloc::vec![Vec::new(); classes.len()]; ntypes];
        for (pi, p) in plans.iter().enumerate() {
            for t in p.template.types.iter().filter(|&t| p.template.is_kleene(t)) {
                kleene[t][p.class].push(pi);
            }
        }
        let mut by_type = alloc::vec![(PlanSet::new(), Vec::new()); ntypes];
        for (pi, p) in plans.iter().enumerate() {
            for t in p.template.types.iter() {
                if p.checks_attrs(t) {
                    by_type[t].1.push(pi);
                } else {
                    by_type[t].0.insert(pi);
                }
            }
        }
        groups.push(GroupPlan {
            attrs,
            by_type,
            pane: pane_config(&windows),
            max_size: windows.iter().map(|w| w.size).max().unwrap_or(1),
            plans,
            classes,
            weightings,
            ntypes,
            type_names: schema.types().iter().map(|t| t.name.clone()).collect(),
            kleene,
        });
    }
    Ok((groups, placement))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::AttrKind;
    use crate::query::parse_query_file;

    #[test]
    fn plan_sets() {
        let s: PlanSet = [3usize, 70, 3].into_iter().collect();
        assert!(s.contains(70) && s.contains(3) && !s.contains(4));
        assert_eq!(s.iter().collect::<Vec<_>>(), alloc::vec![3, 70]);
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn conjunction_becomes_two_plans() {
        let schema =
            Schema::from_slices(&[("A", &[]), ("B", &[("v", AttrKind::Integer)]), ("C", &[])])
                .unwrap();
        let text = "QUERY q1 RETURN COUNT(*) PATTERN AND(A+, SEQ(C, B+)) WHERE B.v < NEXT(B).v WITHIN 10 SLIDE 5\n\
                    QUERY q2 RETURN SUM(B.v) PATTERN SEQ(A, B+) WITHIN 4 SLIDE 2";
        let w = parse_query_file(text, &schema).unwrap();
        let (groups, placement) = compile_workload(&w, &schema).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(placement[0].len(), 2);
        let g = &groups[0];
        assert_eq!(g.pane.len, 1);
        let b = schema.type_id("B").unwrap();
        let second = &g.plans[placement[0][1].1];
        assert!(second.edge_checks(b, b).is_some());
        assert!(second.needs_values.contains(b));
        assert_eq!(g.kleene[b].iter().map(Vec::len).sum::<usize>(), 2);
        let ev = Event::new(1, "B");
        assert!(g.plans[placement[0][1].1].matches(b, &ev));
        assert!(!g.plans[placement[1][0].1].matches(b, &ev));
    }
}
