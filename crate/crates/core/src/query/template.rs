//! Automaton templates over event types.
//!
//! Patterns never repeat an event type, so a query's template has one state
//! per type and is fully described by its start types, end types and the
//! type-level transitions `E' -> E` ("an `E'` event may directly precede an
//! `E` event in a trend").

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::{Pattern, Query, QueryError};
use crate::event::{Schema, TypeId};

/// Set of event type ids as a bit mask.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeSet(pub u64);

impl TypeSet {
    pub const EMPTY: TypeSet = TypeSet(0);

    pub fn single(id: TypeId) -> TypeSet {
        TypeSet(1 << id)
    }

    pub fn contains(self, id: TypeId) -> bool {
        id < 64 && self.0 & (1 << id) != 0
    }

    pub fn insert(&mut self, id: TypeId) {
        self.0 |= 1 << id;
    }

    pub fn union(self, other: TypeSet) -> TypeSet {
        TypeSet(self.0 | other.0)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = TypeId> {
        let mut bits = self.0;
        core::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let id = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            Some(id)
        })
    }
}

impl fmt::Debug for TypeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<TypeId> for TypeSet {
    fn from_iter<I: IntoIterator<Item = TypeId>>(iter: I) -> TypeSet {
        let mut s = TypeSet::EMPTY;
        for id in iter {
            s.insert(id);
        }
        s
    }
}

/// One query's template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub types: TypeSet,
    pub start: TypeSet,
    pub end: TypeSet,
    pred: Vec<TypeSet>,
    succ: Vec<TypeSet>,
}

fn glushkov(
    p: &Pattern,
    schema: &Schema,
    edges: &mut Vec<(TypeId, TypeId)>,
) -> Result<(TypeSet, TypeSet), QueryError> {
    Ok(match p {
        Pattern::Atom(name) => {
            let id = schema
                .type_id(name)
                .ok_or_else(|| QueryError::UnknownType(name.clone()))?;
            (TypeSet::single(id), TypeSet::single(id))
        }
        Pattern::Kleene(inner) => {
            let (first, last) = glushkov(inner, schema, edges)?;
            for l in last.iter() {
                for f in first.iter() {
                    edges.push((l, f));
                }
            }
            (first, last)
        }
        Pattern::Seq(parts) => {
            let mut first = None;
            let mut prev_last: Option<TypeSet> = None;
            for part in parts {
                let (f, l) = glushkov(part, schema, edges)?;
                if let Some(pl) = prev_last {
                    for a in pl.iter() {
                        for b in f.iter() {
                            edges.push((a, b));
                        }
                    }
                }
                first.get_or_insert(f);
                prev_last = Some(l);
            }
            (first.unwrap_or_default(), prev_last.unwrap_or_default())
        }
        Pattern::Or(a, b) | Pattern::And(a, b) => {
            let (fa, la) = glushkov(a, schema, edges)?;
            let (fb, lb) = glushkov(b, schema, edges)?;
            (fa.union(fb), la.union(lb))
        }
    })
}

impl Template {
    fn empty(ntypes: usize) -> Template {
        Template {
            types: TypeSet::EMPTY,
            start: TypeSet::EMPTY,
            end: TypeSet::EMPTY,
            pred: alloc::vec![TypeSet::EMPTY; ntypes],
            succ: alloc::vec![TypeSet::EMPTY; ntypes],
        }
    }

    /// Template of a pattern without top-level conjunction semantics; an
    /// `AND` is laid out like `OR` (the union of both operands' templates).
    pub fn from_pattern(p: &Pattern, schema: &Schema) -> Result<Template, QueryError> {
        let mut edges = Vec::new();
        let (first, last) = glushkov(p, schema, &mut edges)?;
        let mut t = Template::empty(schema.len());
        t.start = first;
        t.end = last;
        for name in p.leaves() {
            if let Some(id) = schema.type_id(name) {
                t.types.insert(id);
            }
        }
        for (a, b) in edges {
            t.add_edge(a, b);
        }
        Ok(t)
    }

    pub fn for_query(q: &Query, schema: &Schema) -> Result<Template, QueryError> {
        Template::from_pattern(&q.pattern, schema)
    }

    fn add_edge(&mut self, from: TypeId, to: TypeId) {
        self.pred[to].insert(from);
        self.succ[from].insert(to);
    }

    /// Predecessor types `pt(E)`.
    pub fn pt(&self, ty: TypeId) -> TypeSet {
        self.pred.get(ty).copied().unwrap_or_default()
    }

    pub fn successors(&self, ty: TypeId) -> TypeSet {
        self.succ.get(ty).copied().unwrap_or_default()
    }

    pub fn has_edge(&self, from: TypeId, to: TypeId) -> bool {
        self.pt(to).contains(from)
    }

    /// `E` carries a self loop, i.e. occurs under a Kleene plus.
    pub fn is_kleene(&self, ty: TypeId) -> bool {
        self.has_edge(ty, ty)
    }

    pub fn is_start(&self, ty: TypeId) -> bool {
        self.start.contains(ty)
    }

    pub fn is_end(&self, ty: TypeId) -> bool {
        self.end.contains(ty)
    }

    pub fn edges(&self) -> Vec<(TypeId, TypeId)> {
        let mut out = Vec::new();
        for (to, from) in self.pred.iter().enumerate() {
            for f in from.iter() {
                out.push((f, to));
            }
        }
        out.sort_unstable();
        out
    }

    /// Largest number of predecessor types of any state.
    pub fn max_predecessors(&self) -> usize {
        self.types
            .iter()
            .map(|t| self.pt(t).len())
            .max()
            .unwrap_or(0)
    }
}

/// The workload's templates merged: one state per event type, transitions
/// labelled with the queries (by workload index) they hold for.
#[derive(Debug, Clone)]
pub struct MergedTemplate {
    pub states: TypeSet,
    transitions: BTreeMap<(TypeId, TypeId), BTreeSet<usize>>,
    per_query: Vec<Template>,
    ids: Vec<String>,
    ntypes: usize,
}

pub fn build_merged_template(
    workload: &[Query],
    schema: &Schema,
) -> Result<MergedTemplate, QueryError> {
    let mut merged = MergedTemplate {
        states: TypeSet::EMPTY,
        transitions: BTreeMap::new(),
        per_query: Vec::new(),
        ids: Vec::new(),
        ntypes: schema.len(),
    };
    for (qi, q) in workload.iter().enumerate() {
        let t = Template::for_query(q, schema)?;
        merged.states = merged.states.union(t.types);
        for edge in t.edges() {
            merged.transitions.entry(edge).or_default().insert(qi);
        }
        merged.per_query.push(t);
        merged.ids.push(q.id.clone());
    }
    Ok(merged)
}

impl MergedTemplate {
    pub fn query_index(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|i| i == id)
    }

    pub fn label(&self, from: TypeId, to: TypeId) -> Option<&BTreeSet<usize>> {
        self.transitions.get(&(from, to))
    }

    pub fn transitions(&self) -> impl Iterator<Item = (&(TypeId, TypeId), &BTreeSet<usize>)> {
        self.transitions.iter()
    }

    pub fn pt(&self, ty: TypeId, q: usize) -> TypeSet {
        self.transitions
            .iter()
            .filter(|((_, to), label)| *to == ty && label.contains(&q))
            .map(|((from, _), _)| *from)
            .collect()
    }

    pub fn start(&self, q: usize) -> TypeSet {
        self.per_query[q].start
    }

    pub fn end(&self, q: usize) -> TypeSet {
        self.per_query[q].end
    }

    /// Keeps only the transitions labelled with `q`.
    pub fn restrict(&self, q: usize) -> Template {
        let mut t = Template::empty(self.ntypes);
        let own = &self.per_query[q];
        t.types = own.types;
        t.start = own.start;
        t.end = own.end;
        for ((from, to), label) in &self.transitions {
            if label.contains(&q) {
                t.add_edge(*from, *to);
            }
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::AttrKind;
    use crate::query::parse_query;

    fn schema() -> Schema {
        Schema::from_slices(&[("A", &[]), ("B", &[("x", AttrKind::Integer)]), ("C", &[])]).unwrap()
    }

    fn q(id: &str, pattern: &str) -> Query {
        let mut q = parse_query(
            &alloc::format!("RETURN COUNT(*) PATTERN {pattern} WITHIN 10 SLIDE 10"),
            &schema(),
        )
        .unwrap();
        q.id = id.into();
        q
    }

    const A: TypeId = 0;
    const B: TypeId = 1;
    const C: TypeId = 2;

    #[test]
    fn merged_seq_kleene() {
        let s = schema();
        let m = build_merged_template(&[q("q1", "SEQ(A,B+)"), q("q2", "SEQ(C,B+)")], &s).unwrap();
        let both: BTreeSet<usize> = [0, 1].into_iter().collect();
        assert_eq!(m.label(B, B), Some(&both));
        assert_eq!(m.pt(B, 0), [A, B].into_iter().collect());
        assert_eq!(m.pt(B, 1), [C, B].into_iter().collect());
        assert_eq!(m.start(0), TypeSet::single(A));
        assert_eq!(m.end(0), TypeSet::single(B));
    }

    #[test]
    fn merged_nested_kleene() {
        let s = schema();
        let m =
            build_merged_template(&[q("q1", "(SEQ(A,B+))+"), q("q2", "(SEQ(C,B+))+")], &s).unwrap();
        assert_eq!(m.pt(A, 0), TypeSet::single(B));
        assert_eq!(m.pt(C, 1), TypeSet::single(B));
        assert_eq!(m.pt(B, 0), [A, B].into_iter().collect());
    }

    #[test]
    fn single_kleene_type() {
        let s = schema();
        let m = build_merged_template(&[q("q", "B+")], &s).unwrap();
        assert_eq!(m.states, TypeSet::single(B));
        assert_eq!(m.label(B, B).map(|l| l.len()), Some(1));
        assert_eq!(m.start(0), TypeSet::single(B));
        assert_eq!(m.end(0), TypeSet::single(B));
    }

    #[test]
    fn restriction_reproduces_query_template() {
        let s = schema();
        let w = [
            q("q1", "(SEQ(A,B+))+"),
            q("q2", "SEQ(C,B+)"),
            q("q3", "OR(A+, SEQ(C,B))"),
        ];
        let m = build_merged_template(&w, &s).unwrap();
        for (i, query) in w.iter().enumerate() {
            assert_eq!(m.restrict(i), Template::for_query(query, &s).unwrap());
        }
    }

    #[test]
    fn typeset_iteration() {
        let s: TypeSet = [5, 0, 63].into_iter().collect();
        assert_eq!(s.iter().collect::<Vec<_>>(), alloc::vec![0, 5, 63]);
        assert_eq!(s.len(), 3);
    }
}
