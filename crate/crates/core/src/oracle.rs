//! Brute-force reference evaluation: builds every trend explicitly, then
//! aggregates. Exponential in the number of matched events, so it refuses
//! windows with more than a configured number of them.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use thiserror::Error;

use crate::engine::{AggValue, ResultKey, ResultTable};
use crate::event::{Event, Value};
use crate::partition::{partition_key, RoutingError};
use crate::query::{Aggregate, Pattern, Predicate, Query};

pub const DEFAULT_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("query `{query}` matches {matched} events in window [{start}, {end}); the oracle handles at most {cap}")]
    CapExceeded {
        query: String,
        start: u64,
        end: u64,
        matched: usize,
        cap: usize,
    },
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

type Trend = Vec<usize>;

fn join(out: &mut BTreeSet<Trend>, left: &BTreeSet<Trend>, right: &BTreeSet<Trend>) {
    for a in left {
        for b in right {
            if a.last().is_none_or(|l| l < &b[0]) {
                let mut t = a.clone();
                t.extend_from_slice(b);
                out.insert(t);
            }
        }
    }
}

/// Every index sequence over `events` (in order) that spells a word of
/// `pattern`, ignoring predicates.
fn spell(pattern: &Pattern, events: &[&Event]) -> BTreeSet<Trend> {
    match pattern {
        Pattern::Atom(name) => events
            .iter()
            .enumerate()
            .filter(|(_, e)| e.kind == *name)
            .map(|(i, _)| alloc::vec![i])
            .collect(),
        Pattern::Seq(parts) => {
            let mut acc: BTreeSet<Trend> = BTreeSet::new();
            acc.insert(Vec::new());
            for part in parts {
                let next = spell(part, events);
                let mut joined = BTreeSet::new();
                join(&mut joined, &acc, &next);
                acc = joined;
            }
            acc
        }
        Pattern::Kleene(inner) => {
            let base = spell(inner, events);
            let mut all = base.clone();
            let mut frontier = base.clone();
            while !frontier.is_empty() {
                let mut next = BTreeSet::new();
                join(&mut next, &frontier, &base);
                all.extend(next.iter().cloned());
                frontier = next;
            }
            all
        }
        Pattern::Or(a, b) | Pattern::And(a, b) => {
            let mut s = spell(a, events);
            s.extend(spell(b, events));
            s
        }
    }
}

fn equivalent(query: &Query, trend: &[usize], events: &[&Event]) -> bool {
    query.predicates.iter().all(|p| match p {
        Predicate::Equivalence(attrs) => attrs.iter().all(|a| {
            let first = events[trend[0]].attr(a);
            first.is_some() && trend.iter().all(|&i| events[i].attr(a) == first)
        }),
        _ => true,
    })
}

fn adjacent_ok(query: &Query, trend: &[usize], events: &[&Event]) -> bool {
    trend.windows(2).all(|w| {
        query
            .predicates
            .iter()
            .all(|p| p.adjacent_holds(events[w[0]], events[w[1]]))
    })
}

/// Trends of one pattern of `query` among `events`, all of which the query
/// already matched individually.
pub fn enumerate_pattern(query: &Query, pattern: &Pattern, events: &[&Event]) -> Vec<Trend> {
    spell(pattern, events)
        .into_iter()
        .filter(|t| adjacent_ok(query, t, events) && equivalent(query, t, events))
        .collect()
}

/// Trends of a query without conjunction over the given window contents.
pub fn enumerate(query: &Query, events: &[&Event], cap: usize) -> Result<Vec<Trend>, OracleError> {
    let matched: Vec<&Event> = events
        .iter()
        .copied()
        .filter(|e| query.matches(e))
        .collect();
    if matched.len() > cap {
        return Err(OracleError::CapExceeded {
            query: query.id.clone(),
            start: matched.first().map_or(0, |e| e.time),
            end: matched.last().map_or(0, |e| e.time + 1),
            matched: matched.len(),
            cap,
        });
    }
    let trends = enumerate_pattern(query, &query.pattern, &matched);
    // Indices refer to `matched`; map them back to `events`.
    let back: Vec<usize> = events
        .iter()
        .enumerate()
        .filter(|(_, e)| query.matches(e))
        .map(|(i, _)| i)
        .collect();
    Ok(trends
        .into_iter()
        .map(|t| t.into_iter().map(|i| back[i]).collect())
        .collect())
}

fn rational(v: &Value) -> BigRational {
    match v {
        Value::Int(i) => BigRational::from_integer(BigInt::from(*i)),
        Value::Real(r) => BigRational::from_float(*r).expect("finite attribute value"),
        Value::Text(_) => panic!("text value in a numeric aggregate"),
    }
}

fn better(candidate: &Value, current: &Option<Value>, want: Ordering) -> bool {
    current
        .as_ref()
        .is_none_or(|c| candidate.compare(c) == Some(want))
}

/// Aggregates trends (index lists into `events`) literally.
pub fn aggregate(agg: &Aggregate, trends: &[Trend], events: &[&Event]) -> AggValue {
    fn in_trends<'a>(
        trends: &'a [Trend],
        events: &'a [&'a Event],
        ty: &'a str,
    ) -> impl Iterator<Item = &'a Event> + 'a {
        trends
            .iter()
            .flat_map(move |t| t.iter().map(move |&i| events[i]))
            .filter(move |e| e.kind == ty)
    }
    let of_type = |ty| in_trends(trends, events, ty);
    match agg {
        Aggregate::CountAll => AggValue::Count(BigUint::from(trends.len())),
        Aggregate::CountType(ty) => AggValue::Count(BigUint::from(of_type(ty).count())),
        Aggregate::Sum(ty, attr) => AggValue::Sum(
            of_type(ty)
                .map(|e| rational(e.attr(attr).expect("matched events carry the attribute")))
                .sum(),
        ),
        Aggregate::Avg(ty, attr) => {
            let mut n = 0u64;
            let mut sum = BigRational::from_integer(0.into());
            for e in of_type(ty) {
                n += 1;
                sum += rational(e.attr(attr).expect("matched events carry the attribute"));
            }
            if n == 0 {
                AggValue::Undefined
            } else {
                AggValue::Avg(sum / BigRational::from_integer(n.into()))
            }
        }
        Aggregate::Min(ty, attr) | Aggregate::Max(ty, attr) => {
            let want = if matches!(agg, Aggregate::Min(..)) {
                Ordering::Less
            } else {
                Ordering::Greater
            };
            let mut best: Option<Value> = None;
            for e in of_type(ty) {
                let v = e.attr(attr).expect("matched events carry the attribute");
                if better(v, &best, want) {
                    best = Some(v.clone());
                }
            }
            match (best, want) {
                (None, _) => AggValue::Undefined,
                (Some(v), Ordering::Less) => AggValue::Min(v),
                (Some(v), _) => AggValue::Max(v),
            }
        }
    }
}

/// Values of the equivalence attributes, shared by every event of a trend.
fn equivalence_values(query: &Query, trend: &[usize], events: &[&Event]) -> Vec<Option<String>> {
    query
        .equivalence_attrs()
        .iter()
        .map(|a| events[trend[0]].attr(a).map(|v| alloc::format!("{v:?}")))
        .collect()
}

fn evaluate_window(query: &Query, window: &[&Event], cap: usize) -> Result<AggValue, OracleError> {
    match &query.pattern {
        Pattern::And(a, b) => {
            let matched: Vec<&Event> = window
                .iter()
                .copied()
                .filter(|e| query.matches(e))
                .collect();
            if matched.len() > cap {
                return Err(OracleError::CapExceeded {
                    query: query.id.clone(),
                    start: matched[0].time,
                    end: matched[matched.len() - 1].time + 1,
                    matched: matched.len(),
                    cap,
                });
            }
            let left = enumerate_pattern(query, a, &matched);
            let right = enumerate_pattern(query, b, &matched);
            let left_set: BTreeSet<&Trend> = left.iter().collect();
            assert!(
                right.iter().all(|t| !left_set.contains(t)),
                "conjunct trends overlap"
            );
            let mut by_key: BTreeMap<Vec<Option<String>>, (u64, u64)> = BTreeMap::new();
            for t in &left {
                by_key
                    .entry(equivalence_values(query, t, &matched))
                    .or_default()
                    .0 += 1;
            }
            for t in &right {
                by_key
                    .entry(equivalence_values(query, t, &matched))
                    .or_default()
                    .1 += 1;
            }
            let pairs: BigUint = by_key
                .values()
                .map(|&(l, r)| BigUint::from(l) * BigUint::from(r))
                .sum();
            Ok(AggValue::Count(pairs))
        }
        _ => {
            let trends = enumerate(query, window, cap)?;
            Ok(aggregate(&query.aggregate, &trends, window))
        }
    }
}

/// Evaluates every query over the whole stream.
pub fn evaluate_workload(
    queries: &[Query],
    events: &[Event],
    cap: usize,
) -> Result<ResultTable, OracleError> {
    let mut table = ResultTable::new();
    for q in queries {
        table
            .labels
            .insert(q.id.clone(), alloc::format!("{}", q.aggregate));
        let attrs = q.partition_attrs();
        let mut groups: BTreeMap<String, Vec<&Event>> = BTreeMap::new();
        for e in events {
            if q.matches(e) {
                partition_key(e, &attrs)?;
                groups
                    .entry(partition_key(e, &q.groupby)?)
                    .or_default()
                    .push(e);
            }
        }
        for (group, evs) in groups {
            let instances: BTreeSet<u64> = evs
                .iter()
                .flat_map(|e| q.window.instances_at(e.time))
                .collect();
            for inst in instances {
                let (s, e) = q.window.bounds(inst);
                let window: Vec<&Event> = evs
                    .iter()
                    .copied()
                    .filter(|ev| ev.time >= s && ev.time < e)
                    .collect();
                let value = evaluate_window(q, &window, cap)?;
                table.insert(
                    ResultKey {
                        query: q.id.clone(),
                        window_start: s,
                        window_end: e,
                        group: group.clone(),
                    },
                    value,
                );
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{AttrKind, Schema};
    use crate::query::parse_query;

    fn schema() -> Schema {
        Schema::from_slices(&[("A", &[]), ("B", &[("x", AttrKind::Integer)]), ("C", &[])]).unwrap()
    }

    fn q(text: &str) -> Query {
        parse_query(text, &schema()).unwrap()
    }

    #[test]
    fn seq_kleene_trends() {
        let query = q("RETURN COUNT(*) PATTERN SEQ(A, B+) WITHIN 10 SLIDE 10");
        let evs = [
            Event::new(1, "A"),
            Event::new(2, "A"),
            Event::new(3, "B").with("x", Value::Int(5)),
        ];
        let refs: Vec<&Event> = evs.iter().collect();
        let trends = enumerate(&query, &refs, DEFAULT_CAP).unwrap();
        assert_eq!(trends, alloc::vec![alloc::vec![0, 2], alloc::vec![1, 2]]);
        let only_b = [Event::new(1, "B")];
        let refs: Vec<&Event> = only_b.iter().collect();
        assert!(enumerate(&query, &refs, DEFAULT_CAP).unwrap().is_empty());
    }

    #[test]
    fn kleene_counts_all_subsequences() {
        let query = q("RETURN COUNT(*) PATTERN B+ WITHIN 10 SLIDE 10");
        let evs: Vec<Event> = (0..3).map(|t| Event::new(t, "B")).collect();
        let refs: Vec<&Event> = evs.iter().collect();
        let trends = enumerate(&query, &refs, DEFAULT_CAP).unwrap();
        assert_eq!(trends.len(), 7);
        assert_eq!(
            aggregate(&query.aggregate, &trends, &refs),
            AggValue::Count(7u32.into())
        );
    }

    #[test]
    fn sum_and_empty_extremes() {
        let query = q("RETURN SUM(B.x) PATTERN SEQ(A, B+) WITHIN 10 SLIDE 10");
        let evs = [
            Event::new(1, "A"),
            Event::new(3, "B").with("x", Value::Int(5)),
        ];
        let refs: Vec<&Event> = evs.iter().collect();
        let trends = enumerate(&query, &refs, DEFAULT_CAP).unwrap();
        assert_eq!(
            aggregate(&query.aggregate, &trends, &refs),
            AggValue::Sum(BigRational::from_integer(5.into()))
        );
        let min = Aggregate::Min("B".into(), "x".into());
        assert_eq!(aggregate(&min, &[], &refs), AggValue::Undefined);
    }

    #[test]
    fn refuses_large_windows() {
        let query = q("RETURN COUNT(*) PATTERN B+ WITHIN 100000 SLIDE 100000");
        let evs: Vec<Event> = (0..21).map(|t| Event::new(t, "B")).collect();
        assert!(matches!(
            evaluate_workload(&[query], &evs, DEFAULT_CAP),
            Err(OracleError::CapExceeded { matched: 21, .. })
        ));
    }
}
