//! Final aggregate values per query, window and group.

use alloc::collections::BTreeMap;
use alloc::string::String;
use core::cmp::Ordering;
use core::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::event::Value;
use crate::query::Aggregate;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResultKey {
    pub query: String,
    pub window_start: u64,
    pub window_end: u64,
    pub group: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AggValue {
    Count(BigUint),
    Sum(BigRational),
    Avg(BigRational),
    Min(Value),
    Max(Value),
    /// AVG, MIN or MAX over no events.
    Undefined,
}

fn write_rational(f: &mut fmt::Formatter<'_>, r: &BigRational) -> fmt::Result {
    if r.is_integer() {
        write!(f, "{}", r.numer())
    } else {
        let approx = r.to_f64().unwrap_or(f64::NAN);
        write!(f, "{approx:?}")
    }
}

impl fmt::Display for AggValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggValue::Count(c) => write!(f, "{c}"),
            AggValue::Sum(r) | AggValue::Avg(r) => write_rational(f, r),
            AggValue::Min(v) | AggValue::Max(v) => write!(f, "{v}"),
            AggValue::Undefined => f.write_str(""),
        }
    }
}

impl AggValue {
    pub fn is_defined(&self) -> bool {
        !matches!(self, AggValue::Undefined)
    }
}

/// Mergeable intermediate result of one query for one window and group,
/// possibly contributed by several partitions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Partial {
    pub count: BigUint,
    pub sum: BigRational,
    pub events: BigUint,
    pub min: Option<Value>,
    pub max: Option<Value>,
}

fn pick(current: &mut Option<Value>, candidate: &Value, keep: Ordering) {
    match current {
        Some(c) if candidate.compare(c) != Some(keep) => {}
        _ => *current = Some(candidate.clone()),
    }
}

impl Partial {
    pub fn observe(&mut self, v: &Value) {
        pick(&mut self.min, v, Ordering::Less);
        pick(&mut self.max, v, Ordering::Greater);
    }

    pub fn merge(&mut self, other: &Partial) {
        self.count += &other.count;
        self.sum += &other.sum;
        self.events += &other.events;
        if let Some(v) = &other.min {
            pick(&mut self.min, v, Ordering::Less);
        }
        if let Some(v) = &other.max {
            pick(&mut self.max, v, Ordering::Greater);
        }
    }

    pub fn finalize(&self, agg: &Aggregate) -> AggValue {
        match agg {
            Aggregate::CountAll => AggValue::Count(self.count.clone()),
            Aggregate::CountType(_) => AggValue::Count(self.events.clone()),
            Aggregate::Sum(..) => AggValue::Sum(self.sum.clone()),
            Aggregate::Avg(..) => {
                if self.events.is_zero() {
                    AggValue::Undefined
                } else {
                    AggValue::Avg(
                        &self.sum / BigRational::from_integer(BigInt::from(self.events.clone())),
                    )
                }
            }
            Aggregate::Min(..) => self.min.clone().map_or(AggValue::Undefined, AggValue::Min),
            Aggregate::Max(..) => self.max.clone().map_or(AggValue::Undefined, AggValue::Max),
        }
    }
}

/// Rows keyed by query, window and group, plus each query's aggregate
/// label for output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: BTreeMap<ResultKey, AggValue>,
    pub labels: BTreeMap<String, String>,
}

impl ResultTable {
    pub fn new() -> ResultTable {
        ResultTable::default()
    }

    pub fn insert(&mut self, key: ResultKey, value: AggValue) {
        self.rows.insert(key, value);
    }

    pub fn get(
        &self,
        query: &str,
        window_start: u64,
        window_end: u64,
        group: &str,
    ) -> Option<&AggValue> {
        self.rows.get(&ResultKey {
            query: query.into(),
            window_start,
            window_end,
            group: group.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows of one query in key order.
    pub fn query_rows<'a>(
        &'a self,
        query: &'a str,
    ) -> impl Iterator<Item = (&'a ResultKey, &'a AggValue)> {
        self.rows.iter().filter(move |(k, _)| k.query == query)
    }

    /// Keys present in exactly one of the tables or with different values.
    pub fn differences<'a>(&'a self, other: &'a ResultTable) -> alloc::vec::Vec<&'a ResultKey> {
        let mut out = alloc::vec::Vec::new();
        for (k, v) in &self.rows {
            if other.rows.get(k) != Some(v) {
                out.push(k);
            }
        }
        for k in other.rows.keys() {
            if !self.rows.contains_key(k) {
                out.push(k);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn avg_needs_events() {
        let p = Partial::default();
        assert_eq!(
            p.finalize(&Aggregate::Avg("B".into(), "x".into())),
            AggValue::Undefined
        );
        let p = Partial {
            sum: BigRational::from_integer(9.into()),
            events: 2u32.into(),
            ..Partial::default()
        };
        let v = p.finalize(&Aggregate::Avg("B".into(), "x".into()));
        assert_eq!(v.to_string(), "4.5");
    }

    #[test]
    fn merge_keeps_extremes() {
        let mut a = Partial::default();
        a.observe(&Value::Int(5));
        let mut b = Partial::default();
        b.observe(&Value::Int(2));
        b.observe(&Value::Int(9));
        a.merge(&b);
        assert_eq!(a.min, Some(Value::Int(2)));
        assert_eq!(a.max, Some(Value::Int(9)));
    }
}
