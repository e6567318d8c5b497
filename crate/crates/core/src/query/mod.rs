//! Trend aggregation queries: syntax tree, parser, templates and sharing.

mod parser;
pub mod sharing;
pub mod template;

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use thiserror::Error;

use crate::event::{AttrKind, Event, Schema, Value};

pub use parser::{parse_query, parse_query_file};
pub use sharing::{find_sharable, SharableSet, ShareClass};
pub use template::{build_merged_template, MergedTemplate, Template, TypeSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("unknown event type `{0}`")]
    UnknownType(String),
    #[error("event type `{ty}` has no attribute `{attr}`")]
    UnknownAttr { ty: String, attr: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid query `{query}`: {msg}")]
    Invalid { query: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    Atom(String),
    Kleene(Box<Pattern>),
    Seq(Vec<Pattern>),
    Or(Box<Pattern>, Box<Pattern>),
    And(Box<Pattern>, Box<Pattern>),
}

impl Pattern {
    pub fn atom(name: &str) -> Pattern {
        Pattern::Atom(name.into())
    }

    pub fn plus(self) -> Pattern {
        Pattern::Kleene(Box::new(self))
    }

    pub fn seq(parts: impl IntoIterator<Item = Pattern>) -> Pattern {
        Pattern::Seq(parts.into_iter().collect())
    }

    /// Event type names in leaf order, repeats included.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Pattern::Atom(name) => out.push(name),
            Pattern::Kleene(p) => p.collect_leaves(out),
            Pattern::Seq(ps) => ps.iter().for_each(|p| p.collect_leaves(out)),
            Pattern::Or(a, b) | Pattern::And(a, b) => {
                a.collect_leaves(out);
                b.collect_leaves(out);
            }
        }
    }

    pub fn types(&self) -> BTreeSet<&str> {
        self.leaves().into_iter().collect()
    }

    /// Whether `E+` (a Kleene plus directly over the atom) occurs.
    pub fn has_kleene_atom(&self, ty: &str) -> bool {
        match self {
            Pattern::Atom(_) => false,
            Pattern::Kleene(p) => {
                matches!(&**p, Pattern::Atom(n) if n == ty) || p.has_kleene_atom(ty)
            }
            Pattern::Seq(ps) => ps.iter().any(|p| p.has_kleene_atom(ty)),
            Pattern::Or(a, b) | Pattern::And(a, b) => {
                a.has_kleene_atom(ty) || b.has_kleene_atom(ty)
            }
        }
    }

    fn contains_and(&self) -> bool {
        match self {
            Pattern::Atom(_) => false,
            Pattern::Kleene(p) => p.contains_and(),
            Pattern::Seq(ps) => ps.iter().any(Pattern::contains_and),
            Pattern::Or(a, b) => a.contains_and() || b.contains_and(),
            Pattern::And(_, _) => true,
        }
    }

    /// Splits a top-level conjunction into its operands.
    pub fn conjuncts(&self) -> Vec<&Pattern> {
        match self {
            Pattern::And(a, b) => alloc::vec![&**a, &**b],
            p => alloc::vec![p],
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Atom(n) => f.write_str(n),
            Pattern::Kleene(p) => match &**p {
                Pattern::Atom(_) | Pattern::Seq(_) | Pattern::Or(..) | Pattern::And(..) => {
                    write!(f, "{p}+")
                }
                Pattern::Kleene(_) => write!(f, "({p})+"),
            },
            Pattern::Seq(ps) => {
                f.write_str("SEQ(")?;
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{p}")?;
                }
                f.write_str(")")
            }
            Pattern::Or(a, b) => write!(f, "OR({a}, {b})"),
            Pattern::And(a, b) => write!(f, "AND({a}, {b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Aggregate {
    CountAll,
    CountType(String),
    Sum(String, String),
    Avg(String, String),
    Min(String, String),
    Max(String, String),
}

impl Aggregate {
    /// The event type the aggregate reads, if any.
    pub fn target_type(&self) -> Option<&str> {
        match self {
            Aggregate::CountAll => None,
            Aggregate::CountType(t)
            | Aggregate::Sum(t, _)
            | Aggregate::Avg(t, _)
            | Aggregate::Min(t, _)
            | Aggregate::Max(t, _) => Some(t),
        }
    }

    pub fn attribute(&self) -> Option<&str> {
        match self {
            Aggregate::CountAll | Aggregate::CountType(_) => None,
            Aggregate::Sum(_, a)
            | Aggregate::Avg(_, a)
            | Aggregate::Min(_, a)
            | Aggregate::Max(_, a) => Some(a),
        }
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aggregate::CountAll => f.write_str("COUNT(*)"),
            Aggregate::CountType(t) => write!(f, "COUNT({t})"),
            Aggregate::Sum(t, a) => write!(f, "SUM({t}.{a})"),
            Aggregate::Avg(t, a) => write!(f, "AVG({t}.{a})"),
            Aggregate::Min(t, a) => write!(f, "MIN({t}.{a})"),
            Aggregate::Max(t, a) => write!(f, "MAX({t}.{a})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Ne => "!=",
        }
    }

    /// Incomparable operands never satisfy a comparison.
    pub fn holds(self, left: &Value, right: &Value) -> bool {
        let Some(ord) = left.compare(right) else {
            return false;
        };
        match self {
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ge => ord != Ordering::Less,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ne => ord != Ordering::Equal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    /// `E.attr op constant`
    Local {
        ty: String,
        attr: String,
        op: CmpOp,
        value: Value,
    },
    /// `[a, b]`: all events of a trend agree on these attributes.
    Equivalence(Vec<String>),
    /// `E.a op NEXT(F).b`: holds between an `E` event and the `F` event
    /// right after it in a trend.
    Adjacent {
        left_ty: String,
        left_attr: String,
        op: CmpOp,
        right_ty: String,
        right_attr: String,
    },
}

impl Predicate {
    /// Local predicate check; a missing attribute fails.
    pub fn local_holds(&self, event: &Event) -> bool {
        match self {
            Predicate::Local {
                ty,
                attr,
                op,
                value,
            } => event.kind != *ty || event.attr(attr).is_some_and(|v| op.holds(v, value)),
            _ => true,
        }
    }

    /// Adjacent predicate check for consecutive trend events `a`, `b`.
    pub fn adjacent_holds(&self, a: &Event, b: &Event) -> bool {
        match self {
            Predicate::Adjacent {
                left_ty,
                left_attr,
                op,
                right_ty,
                right_attr,
            } => {
                if a.kind != *left_ty || b.kind != *right_ty {
                    return true;
                }
                match (a.attr(left_attr), b.attr(right_attr)) {
                    (Some(l), Some(r)) => op.holds(l, r),
                    _ => false,
                }
            }
            _ => true,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Local {
                ty,
                attr,
                op,
                value,
            } => {
                write!(f, "{ty}.{attr} {} ", op.symbol())?;
                match value {
                    Value::Text(s) => write!(f, "'{s}'"),
                    v => write!(f, "{v}"),
                }
            }
            Predicate::Equivalence(attrs) => write!(f, "[{}]", attrs.join(", ")),
            Predicate::Adjacent {
                left_ty,
                left_attr,
                op,
                right_ty,
                right_attr,
            } => write!(
                f,
                "{left_ty}.{left_attr} {} NEXT({right_ty}).{right_attr}",
                op.symbol()
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Window {
    pub size: u64,
    pub slide: u64,
}

impl Window {
    pub fn new(size: u64, slide: u64) -> Window {
        Window { size, slide }
    }

    /// `[start, end)` of instance `i`.
    pub fn bounds(&self, i: u64) -> (u64, u64) {
        (i * self.slide, i * self.slide + self.size)
    }

    /// Instances whose interval contains time `t`.
    pub fn instances_at(&self, t: u64) -> core::ops::Range<u64> {
        let last = t / self.slide;
        let first = (t + 1).saturating_sub(self.size).div_ceil(self.slide);
        first..last + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub id: String,
    pub aggregate: Aggregate,
    pub pattern: Pattern,
    pub predicates: Vec<Predicate>,
    pub groupby: Vec<String>,
    pub window: Window,
}

impl Query {
    pub fn equivalence_attrs(&self) -> Vec<&str> {
        self.predicates
            .iter()
            .filter_map(|p| match p {
                Predicate::Equivalence(a) => Some(a.iter().map(String::as_str)),
                _ => None,
            })
            .flatten()
            .collect()
    }

    /// GROUPBY attributes plus equivalence attributes, sorted, no repeats.
    pub fn partition_attrs(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .groupby
            .iter()
            .map(String::as_str)
            .chain(self.equivalence_attrs())
            .collect();
        set.into_iter().map(String::from).collect()
    }

    /// The event passes the query's local filters: its type occurs in the
    /// pattern, local predicates hold and the aggregated attribute is present.
    pub fn matches(&self, event: &Event) -> bool {
        if !self.pattern.leaves().contains(&event.kind.as_str()) {
            return false;
        }
        if let (Some(ty), Some(attr)) = (self.aggregate.target_type(), self.aggregate.attribute()) {
            if event.kind == ty && event.attr(attr).is_none() {
                return false;
            }
        }
        self.predicates.iter().all(|p| p.local_holds(event))
    }

    pub fn validate(&self, schema: &Schema) -> Result<(), QueryError> {
        let invalid = |msg: String| QueryError::Invalid {
            query: self.id.clone(),
            msg,
        };
        let leaves = self.pattern.leaves();
        let types: BTreeSet<&str> = leaves.iter().copied().collect();
        if types.len() != leaves.len() {
            return Err(QueryError::Unsupported(format!(
                "event type repeated in pattern of `{}`",
                self.id
            )));
        }
        for ty in &types {
            if schema.type_id(ty).is_none() {
                return Err(QueryError::UnknownType((*ty).into()));
            }
        }
        if self.window.slide == 0 || self.window.size < self.window.slide {
            return Err(invalid(format!(
                "window needs size >= slide >= 1, got WITHIN {} SLIDE {}",
                self.window.size, self.window.slide
            )));
        }
        if let Pattern::And(a, b) = &self.pattern {
            if a.contains_and() || b.contains_and() {
                return Err(QueryError::Unsupported("nested AND".into()));
            }
            if self.aggregate != Aggregate::CountAll {
                return Err(QueryError::Unsupported(
                    "AND patterns only support COUNT(*)".into(),
                ));
            }
        } else if self.pattern.contains_and() {
            return Err(QueryError::Unsupported("AND below the top level".into()));
        }
        let attr_on = |ty: &str, attr: &str| -> Result<AttrKind, QueryError> {
            schema
                .attr_kind(ty, attr)
                .ok_or_else(|| QueryError::UnknownAttr {
                    ty: ty.into(),
                    attr: attr.into(),
                })
        };
        let in_pattern = |ty: &str| -> Result<(), QueryError> {
            if schema.type_id(ty).is_none() {
                return Err(QueryError::UnknownType(ty.into()));
            }
            if !types.contains(ty) {
                return Err(invalid(format!(
                    "type `{ty}` does not occur in the pattern"
                )));
            }
            Ok(())
        };
        if let Some(ty) = self.aggregate.target_type() {
            in_pattern(ty)?;
            if let Some(attr) = self.aggregate.attribute() {
                let kind = attr_on(ty, attr)?;
                let numeric_only =
                    matches!(self.aggregate, Aggregate::Sum(..) | Aggregate::Avg(..));
                if numeric_only && !kind.is_numeric() {
                    return Err(invalid(format!(
                        "{} needs a numeric attribute",
                        self.aggregate
                    )));
                }
            }
        }
        for pred in &self.predicates {
            match pred {
                Predicate::Local { ty, attr, .. } => {
                    in_pattern(ty)?;
                    attr_on(ty, attr)?;
                }
                Predicate::Adjacent {
                    left_ty,
                    left_attr,
                    right_ty,
                    right_attr,
                    ..
                } => {
                    in_pattern(left_ty)?;
                    in_pattern(right_ty)?;
                    attr_on(left_ty, left_attr)?;
                    attr_on(right_ty, right_attr)?;
                }
                Predicate::Equivalence(attrs) => {
                    for ty in &types {
                        for attr in attrs {
                            attr_on(ty, attr)?;
                        }
                    }
                }
            }
        }
        for ty in &types {
            for attr in &self.groupby {
                attr_on(ty, attr)?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "QUERY {}", self.id)?;
        writeln!(f, "RETURN {}", self.aggregate)?;
        writeln!(f, "PATTERN {}", self.pattern)?;
        if !self.predicates.is_empty() {
            f.write_str("WHERE ")?;
            for (i, p) in self.predicates.iter().enumerate() {
                if i > 0 {
                    f.write_str(" AND ")?;
                }
                write!(f, "{p}")?;
            }
            writeln!(f)?;
        }
        if !self.groupby.is_empty() {
            writeln!(f, "GROUPBY {}", self.groupby.join(", "))?;
        }
        writeln!(f, "WITHIN {} SLIDE {}", self.window.size, self.window.slide)
    }
}
