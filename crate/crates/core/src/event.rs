//! Events, event types and ordered stream consumption.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use thiserror::Error;

/// Dense index of an event type inside a [`Schema`].
pub type TypeId = usize;

/// Upper bound on the number of event types per schema; type sets are `u64` masks.
pub const MAX_TYPES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventError {
    #[error("unknown event type `{0}`")]
    UnknownType(String),
    #[error("event type `{ty}` has no attribute `{attr}`")]
    UnknownAttr { ty: String, attr: String },
    #[error("attribute `{ty}.{attr}` expects {expected} value")]
    AttrKind {
        ty: String,
        attr: String,
        expected: AttrKind,
    },
    #[error("event at time {got} arrived after an event at time {prev}")]
    OutOfOrder { prev: u64, got: u64 },
    #[error("duplicate event type `{0}` in schema")]
    DuplicateType(String),
    #[error("schema declares more than {MAX_TYPES} event types")]
    TooManyTypes,
    #[error("schema declares no event types")]
    EmptySchema,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttrKind {
    Integer,
    Real,
    Text,
}

impl AttrKind {
    pub fn parse(s: &str) -> Option<AttrKind> {
        match s {
            "integer" | "int" => Some(AttrKind::Integer),
            "real" | "float" => Some(AttrKind::Real),
            "text" | "string" => Some(AttrKind::Text),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AttrKind::Integer => "integer",
            AttrKind::Real => "real",
            AttrKind::Text => "text",
        }
    }

    pub fn is_numeric(self) -> bool {
        !matches!(self, AttrKind::Text)
    }
}

impl fmt::Display for AttrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let article = if matches!(self, AttrKind::Integer) {
            "an"
        } else {
            "a"
        };
        write!(f, "{article} {}", self.name())
    }
}

/// Attribute value. Integers and reals compare numerically with each other.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
    Text(String),
}

impl Value {
    pub fn kind(&self) -> AttrKind {
        match self {
            Value::Int(_) => AttrKind::Integer,
            Value::Real(_) => AttrKind::Real,
            Value::Text(_) => AttrKind::Text,
        }
    }

    /// Total-enough comparison: `None` for text against numbers or NaN.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            (Value::Int(a), Value::Real(b)) => (*a as f64).partial_cmp(b),
            (Value::Real(a), Value::Int(b)) => a.partial_cmp(&(*b as f64)),
            (Value::Real(a), Value::Real(b)) => a.partial_cmp(b),
            (Value::Text(a), Value::Text(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }

    fn coerce(self, kind: AttrKind) -> Option<Value> {
        match (self, kind) {
            (v @ Value::Int(_), AttrKind::Integer) => Some(v),
            (Value::Real(r), AttrKind::Integer) => {
                let i = r as i64;
                (i as f64 == r).then_some(Value::Int(i))
            }
            (Value::Int(i), AttrKind::Real) => Some(Value::Real(i as f64)),
            (v @ Value::Real(_), AttrKind::Real) => Some(v),
            (v @ Value::Text(_), AttrKind::Text) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r:?}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

/// One event type: a name and its attribute schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventType {
    pub name: String,
    pub attrs: BTreeMap<String, AttrKind>,
}

/// The set of event types a workload runs against.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schema {
    types: Vec<EventType>,
    by_name: BTreeMap<String, TypeId>,
}

impl Schema {
    pub fn new(types: impl IntoIterator<Item = EventType>) -> Result<Schema, EventError> {
        let mut schema = Schema::default();
        for ty in types {
            schema.add(ty)?;
        }
        if schema.types.is_empty() {
            return Err(EventError::EmptySchema);
        }
        Ok(schema)
    }

    fn add(&mut self, ty: EventType) -> Result<TypeId, EventError> {
        if self.by_name.contains_key(&ty.name) {
            return Err(EventError::DuplicateType(ty.name));
        }
        if self.types.len() == MAX_TYPES {
            return Err(EventError::TooManyTypes);
        }
        let id = self.types.len();
        self.by_name.insert(ty.name.clone(), id);
        self.types.push(ty);
        Ok(id)
    }

    /// Convenience constructor: `&[("B", &[("speed", AttrKind::Integer)])]`.
    pub fn from_slices(spec: &[(&str, &[(&str, AttrKind)])]) -> Result<Schema, EventError> {
        Schema::new(spec.iter().map(|(name, attrs)| EventType {
            name: name.to_string(),
            attrs: attrs.iter().map(|(a, k)| (a.to_string(), *k)).collect(),
        }))
    }

    pub fn type_id(&self, name: &str) -> Option<TypeId> {
        self.by_name.get(name).copied()
    }

    pub fn event_type(&self, id: TypeId) -> &EventType {
        &self.types[id]
    }

    pub fn types(&self) -> &[EventType] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn attr_kind(&self, ty: &str, attr: &str) -> Option<AttrKind> {
        let id = self.type_id(ty)?;
        self.types[id].attrs.get(attr).copied()
    }

    /// Checks an event against its type and coerces numeric attributes to
    /// the declared kinds. Attributes may be omitted; unknown ones are errors.
    pub fn conform(&self, mut event: Event) -> Result<Event, EventError> {
        let id = self
            .type_id(&event.kind)
            .ok_or_else(|| EventError::UnknownType(event.kind.clone()))?;
        let ty = &self.types[id];
        for (name, value) in event.attrs.iter_mut() {
            let Some(&kind) = ty.attrs.get(name) else {
                return Err(EventError::UnknownAttr {
                    ty: ty.name.clone(),
                    attr: name.clone(),
                });
            };
            if value.kind() == kind {
                continue;
            }
            let Some(coerced) = value.clone().coerce(kind) else {
                return Err(EventError::AttrKind {
                    ty: ty.name.clone(),
                    attr: name.clone(),
                    expected: kind,
                });
            };
            *value = coerced;
        }
        Ok(event)
    }
}

/// A timestamped, typed tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: u64,
    pub kind: String,
    pub attrs: BTreeMap<String, Value>,
}

impl Event {
    pub fn new(time: u64, kind: impl Into<String>) -> Event {
        Event {
            time,
            kind: kind.into(),
            attrs: BTreeMap::new(),
        }
    }

    pub fn with(mut self, attr: impl Into<String>, value: Value) -> Event {
        self.attrs.insert(attr.into(), value);
        self
    }

    pub fn attr(&self, name: &str) -> Option<&Value> {
        self.attrs.get(name)
    }
}

/// Single-consumer cursor over events that refuses to go back in time.
#[derive(Debug)]
pub struct OrderedStream<I> {
    inner: I,
    last: Option<u64>,
}

impl<I: Iterator<Item = Event>> OrderedStream<I> {
    pub fn new(inner: impl IntoIterator<IntoIter = I>) -> Self {
        OrderedStream {
            inner: inner.into_iter(),
            last: None,
        }
    }

    /// Next event, `Ok(None)` at end of stream.
    pub fn next_ordered(&mut self) -> Result<Option<Event>, EventError> {
        let Some(event) = self.inner.next() else {
            return Ok(None);
        };
        if let Some(prev) = self.last {
            if event.time < prev {
                return Err(EventError::OutOfOrder {
                    prev,
                    got: event.time,
                });
            }
        }
        self.last = Some(event.time);
        Ok(Some(event))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn schema() -> Schema {
        Schema::from_slices(&[
            ("A", &[]),
            (
                "B",
                &[("speed", AttrKind::Integer), ("price", AttrKind::Real)],
            ),
        ])
        .unwrap()
    }

    #[test]
    fn conform_coerces_numbers() {
        let s = schema();
        let e = Event::new(3, "B")
            .with("speed", Value::Real(9.0))
            .with("price", Value::Int(2));
        let e = s.conform(e).unwrap();
        assert_eq!(e.attr("speed"), Some(&Value::Int(9)));
        assert_eq!(e.attr("price"), Some(&Value::Real(2.0)));
    }

    #[test]
    fn conform_rejects_bad_input() {
        let s = schema();
        assert_eq!(
            s.conform(Event::new(2, "Z")),
            Err(EventError::UnknownType("Z".into()))
        );
        let err = s
            .conform(Event::new(2, "B").with("speed", Value::Real(1.5)))
            .unwrap_err();
        assert!(matches!(err, EventError::AttrKind { ref attr, .. } if attr == "speed"));
        let err = s
            .conform(Event::new(2, "A").with("x", Value::Int(1)))
            .unwrap_err();
        assert!(matches!(err, EventError::UnknownAttr { .. }));
    }

    #[test]
    fn ordered_stream() {
        let mut s = OrderedStream::new(vec![Event::new(1, "A"), Event::new(2, "A")]);
        assert_eq!(s.next_ordered().unwrap().unwrap().time, 1);
        assert_eq!(s.next_ordered().unwrap().unwrap().time, 2);
        assert_eq!(s.next_ordered().unwrap(), None);

        let mut s = OrderedStream::new(Vec::<Event>::new());
        assert_eq!(s.next_ordered().unwrap(), None);

        let mut s = OrderedStream::new(vec![Event::new(5, "A"), Event::new(3, "A")]);
        assert!(s.next_ordered().is_ok());
        assert_eq!(
            s.next_ordered(),
            Err(EventError::OutOfOrder { prev: 5, got: 3 })
        );
    }

    #[test]
    fn mixed_numeric_compare() {
        assert_eq!(
            Value::Int(2).compare(&Value::Real(2.5)),
            Some(Ordering::Less)
        );
        assert_eq!(Value::Text("a".into()).compare(&Value::Int(1)), None);
    }
}
