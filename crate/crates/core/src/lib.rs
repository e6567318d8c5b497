//! Shared aggregation of Kleene event trends across many queries.
//!
//! The crate computes `COUNT`, `SUM`, `AVG`, `MIN` and `MAX` over event trends
//! matched by Kleene patterns, without ever constructing the trends. Queries
//! that contain the same `E+` sub-pattern can propagate one symbolic
//! intermediate count through a run of `E` events (a graphlet); the symbols
//! (snapshots) are resolved per query only when a run closes. A cost model
//! decides, burst by burst, which queries take part in that sharing.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, timing and the
//! command line live in the `trendshare` companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod clock;
pub mod engine;
pub mod event;
pub mod optimizer;
pub mod oracle;
pub mod partition;
pub mod query;
pub mod runtime;

pub use clock::{Clock, NullClock};
pub use engine::{AggValue, ResultKey, ResultTable};
pub use event::{AttrKind, Event, EventError, OrderedStream, Schema, Value};
pub use query::{parse_query, parse_query_file, Aggregate, Pattern, Predicate, Query};
pub use runtime::{Runtime, RuntimeError, Strategy};
