//! File formats, stream generator, metrics and benchmark harness around
//! `trendshare-core`.

pub mod bench;
pub mod cases;
pub mod generator;
pub mod io;
pub mod metrics;
pub mod run;

pub use run::{execute, run, EventSource, Execution, RunConfig, StrategyChoice};
