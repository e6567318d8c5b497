//! Trend aggregation over one partitioned stream.

pub mod acc;
pub mod compose;
pub mod expr;
pub mod plan;
pub mod result;
pub mod state;

pub use acc::{Acc, Weight};
pub use compose::{combine_conjunction, combine_disjunction, NegativeCount};
pub use expr::{EvalError, SnapshotExpr, SnapshotId, SnapshotTable};
pub use plan::{compile_workload, GroupPlan, Plan, PlanSet};
pub use result::{AggValue, Partial, ResultKey, ResultTable};
pub use state::{
    Closed, DecisionRecord, EngineConfig, EngineStats, Env, PartitionEngine, Pending, SharedTrace,
};
