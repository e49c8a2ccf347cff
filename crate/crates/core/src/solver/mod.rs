//! Adaptive mirror prox and its restarted variant.

mod restart;
mod ump;

pub use restart::{
    restart_solve, RadiusRule, RestartConfig, RestartState, StageOutput, StageRecord,
};
pub use ump::{
    acceptance_gap, line_search_step, ump_solve, IterationRecord, LineSearchStep, StopMode,
    UmpConfig, UmpTrace, DEFAULT_MAX_LINESEARCH_ITERS, DEFAULT_MAX_OUTER_ITERS,
};
