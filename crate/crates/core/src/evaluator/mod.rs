//! Workload evaluation: a synthetic multi-query simulator and trace replay.

pub mod replay;
pub mod sim;

use thiserror::Error;

use crate::space::{ConfigSpace, Configuration};
use crate::task::EvalStatus;

pub use replay::ReplayEvaluator;
pub use sim::{make_synthetic_suite, Simulator, SuiteParams, SyntheticSuite, WorkloadSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("configuration is not present in the trace")]
    NotInTrace,
    #[error("query index {0} is outside the workload")]
    UnknownQuery(usize),
    #[error("configuration has {got} values, workload expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Terminate,
}

/// Outcome of running a query subset under one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    /// Per-query latency over the full query list; `None` where not run.
    pub latency: Vec<Option<f64>>,
    pub cost: Vec<Option<f64>>,
    pub status: EvalStatus,
    /// Cost charged to the budget, including work discarded by a failure.
    pub wall_cost: f64,
}

impl EvaluationResult {
    /// Sum of the recorded latencies.
    pub fn aggregate_latency(&self) -> f64 {
        self.latency.iter().flatten().sum()
    }
}

/// Anything that can run a query subset of a workload under a configuration.
pub trait Evaluator: Sync {
    fn space(&self) -> &ConfigSpace;

    fn queries(&self) -> &[String];

    /// Runs `subset` (query indices, executed in order). `guard` sees the
    /// running cost after each query that has a successor and may stop the run.
    fn evaluate(
        &self,
        cfg: &Configuration,
        subset: &[usize],
        guard: &mut dyn FnMut(f64) -> StopDecision,
    ) -> Result<EvaluationResult, EvalError>;

    /// Finite set of permissible configurations, if the evaluator has one.
    fn candidate_pool(&self) -> Option<&[Configuration]> {
        None
    }
}

/// Guard that never stops an evaluation.
pub fn no_guard(_: f64) -> StopDecision {
    StopDecision::Continue
}

pub(crate) fn check_subset(subset: &[usize], n_queries: usize) -> Result<(), EvalError> {
    match subset.iter().find(|&&q| q >= n_queries) {
        Some(&q) => Err(EvalError::UnknownQuery(q)),
        None => Ok(()),
    }
}
