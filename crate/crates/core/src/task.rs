//! Task histories: the records served by the knowledge store.

use serde::{Deserialize, Serialize};

use crate::space::{ConfigSpace, Configuration};
use crate::surrogate::{ObservationSet, SurrogateError, SurrogateModel};

pub const META_FEATURE_DIM: usize = 34;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Ok,
    Failed,
    EarlyStopped,
}

impl EvalStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalStatus::Ok => "ok",
            EvalStatus::Failed => "failed",
            EvalStatus::EarlyStopped => "early_stopped",
        }
    }
}

/// Workload descriptor averaged over queries; fixed at 34 components.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaFeature(Vec<f64>);

impl MetaFeature {
    pub fn new(values: Vec<f64>) -> Option<Self> {
        (values.len() == META_FEATURE_DIM && values.iter().all(|v| v.is_finite())).then_some(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// One evaluation of a task: per-query latency and cost (None where a query
/// was not run at that fidelity).
#[derive(Debug, Clone, PartialEq)]
pub struct TaskObservation {
    pub config: Configuration,
    pub latency: Vec<Option<f64>>,
    pub cost: Vec<Option<f64>>,
    pub status: EvalStatus,
    pub delta: f64,
}

impl TaskObservation {
    pub fn is_full(&self) -> bool {
        self.delta == 1.0
    }

    /// Complete per-query latencies of an ok evaluation.
    pub fn complete_latencies(&self) -> Option<Vec<f64>> {
        if self.status != EvalStatus::Ok {
            return None;
        }
        self.latency.iter().copied().collect()
    }

    pub fn complete_costs(&self) -> Option<Vec<f64>> {
        if self.status != EvalStatus::Ok {
            return None;
        }
        self.cost.iter().copied().collect()
    }

    /// Sum of the latencies that were recorded.
    pub fn recorded_latency(&self) -> f64 {
        self.latency.iter().flatten().sum()
    }

    /// Total latency over all queries, if this is a complete ok run.
    pub fn total_latency(&self) -> Option<f64> {
        self.complete_latencies().map(|l| l.iter().sum())
    }
}

#[derive(Debug, Clone)]
pub struct TaskRecord {
    pub task_id: String,
    pub meta: MetaFeature,
    pub queries: Vec<String>,
    pub observations: Vec<TaskObservation>,
    /// Surrogate over total full-fidelity latency.
    pub surrogate: Option<SurrogateModel>,
}

impl PartialEq for TaskRecord {
    fn eq(&self, other: &Self) -> bool {
        self.task_id == other.task_id
            && self.meta == other.meta
            && self.queries == other.queries
            && self.observations == other.observations
    }
}

impl TaskRecord {
    pub fn new(task_id: &str, meta: MetaFeature, queries: Vec<String>) -> Self {
        Self {
            task_id: task_id.to_string(),
            meta,
            queries,
            observations: Vec::new(),
            surrogate: None,
        }
    }

    /// Full-fidelity complete ok observations with their total latency.
    pub fn full_fidelity(&self) -> Vec<(&TaskObservation, f64)> {
        self.observations
            .iter()
            .filter(|o| o.is_full())
            .filter_map(|o| o.total_latency().map(|t| (o, t)))
            .collect()
    }

    /// Full-fidelity observations as a surrogate training set (failures penalized).
    pub fn full_fidelity_set(&self) -> ObservationSet {
        let mut set = ObservationSet::new();
        for o in self.observations.iter().filter(|o| o.is_full()) {
            let y = match o.status {
                EvalStatus::Ok => o.total_latency().unwrap_or(f64::NAN),
                EvalStatus::EarlyStopped => o.recorded_latency(),
                EvalStatus::Failed => f64::NAN,
            };
            set.push(o.config.clone(), y, 1.0, o.status);
        }
        set
    }

    pub fn fit_surrogate(&mut self, space: &ConfigSpace, seed: u64) -> Result<&SurrogateModel, SurrogateError> {
        let model = SurrogateModel::fit(&self.full_fidelity_set(), space, seed)?;
        self.surrogate = Some(model);
        Ok(self.surrogate.as_ref().expect("just set"))
    }

    pub fn best_full_fidelity(&self) -> Option<(&TaskObservation, f64)> {
        self.full_fidelity().into_iter().min_by(|a, b| a.1.total_cmp(&b.1))
    }
}
