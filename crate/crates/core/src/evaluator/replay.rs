//! Replays recorded per-query latencies from a task directory.

use std::collections::HashMap;
use std::path::Path;

use super::{check_subset, EvalError, EvaluationResult, Evaluator, StopDecision};
use crate::space::{ConfigSpace, Configuration};
use crate::stats::mean;
use crate::store::{load_task_dir, StoreError};
use crate::task::{EvalStatus, TaskRecord};

#[derive(Debug, Clone)]
pub struct ReplayEvaluator {
    space: ConfigSpace,
    record: TaskRecord,
    /// Config key to observation indices, in trace order.
    index: HashMap<Vec<u64>, Vec<usize>>,
    candidates: Vec<Configuration>,
    /// Mean recorded cost per query over ok runs; charged for failures.
    mean_cost: Vec<f64>,
}

impl ReplayEvaluator {
    pub fn from_dir(dir: &Path, space: &ConfigSpace) -> Result<Self, StoreError> {
        Ok(Self::new(load_task_dir(dir, space)?, space))
    }

    pub fn new(record: TaskRecord, space: &ConfigSpace) -> Self {
        let mut index: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
        let mut candidates = Vec::new();
        for (i, o) in record.observations.iter().enumerate() {
            let entry = index.entry(o.config.key()).or_default();
            if entry.is_empty() {
                candidates.push(o.config.clone());
            }
            entry.push(i);
        }
        let mean_cost = (0..record.queries.len())
            .map(|q| {
                let v: Vec<f64> = record
                    .observations
                    .iter()
                    .filter(|o| o.status == EvalStatus::Ok)
                    .filter_map(|o| o.cost[q])
                    .collect();
                mean(&v)
            })
            .collect();
        Self {
            space: space.clone(),
            record,
            index,
            candidates,
            mean_cost,
        }
    }

    pub fn record(&self) -> &TaskRecord {
        &self.record
    }
}

impl Evaluator for ReplayEvaluator {
    fn space(&self) -> &ConfigSpace {
        &self.space
    }

    fn queries(&self) -> &[String] {
        &self.record.queries
    }

    fn evaluate(
        &self,
        cfg: &Configuration,
        subset: &[usize],
        guard: &mut dyn FnMut(f64) -> StopDecision,
    ) -> Result<EvaluationResult, EvalError> {
        let nq = self.record.queries.len();
        check_subset(subset, nq)?;
        let hits = self.index.get(&cfg.key()).ok_or(EvalError::NotInTrace)?;
        let covers = |i: &&usize| {
            let o = &self.record.observations[**i];
            o.status == EvalStatus::Ok && subset.iter().all(|&q| o.latency[q].is_some())
        };
        let Some(&hit) = hits.iter().find(covers) else {
            if hits
                .iter()
                .any(|&i| self.record.observations[i].status == EvalStatus::Failed)
            {
                return Ok(EvaluationResult {
                    latency: vec![None; nq],
                    cost: vec![None; nq],
                    status: EvalStatus::Failed,
                    wall_cost: subset.iter().map(|&q| self.mean_cost[q]).sum(),
                });
            }
            return Err(EvalError::NotInTrace);
        };
        let obs = &self.record.observations[hit];
        let mut latency = vec![None; nq];
        let mut cost = vec![None; nq];
        let mut wall = 0.0;
        let mut status = EvalStatus::Ok;
        for (pos, &q) in subset.iter().enumerate() {
            latency[q] = obs.latency[q];
            cost[q] = obs.cost[q].or(obs.latency[q]);
            wall += cost[q].unwrap_or(0.0);
            if pos + 1 < subset.len() && guard(wall) == StopDecision::Terminate {
                status = EvalStatus::EarlyStopped;
                break;
            }
        }
        Ok(EvaluationResult {
            latency,
            cost,
            status,
            wall_cost: wall,
        })
    }

    fn candidate_pool(&self) -> Option<&[Configuration]> {
        Some(&self.candidates)
    }
}
