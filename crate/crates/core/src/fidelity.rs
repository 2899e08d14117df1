//! Fidelity levels as representative query subsets.
//!
//! A level with budget fraction `delta` runs only a subset of the workload's
//! queries whose mean cost share fits in `delta`. Subsets are picked greedily
//! to keep the aggregated latency ranking of source configurations close to
//! the full-workload ranking, measured by weighted Kendall tau.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kendall::kendall_tau;
use crate::task::TaskRecord;

/// Target observations needed before an online plan can be built.
pub const MIN_ONLINE_OBSERVATIONS: usize = 10;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FidelityError {
    #[error("task `{task}` has {got} queries, expected {expected}")]
    QueryMismatch { task: String, expected: usize, got: usize },
    #[error("no usable source for a fidelity plan")]
    NoSource,
    #[error("delta must lie in (0, 1], got {0}")]
    InvalidDelta(f64),
    #[error("max resource {resource} is not a positive power of eta {eta}")]
    InvalidResource { eta: u32, resource: u32 },
    #[error("empty query list")]
    NoQueries,
}

/// Latency matrix of one source: complete ok runs only.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceMatrix {
    pub weight: f64,
    /// `rows[config][query]` latency in seconds.
    pub rows: Vec<Vec<f64>>,
}

impl SourceMatrix {
    pub fn from_record(task: &TaskRecord, weight: f64) -> Self {
        Self {
            weight,
            rows: task
                .observations
                .iter()
                .filter_map(|o| o.complete_latencies())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryCostProfile {
    /// Weighted mean share of total cost per query; sums to 1.
    pub ratios: Vec<f64>,
}

impl QueryCostProfile {
    pub fn cost(&self, subset: &[usize]) -> f64 {
        subset.iter().map(|&q| self.ratios[q]).sum()
    }
}

fn check_queries(task: &TaskRecord, queries: &[String]) -> Result<(), FidelityError> {
    if task.queries != queries {
        return Err(FidelityError::QueryMismatch {
            task: task.task_id.clone(),
            expected: queries.len(),
            got: task.queries.len(),
        });
    }
    Ok(())
}

/// Per-task cost share of each query over its complete ok runs.
fn task_cost_shares(task: &TaskRecord) -> Option<Vec<f64>> {
    let nq = task.queries.len();
    let mut totals = vec![0.0; nq];
    for o in &task.observations {
        let Some(c) = o.complete_costs().or_else(|| o.complete_latencies()) else {
            continue;
        };
        totals.iter_mut().zip(c).for_each(|(t, v)| *t += v);
    }
    let sum: f64 = totals.iter().sum();
    (sum > 0.0).then(|| totals.iter().map(|t| t / sum).collect())
}

/// Weighted average cost ratio of every query across sources.
pub fn cost_profile(sources: &[(&TaskRecord, f64)], queries: &[String]) -> Result<QueryCostProfile, FidelityError> {
    if queries.is_empty() {
        return Err(FidelityError::NoQueries);
    }
    let mut ratios = vec![0.0; queries.len()];
    let mut total_w = 0.0;
    for (task, w) in sources {
        check_queries(task, queries)?;
        if *w <= 0.0 {
            continue;
        }
        let Some(shares) = task_cost_shares(task) else {
            continue;
        };
        total_w += w;
        ratios.iter_mut().zip(shares).for_each(|(r, s)| *r += w * s);
    }
    if total_w <= 0.0 {
        return Err(FidelityError::NoSource);
    }
    ratios.iter_mut().for_each(|r| *r /= total_w);
    Ok(QueryCostProfile { ratios })
}

/// Kendall tau between subset-aggregated and full-aggregated latency; 0 when
/// undefined.
pub fn subset_correlation(subset: &[usize], source: &SourceMatrix) -> f64 {
    if subset.is_empty() || source.rows.len() < 3 {
        return 0.0;
    }
    let part: Vec<f64> = source.rows.iter().map(|r| subset.iter().map(|&q| r[q]).sum()).collect();
    let full: Vec<f64> = source.rows.iter().map(|r| r.iter().sum()).collect();
    kendall_tau(&part, &full).map(|k| k.tau).unwrap_or(0.0)
}

/// Weighted correlation over sources, with weights normalized to sum to 1.
pub fn weighted_correlation(subset: &[usize], sources: &[SourceMatrix]) -> f64 {
    let total: f64 = sources.iter().map(|s| s.weight).sum();
    if total <= 0.0 {
        return 0.0;
    }
    sources
        .iter()
        .map(|s| s.weight * subset_correlation(subset, s))
        .sum::<f64>()
        / total
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub queries: Vec<usize>,
    pub tau: f64,
    pub cost_ratio: f64,
    /// No query fit the budget; the cheapest one was taken anyway.
    pub overrun: bool,
}

/// One greedy pass: repeatedly add the feasible query with the highest
/// weighted tau (ties: cheaper). Also returns the smallest budget at which
/// every feasibility test of the pass still succeeds; below it the pass
/// would take a different path.
fn greedy_pass(
    profile: &QueryCostProfile,
    sources: &[SourceMatrix],
    delta: f64,
    memo: &mut HashMap<Vec<bool>, f64>,
) -> (Vec<usize>, f64, f64, f64) {
    let nq = profile.ratios.len();
    let mut chosen: Vec<usize> = Vec::new();
    let mut in_set = vec![false; nq];
    let mut cost = 0.0;
    let mut tau = 0.0;
    let mut floor = 0.0f64;
    loop {
        let feasible: Vec<usize> = (0..nq)
            .filter(|&q| !in_set[q] && cost + profile.ratios[q] <= delta + EPS)
            .collect();
        if feasible.is_empty() {
            break;
        }
        for &q in &feasible {
            floor = floor.max(cost + profile.ratios[q]);
        }
        let key = |q: usize| {
            let mut k = in_set.clone();
            k[q] = true;
            k
        };
        let missing: Vec<usize> = feasible
            .iter()
            .copied()
            .filter(|&q| !memo.contains_key(&key(q)))
            .collect();
        let fresh: Vec<(usize, f64)> = missing
            .par_iter()
            .map(|&q| {
                let mut s = chosen.clone();
                s.push(q);
                (q, weighted_correlation(&s, sources))
            })
            .collect();
        for (q, t) in fresh {
            memo.insert(key(q), t);
        }
        let scored: Vec<(usize, f64)> = feasible.iter().map(|&q| (q, memo[&key(q)])).collect();
        let (q, t) = scored
            .into_iter()
            .reduce(|a, b| {
                let better =
                    b.1 > a.1 + 1e-12 || ((b.1 - a.1).abs() <= 1e-12 && profile.ratios[b.0] < profile.ratios[a.0]);
                if better {
                    b
                } else {
                    a
                }
            })
            .expect("feasible is non-empty");
        chosen.push(q);
        in_set[q] = true;
        cost += profile.ratios[q];
        tau = t;
    }
    (chosen, tau, cost, floor)
}

/// Greedy subset selection under a cost-share budget.
///
/// A single greedy pass is not monotone in `delta`: a larger budget can
/// admit an early expensive pick that crowds out a better combination. So
/// every distinct pass reachable with a budget up to `delta` is run (there
/// are finitely many, one per feasibility breakpoint) and the best subset
/// is kept, ties going to the lower cost.
pub fn greedy_select(
    profile: &QueryCostProfile,
    sources: &[SourceMatrix],
    delta: f64,
) -> Result<Selection, FidelityError> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(FidelityError::InvalidDelta(delta));
    }
    let nq = profile.ratios.len();
    if nq == 0 {
        return Err(FidelityError::NoQueries);
    }
    let mut best: Option<(Vec<usize>, f64, f64)> = None;
    let mut budget = delta;
    let mut memo = HashMap::new();
    loop {
        let (chosen, tau, cost, floor) = greedy_pass(profile, sources, budget, &mut memo);
        if chosen.is_empty() {
            break;
        }
        let better = match &best {
            None => true,
            Some((_, bt, bc)) => tau > bt + 1e-12 || ((tau - bt).abs() <= 1e-12 && cost < bc - 1e-12),
        };
        if better {
            best = Some((chosen, tau, cost));
        }
        // Just below the breakpoint, the pass changes.
        budget = floor - 2.0 * EPS;
        if budget <= 0.0 {
            break;
        }
    }
    let Some((mut chosen, tau, cost)) = best else {
        let q = (0..nq)
            .min_by(|&a, &b| profile.ratios[a].total_cmp(&profile.ratios[b]))
            .expect("nq > 0");
        log::warn!(
            "no query fits fidelity budget {delta:.4}; taking cheapest query {q} (cost ratio {:.4})",
            profile.ratios[q]
        );
        return Ok(Selection {
            queries: vec![q],
            tau: weighted_correlation(&[q], sources),
            cost_ratio: profile.ratios[q],
            overrun: true,
        });
    };
    chosen.sort_unstable();
    Ok(Selection {
        queries: chosen,
        tau,
        cost_ratio: cost,
        overrun: false,
    })
}

/// The first queries in workload order whose cost share fits `delta`
/// (at least one). A comparison strategy, not used by the tuner.
pub fn prefix_select(profile: &QueryCostProfile, delta: f64) -> Vec<usize> {
    let mut cost = 0.0;
    let mut out = Vec::new();
    for (q, &c) in profile.ratios.iter().enumerate() {
        if !out.is_empty() && cost + c > delta + EPS {
            break;
        }
        cost += c;
        out.push(q);
    }
    out
}

/// Budget fractions `eta^-s_max, ..., eta^-1, 1` for max resource `r`.
pub fn delta_levels(eta: u32, r: u32) -> Result<Vec<f64>, FidelityError> {
    let bad = FidelityError::InvalidResource { eta, resource: r };
    if eta < 2 || r == 0 {
        return Err(bad);
    }
    let mut s_max = 0u32;
    let mut p = 1u32;
    while p < r {
        p = p.checked_mul(eta).ok_or(bad.clone())?;
        s_max += 1;
    }
    if p != r {
        return Err(bad);
    }
    Ok((0..=s_max).rev().map(|s| 1.0 / f64::from(eta).powi(s as i32)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceMode {
    Historical,
    Online,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityLevel {
    pub delta: f64,
    /// Query ids.
    pub queries: Vec<String>,
    pub cost_ratio: f64,
    pub tau: f64,
    #[serde(skip)]
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityPlan {
    pub levels: Vec<FidelityLevel>,
    pub source_mode: SourceMode,
}

impl FidelityPlan {
    /// Level whose delta matches within 1e-9.
    pub fn level(&self, delta: f64) -> Option<&FidelityLevel> {
        self.levels.iter().find(|l| (l.delta - delta).abs() < EPS)
    }

    /// Query indices run at `delta`; the full workload when no level matches.
    pub fn subset(&self, delta: f64, n_queries: usize) -> Vec<usize> {
        match self.level(delta) {
            Some(l) => l.indices.clone(),
            None => (0..n_queries).collect(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// Parses a plan and resolves query ids against `queries`.
    pub fn from_json_str(text: &str, queries: &[String]) -> Result<Self, String> {
        let mut plan: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        for l in &mut plan.levels {
            l.indices = l
                .queries
                .iter()
                .map(|id| {
                    queries
                        .iter()
                        .position(|q| q == id)
                        .ok_or_else(|| format!("unknown query `{id}`"))
                })
                .collect::<Result<_, _>>()?;
        }
        Ok(plan)
    }
}

/// Where plan statistics come from.
#[derive(Debug, Clone, Copy)]
pub enum PlanSource<'a> {
    /// Similarity-weighted historical tasks sharing the query list.
    Historical(&'a [(&'a TaskRecord, f64)]),
    /// The target task's own complete observations.
    Online(&'a TaskRecord),
}

/// Builds one level per budget fraction; the top level is the full workload.
pub fn build_plan(queries: &[String], eta: u32, r: u32, source: PlanSource<'_>) -> Result<FidelityPlan, FidelityError> {
    let deltas = delta_levels(eta, r)?;
    let (usable, mode): (Vec<(&TaskRecord, f64)>, SourceMode) = match source {
        PlanSource::Historical(list) => (
            list.iter()
                .filter(|(t, w)| *w > 0.0 && t.queries == queries)
                .map(|(t, w)| (*t, *w))
                .collect(),
            SourceMode::Historical,
        ),
        PlanSource::Online(target) => {
            check_queries(target, queries)?;
            let n = target
                .observations
                .iter()
                .filter(|o| o.is_full() && o.complete_latencies().is_some())
                .count();
            if n < MIN_ONLINE_OBSERVATIONS {
                return Err(FidelityError::NoSource);
            }
            (vec![(target, 1.0)], SourceMode::Online)
        }
    };
    let matrices: Vec<SourceMatrix> = usable
        .iter()
        .map(|(t, w)| SourceMatrix::from_record(t, *w))
        .filter(|m| m.rows.len() >= 3)
        .collect();
    if matrices.is_empty() {
        return Err(FidelityError::NoSource);
    }
    let profile = cost_profile(&usable, queries)?;
    let mut levels = Vec::with_capacity(deltas.len());
    for &delta in &deltas {
        let (indices, cost_ratio, tau) = if delta >= 1.0 {
            ((0..queries.len()).collect(), 1.0, 1.0)
        } else {
            let s = greedy_select(&profile, &matrices, delta)?;
            (s.queries, s.cost_ratio, s.tau)
        };
        levels.push(FidelityLevel {
            delta,
            queries: indices.iter().map(|&q| queries[q].clone()).collect(),
            cost_ratio,
            tau,
            indices,
        });
    }
    Ok(FidelityPlan {
        levels,
        source_mode: mode,
    })
}
