//! Candidate proposal for each bracket.
//!
//! Part of every multi-rung batch comes from a warm-start pool of good
//! historical configurations; the rest is the head of a rank-aggregated
//! ordering of sampled candidates under every weighted surrogate.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::compression::promising_configs;
use crate::space::{mutate, random_sample, Configuration, SubSpace};
use crate::stats::{descending_ranks, mix_seed};
use crate::surrogate::{expected_improvement, SurrogateModel};
use crate::task::TaskRecord;

/// Random candidates scored per batch.
pub const CANDIDATE_SAMPLES: usize = 1000;
/// Best observed configurations that get mutated.
pub const ELITE_COUNT: usize = 5;
pub const MUTATIONS_PER_ELITE: usize = 10;
/// Per-knob mutation probability.
pub const MUTATION_STRENGTH: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    WarmStart,
    BoRanked,
    Random,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::WarmStart => "warm_start",
            Self::BoRanked => "bo_ranked",
            Self::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateBatch {
    pub configs: Vec<Configuration>,
    pub provenance: Vec<Provenance>,
}

impl CandidateBatch {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    fn push(&mut self, cfg: Configuration, p: Provenance) {
        self.configs.push(cfg);
        self.provenance.push(p);
    }

    pub fn count(&self, p: Provenance) -> usize {
        self.provenance.iter().filter(|&&x| x == p).count()
    }
}

/// Indices sorted by the weighted sum of per-voter descending ranks; ties
/// keep index order. `scores[m][i]` is voter `m`'s score of item `i`.
pub fn rank_aggregate(scores: &[Vec<f64>], weights: &[f64]) -> Vec<usize> {
    let n = scores.first().map_or(0, Vec::len);
    let mut combined = vec![0.0; n];
    for (s, &w) in scores.iter().zip(weights).filter(|p| *p.1 > 0.0) {
        for (r, rank) in combined.iter_mut().zip(descending_ranks(s)) {
            *r += w * rank;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| combined[a].total_cmp(&combined[b]));
    order
}

/// Candidate indices sorted by the weighted sum of per-model EI ranks.
///
/// Each model's EI uses the best objective in its own training data.
pub fn combined_rank(candidates: &[Configuration], models: &[(&SurrogateModel, f64)]) -> Vec<usize> {
    let active: Vec<&(&SurrogateModel, f64)> = models.iter().filter(|m| m.1 > 0.0).collect();
    let scores: Vec<Vec<f64>> = active
        .iter()
        .map(|(m, _)| {
            let best = m.best_objective();
            candidates
                .par_iter()
                .map(|c| expected_improvement(m, c, best))
                .collect()
        })
        .collect();
    if scores.is_empty() {
        return (0..candidates.len()).collect();
    }
    let weights: Vec<f64> = active.iter().map(|m| m.1).collect();
    rank_aggregate(&scores, &weights)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub config: Configuration,
    pub priority: f64,
    pub source: String,
}

/// Ranked union of above-median source configurations, consumed in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WarmStartPool {
    entries: Vec<PoolEntry>,
    cursor: usize,
}

impl WarmStartPool {
    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - self.cursor
    }

    /// Keeps the not-yet-drawn entries accepted by `keep`.
    pub fn retain_pending(&mut self, mut keep: impl FnMut(&PoolEntry) -> bool) {
        let mut i = 0;
        let cursor = self.cursor;
        self.entries.retain(|e| {
            i += 1;
            i <= cursor || keep(e)
        });
    }

    pub fn next_entry(&mut self) -> Option<&PoolEntry> {
        let e = self.entries.get(self.cursor)?;
        self.cursor += 1;
        Some(e)
    }
}

/// Builds the pool, leaving out `exclude` (the phase-1 configuration).
pub fn build_warm_start_pool(sources: &[(&TaskRecord, f64)], exclude: Option<&Configuration>) -> WarmStartPool {
    let skip = exclude.map(|c| c.key());
    let mut entries: Vec<PoolEntry> = Vec::new();
    let mut seen: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
    for (task, w) in sources {
        let p = promising_configs(task);
        for (cfg, f) in p.configs {
            let key = cfg.key();
            if skip.as_ref() == Some(&key) {
                continue;
            }
            let priority = w * (p.median - f) / p.median;
            match seen.get(&key) {
                Some(&i) if entries[i].priority >= priority => {}
                Some(&i) => {
                    entries[i].priority = priority;
                    entries[i].source = task.task_id.clone();
                }
                None => {
                    seen.insert(key, entries.len());
                    entries.push(PoolEntry {
                        config: cfg,
                        priority,
                        source: task.task_id.clone(),
                    });
                }
            }
        }
    }
    entries.sort_by(|a, b| b.priority.total_cmp(&a.priority).then_with(|| a.source.cmp(&b.source)));
    WarmStartPool { entries, cursor: 0 }
}

/// Best full-fidelity configuration of the highest-weight source (ties go
/// to the lower task id).
pub fn phase1_config(sources: &[(&TaskRecord, f64)]) -> Option<(Configuration, String)> {
    let mut ranked: Vec<&(&TaskRecord, f64)> = sources.iter().filter(|s| s.1 > 0.0).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.task_id.cmp(&b.0.task_id)));
    ranked.into_iter().find_map(|(t, _)| {
        t.best_full_fidelity()
            .map(|(o, _)| (o.config.clone(), t.task_id.clone()))
    })
}

/// Everything `propose_batch` needs besides the bracket shape.
#[derive(Debug, Clone, Copy)]
pub struct ProposalContext<'a> {
    pub space: &'a SubSpace,
    pub models: &'a [(&'a SurrogateModel, f64)],
    /// Best observed configurations, best first.
    pub elites: &'a [Configuration],
    /// Restricts proposals to these configurations (trace replay).
    pub candidate_pool: Option<&'a [Configuration]>,
    /// Keys of configurations already evaluated in this run.
    pub evaluated: &'a HashSet<Vec<u64>>,
}

fn candidate_set(ctx: &ProposalContext<'_>, rng: &mut ChaCha8Rng, seed: u64) -> Vec<Configuration> {
    if let Some(pool) = ctx.candidate_pool {
        return pool.to_vec();
    }
    let mut out = random_sample(ctx.space, CANDIDATE_SAMPLES, rng);
    for (e, elite) in ctx.elites.iter().take(ELITE_COUNT).enumerate() {
        for m in 0..MUTATIONS_PER_ELITE {
            out.push(mutate(
                elite,
                ctx.space,
                MUTATION_STRENGTH,
                mix_seed(seed, (e * MUTATIONS_PER_ELITE + m) as u64),
            ));
        }
    }
    out
}

/// Proposes `n1` distinct configurations for a bracket that carries
/// `survivors` configurations to full fidelity over `n_rungs` rungs.
pub fn propose_batch(
    n1: usize,
    survivors: usize,
    n_rungs: usize,
    pool: &mut WarmStartPool,
    ctx: &ProposalContext<'_>,
    seed: u64,
) -> CandidateBatch {
    let mut batch = CandidateBatch::default();
    let mut taken: HashSet<Vec<u64>> = HashSet::new();
    if n_rungs > 1 {
        let mut drawn = 0;
        while drawn < survivors.min(n1) {
            let Some(e) = pool.next_entry() else { break };
            drawn += 1;
            if taken.insert(e.config.key()) && !ctx.evaluated.contains(&e.config.key()) {
                batch.push(e.config.clone(), Provenance::WarmStart);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates = candidate_set(ctx, &mut rng, seed);
    let fresh =
        |c: &Configuration, taken: &HashSet<Vec<u64>>| !taken.contains(&c.key()) && !ctx.evaluated.contains(&c.key());
    let usable = ctx.models.iter().any(|m| m.1 > 0.0);
    let (order, prov) = if usable {
        (combined_rank(&candidates, ctx.models), Provenance::BoRanked)
    } else {
        ((0..candidates.len()).collect(), Provenance::Random)
    };
    for i in order {
        if batch.len() >= n1 {
            break;
        }
        if fresh(&candidates[i], &taken) {
            taken.insert(candidates[i].key());
            batch.push(candidates[i].clone(), prov);
        }
    }
    if let Some(trace) = ctx.candidate_pool {
        // Unseen trace configurations ran out: revisit evaluated ones, then repeat.
        for c in trace {
            if batch.len() >= n1 {
                break;
            }
            if taken.insert(c.key()) {
                batch.push(c.clone(), Provenance::Random);
            }
        }
        let mut i = 0;
        while batch.len() < n1 && !trace.is_empty() {
            batch.push(trace[i % trace.len()].clone(), Provenance::Random);
            i += 1;
        }
    } else {
        let mut attempts = 0;
        while batch.len() < n1 {
            attempts += 1;
            let c = random_sample(ctx.space, 1, &mut rng).remove(0);
            if (taken.insert(c.key()) && !ctx.evaluated.contains(&c.key())) || attempts > 100 * n1 {
                batch.push(c, Provenance::Random);
            }
        }
    }
    batch
}
