//! The tuning loop.
//!
//! Each iteration refreshes task similarities, rebuilds the compressed
//! space, proposes a batch and evaluates it (a Hyperband bracket once a
//! fidelity plan exists, full-fidelity batches before that), then persists
//! the new observations.

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use serde_json::json;
use thiserror::Error;

use crate::compression::{
    compress_from_sets, extract_promising_values, CompressedSpace, CompressionParams, PromisingValueSet,
};
use crate::evaluator::Evaluator;
use crate::fidelity::{build_plan, FidelityPlan, PlanSource};
use crate::generator::{build_warm_start_pool, phase1_config, propose_batch, ProposalContext, WarmStartPool};
use crate::kendall::KendallTau;
use crate::scheduler::{
    evaluate_batch, hyperband_schedule, run_bracket, select_mode, Mode, ModeSignals, RunLedger, RunOptions,
};
use crate::similarity::{
    cross_validated_tau, fit_meta_regressor, model_similarity, predict_similarity, task_similarity, to_weights,
    SimilarityMode, SimilarityReport, SimilarityTracker, SourceSimilarity, SELF_WEIGHT_FOLDS,
};
use crate::space::{lhs_sample, ConfigSpace, Configuration, SubSpace};
use crate::stats::mix_seed;
use crate::store::{CurrentTask, StoreError};
use crate::surrogate::{ObservationSet, SurrogateModel};
use crate::task::{EvalStatus, MetaFeature, TaskRecord};

/// LHS configurations evaluated before the target surrogate is trusted.
pub const INITIAL_DESIGN: usize = 5;
/// Ok observations needed at a low fidelity before it gets a surrogate.
pub const FIDELITY_MODEL_MIN: usize = 5;

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("workload has no queries")]
    NoQueries,
    #[error("budget must be positive")]
    NoBudget,
    #[error("invalid max resource or eta: {0}")]
    Schedule(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("writing {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneConfig {
    pub alpha: f64,
    pub eta: u32,
    pub max_resource: u32,
    /// Simulated seconds of evaluation cost.
    pub budget_s: f64,
    pub wall_budget: Option<Duration>,
    /// Checked between iterations, so a bracket in flight may overshoot.
    pub max_evaluations: Option<usize>,
    /// Stop once the best full-fidelity latency is at or below this.
    pub stop_at: Option<f64>,
    pub seed: u64,
    pub parallelism: usize,
    pub shap_tolerance: f64,
    pub enable_transfer: bool,
    pub enable_compression: bool,
    pub enable_mfo: bool,
    pub enable_warm_start: bool,
    pub enable_early_stop: bool,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            alpha: 0.65,
            eta: 3,
            max_resource: 9,
            budget_s: f64::INFINITY,
            wall_budget: None,
            max_evaluations: None,
            stop_at: None,
            seed: 0,
            parallelism: 1,
            shap_tolerance: 0.0,
            enable_transfer: true,
            enable_compression: true,
            enable_mfo: true,
            enable_warm_start: true,
            enable_early_stop: true,
        }
    }
}

/// Identity of the task being tuned.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTask {
    pub task_id: String,
    pub meta: MetaFeature,
}

#[derive(Debug, Clone)]
pub struct TuneReport {
    pub ledger: RunLedger,
    pub best: Option<(Configuration, f64)>,
    pub plan: Option<FidelityPlan>,
    pub compressed: Option<CompressedSpace>,
    pub similarity: Option<SimilarityReport>,
    /// `(iteration, mode)` each time the mode changed.
    pub mode_changes: Vec<(usize, Mode)>,
    pub iterations: usize,
}

/// History tasks usable against `space`, with fitted surrogates.
fn prepare_sources(history: Vec<TaskRecord>, space: &ConfigSpace, seed: u64) -> Vec<TaskRecord> {
    let mut out = Vec::new();
    for (i, mut t) in history.into_iter().enumerate() {
        if t.observations.iter().any(|o| o.config.len() != space.len()) {
            log::warn!("skipping history task `{}`: configuration width mismatch", t.task_id);
            continue;
        }
        if t.surrogate.is_none() && t.fit_surrogate(space, mix_seed(seed, 100 + i as u64)).is_err() {
            log::warn!("skipping history task `{}`: too few observations", t.task_id);
            continue;
        }
        out.push(t);
    }
    out
}

fn target_record(
    target: &TargetTask,
    queries: &[String],
    ledger: &RunLedger,
    space: &ConfigSpace,
    seed: u64,
) -> TaskRecord {
    let mut t = TaskRecord::new(&target.task_id, target.meta.clone(), queries.to_vec());
    t.observations = ledger.entries().iter().map(|e| e.to_observation()).collect();
    let _ = t.fit_surrogate(space, seed);
    t
}

/// Surrogates over aggregated subset latency for each low fidelity level.
fn fidelity_models(plan: &FidelityPlan, ledger: &RunLedger, space: &ConfigSpace, seed: u64) -> Vec<SurrogateModel> {
    plan.levels
        .iter()
        .filter(|l| l.delta < 1.0)
        .filter_map(|l| {
            let mut set = ObservationSet::new();
            for e in ledger.entries().iter().filter(|e| (e.delta - l.delta).abs() < 1e-9) {
                let y = match e.result.status {
                    EvalStatus::Ok => e.result.aggregate_latency(),
                    EvalStatus::EarlyStopped => e.result.aggregate_latency(),
                    EvalStatus::Failed => f64::NAN,
                };
                set.push(e.config.clone(), y, l.delta, e.result.status);
            }
            let ok = set.entries.iter().filter(|p| p.status == EvalStatus::Ok).count();
            if ok < FIDELITY_MODEL_MIN {
                return None;
            }
            SurrogateModel::fit(&set, space, mix_seed(seed, (l.delta * 1e6) as u64)).ok()
        })
        .collect()
}

/// Growth of the target's full-fidelity set that triggers refreshing its
/// cross-validated tau and promising values.
const REFRESH_GROWTH: f64 = 1.2;

fn refresh_due(n: usize, last: usize) -> bool {
    n > last && (last == 0 || n as f64 >= last as f64 * REFRESH_GROWTH)
}

struct Weights {
    sources: Vec<f64>,
    fidelity: Vec<f64>,
    target: f64,
}

/// Runs the tuning loop until the budget is spent.
pub fn tune(
    evaluator: &dyn Evaluator,
    history: Vec<TaskRecord>,
    target: &TargetTask,
    cfg: &TuneConfig,
    mut sink: Option<&mut CurrentTask>,
) -> Result<TuneReport, TuneError> {
    let space = evaluator.space().clone();
    let queries = evaluator.queries().to_vec();
    if queries.is_empty() {
        return Err(TuneError::NoQueries);
    }
    if cfg.budget_s.is_nan() || cfg.budget_s <= 0.0 {
        return Err(TuneError::NoBudget);
    }
    if cfg.eta < 2 || cfg.max_resource < 1 {
        return Err(TuneError::Schedule(format!("eta {} R {}", cfg.eta, cfg.max_resource)));
    }
    let started = Instant::now();
    let seed = cfg.seed;
    let sources = if cfg.enable_transfer {
        prepare_sources(history, &space, seed)
    } else {
        Vec::new()
    };
    let predicted: Vec<f64> = match fit_meta_regressor(&sources, &space, mix_seed(seed, 11)) {
        Ok(reg) => sources
            .iter()
            .map(|s| predict_similarity(&reg, &s.meta, &target.meta))
            .collect(),
        // Fewer than two fitted sources: treat them as equally similar.
        Err(_) => vec![1.0; sources.len()],
    };
    let brackets = hyperband_schedule(cfg.max_resource, cfg.eta);
    let full = SubSpace::full(&space);
    let mut init_design = lhs_sample(&full, INITIAL_DESIGN, mix_seed(seed, 3)).unwrap_or_default();
    init_design.reverse();

    let mut ledger = RunLedger::new();
    let mut tracker = SimilarityTracker::new();
    let mut mode: Option<Mode> = None;
    let mut mode_changes = Vec::new();
    let mut plan: Option<FidelityPlan> = None;
    let mut historical_plan_tried = false;
    let mut online_plan_tried = false;
    let mut pool: Option<WarmStartPool> = None;
    let mut phase1_done = false;
    let mut bracket_cursor = 0usize;
    let mut compressed: Option<CompressedSpace> = None;
    let mut last_report: Option<SimilarityReport> = None;
    let comp_params = CompressionParams {
        alpha: cfg.alpha,
        shap_tolerance: cfg.shap_tolerance,
    };
    // Source surrogates never change, so their promising sets are computed once.
    let source_sets: Vec<Option<Vec<PromisingValueSet>>> = sources
        .iter()
        .map(|s| extract_promising_values(s, 1.0, &comp_params).ok())
        .collect();
    let mut target_sets: Option<Vec<PromisingValueSet>> = None;
    let mut cv: Option<KendallTau> = None;
    let mut refreshed_at = 0usize;
    let mut persisted = 0usize;
    let mut iteration = 0usize;

    loop {
        if ledger.elapsed() >= cfg.budget_s
            || cfg.max_evaluations.is_some_and(|m| ledger.entries().len() >= m)
            || cfg.wall_budget.is_some_and(|w| started.elapsed() >= w)
            || cfg.stop_at.is_some_and(|t| ledger.best().is_some_and(|(_, f)| f <= t))
        {
            break;
        }
        let iter_seed = mix_seed(seed, 1000 + iteration as u64);
        let target_rec = target_record(target, &queries, &ledger, &space, iter_seed);
        let target_obs = target_rec.full_fidelity_set();

        // Similarity.
        let measured: Vec<(f64, Option<f64>)> = sources
            .iter()
            .map(|s| match task_similarity(s, &target_obs) {
                Ok(k) => (k.tau, Some(k.p_value)),
                Err(_) => (0.0, None),
            })
            .collect();
        let refresh = refresh_due(target_obs.len(), refreshed_at);
        if refresh {
            refreshed_at = target_obs.len();
            cv = cross_validated_tau(&target_obs, &space, SELF_WEIGHT_FOLDS, mix_seed(iter_seed, 1));
        }
        let target_tau = cv.map_or(0.0, |k| k.tau);
        let p_values: Vec<f64> = if sources.is_empty() {
            cv.map(|k| k.p_value).into_iter().collect()
        } else {
            measured.iter().map(|m| m.1.unwrap_or(1.0)).collect()
        };
        tracker.observe(&p_values, iteration);
        let sims: Vec<f64> = match tracker.mode() {
            SimilarityMode::Predicted => predicted.clone(),
            SimilarityMode::Kendall => measured.iter().map(|m| m.0).collect(),
        };
        let fid_models = match &plan {
            Some(p) if mode == Some(Mode::FullMfo) => fidelity_models(p, &ledger, &space, iter_seed),
            _ => Vec::new(),
        };
        let fid_taus: Vec<f64> = fid_models
            .iter()
            .map(|m| model_similarity(m, &target_obs).map_or(0.0, |k| k.tau))
            .collect();
        let all: Vec<f64> = sims.iter().chain(&fid_taus).copied().collect();
        let tw = to_weights(&all, target_tau);
        let weights = Weights {
            sources: tw.sources[..sources.len()].to_vec(),
            fidelity: tw.sources[sources.len()..].to_vec(),
            target: tw.target,
        };
        last_report = Some(SimilarityReport {
            sources: sources
                .iter()
                .zip(&sims)
                .zip(&measured)
                .map(|((s, &tau), m)| SourceSimilarity {
                    task_id: s.task_id.clone(),
                    tau,
                    p_value: m.1,
                })
                .collect(),
            target_tau,
            weights: to_weights(&sims, target_tau),
            mode: tracker.mode(),
        });
        let weighted_sources: Vec<(&TaskRecord, f64)> =
            sources.iter().zip(&weights.sources).map(|(s, &w)| (s, w)).collect();

        // Fidelity plan, computed once per source mode.
        if cfg.enable_mfo && plan.is_none() {
            if !historical_plan_tried && sources.iter().any(|s| s.queries == queries) {
                historical_plan_tried = true;
                // With every similarity non-positive, fall back to equal weights.
                let any = weighted_sources.iter().any(|s| s.1 > 0.0);
                let same: Vec<(&TaskRecord, f64)> = weighted_sources
                    .iter()
                    .map(|&(s, w)| (s, if any { w } else { 1.0 }))
                    .collect();
                plan = build_plan(&queries, cfg.eta, cfg.max_resource, PlanSource::Historical(&same)).ok();
            }
            if plan.is_none()
                && !online_plan_tried
                && tracker.mode() == SimilarityMode::Kendall
                && mode.is_some_and(|m| m >= Mode::FullFidelityBo)
            {
                match build_plan(&queries, cfg.eta, cfg.max_resource, PlanSource::Online(&target_rec)) {
                    Ok(p) => plan = Some(p),
                    Err(e) => log::debug!("online fidelity plan not ready: {e}"),
                }
                online_plan_tried = plan.is_some();
            }
        }

        let signals = ModeSignals {
            history: !sources.is_empty(),
            transition: tracker.mode() == SimilarityMode::Kendall,
            plan: plan.is_some(),
        };
        let next = select_mode(mode, signals);
        if mode != Some(next) {
            mode_changes.push((iteration, next));
            log::info!("iteration {iteration}: mode {}", next.as_str());
        }
        mode = Some(next);
        let m = next;

        // Compression.
        if refresh || target_sets.is_none() {
            target_sets = extract_promising_values(&target_rec, 1.0, &comp_params).ok();
        }
        let mut comp_sources: Vec<(&[PromisingValueSet], f64)> = source_sets
            .iter()
            .zip(&weights.sources)
            .filter_map(|(s, &w)| s.as_deref().filter(|_| w > 0.0).map(|s| (s, w)))
            .collect();
        // The target only refines a space that history already shaped; on its
        // own, its early surrogate narrows away good regions.
        if let (Some(ts), true) = (target_sets.as_deref(), weights.target > 0.0 && !comp_sources.is_empty()) {
            comp_sources.push((ts, weights.target));
        }
        let subspace = if cfg.enable_compression && m != Mode::VanillaBo && !comp_sources.is_empty() {
            let c = compress_from_sets(&comp_sources, &space, &comp_params);
            let s = c.subspace.clone();
            compressed = Some(c);
            s
        } else {
            full.clone()
        };

        // Surrogates for rank aggregation.
        let mut models: Vec<(&SurrogateModel, f64)> = Vec::new();
        if m != Mode::VanillaBo {
            for (s, &w) in sources.iter().zip(&weights.sources) {
                if let (Some(model), true) = (s.surrogate.as_ref(), w > 0.0) {
                    models.push((model, w));
                }
            }
            for (fm, &w) in fid_models.iter().zip(&weights.fidelity) {
                if w > 0.0 {
                    models.push((fm, w));
                }
            }
        }
        if let Some(ts) = target_rec.surrogate.as_ref() {
            let w = if m == Mode::VanillaBo || models.is_empty() {
                1.0
            } else {
                weights.target
            };
            if w > 0.0 && target_obs.len() >= INITIAL_DESIGN {
                models.push((ts, w));
            }
        }

        let mut elites: Vec<(f64, Configuration)> = target_rec
            .full_fidelity()
            .into_iter()
            .map(|(o, f)| (f, o.config.clone()))
            .collect();
        elites.sort_by(|a, b| a.0.total_cmp(&b.0));
        let elites: Vec<Configuration> = elites.into_iter().map(|e| e.1).collect();
        let evaluated: HashSet<Vec<u64>> = ledger.entries().iter().map(|e| e.config.key()).collect();
        let ctx = ProposalContext {
            space: &subspace,
            models: &models,
            elites: &elites,
            candidate_pool: evaluator.candidate_pool(),
            evaluated: &evaluated,
        };
        let opts = RunOptions {
            budget_s: cfg.budget_s,
            parallelism: cfg.parallelism,
            early_stop: cfg.enable_early_stop && m == Mode::FullMfo,
            mode: m,
        };
        let before = ledger.entries().len();
        let all_queries: Vec<usize> = (0..queries.len()).collect();

        if !phase1_done && !sources.is_empty() && cfg.enable_warm_start {
            phase1_done = true;
            // Replay can only run configurations the trace holds.
            let permitted: Option<HashSet<Vec<u64>>> = evaluator
                .candidate_pool()
                .map(|p| p.iter().map(Configuration::key).collect());
            let allowed = |c: &Configuration| permitted.as_ref().is_none_or(|p| p.contains(&c.key()));
            let first = phase1_config(&weighted_sources).filter(|(c, _)| allowed(c));
            if let Some((c, src)) = &first {
                log::info!("phase-1 warm start from `{src}`");
                evaluate_batch(
                    std::slice::from_ref(c),
                    1.0,
                    &all_queries,
                    None,
                    0,
                    evaluator,
                    &mut ledger,
                    &opts,
                );
            }
            let mut p = build_warm_start_pool(&weighted_sources, first.as_ref().map(|f| &f.0));
            p.retain_pending(|e| allowed(&e.config));
            pool = Some(p);
        }
        if ledger.entries().len() > before {
            // Phase 1 used this iteration.
        } else if m == Mode::FullMfo {
            let bracket = &brackets[bracket_cursor % brackets.len()];
            bracket_cursor += 1;
            let mut empty = WarmStartPool::default();
            let p = if cfg.enable_warm_start {
                pool.as_mut().unwrap_or(&mut empty)
            } else {
                &mut empty
            };
            let batch = propose_batch(
                bracket.n1(),
                bracket.survivors(),
                bracket.rungs.len(),
                p,
                &ctx,
                iter_seed,
            );
            run_bracket(bracket, &batch.configs, plan.as_ref(), evaluator, &mut ledger, &opts);
        } else {
            let n = cfg.parallelism.max(1);
            let batch: Vec<Configuration> =
                if models.is_empty() && evaluator.candidate_pool().is_none() && !init_design.is_empty() {
                    (0..n).filter_map(|_| init_design.pop()).collect()
                } else {
                    let mut empty = WarmStartPool::default();
                    propose_batch(n, 0, 1, &mut empty, &ctx, iter_seed).configs
                };
            evaluate_batch(&batch, 1.0, &all_queries, None, 0, evaluator, &mut ledger, &opts);
        }

        if let Some(s) = sink.as_deref_mut() {
            for e in &ledger.entries()[persisted..] {
                s.append(e.to_observation())?;
            }
            persisted = ledger.entries().len();
        }
        iteration += 1;
        if ledger.entries().len() == before {
            break;
        }
    }

    let best = ledger.best().map(|(e, f)| (e.config.clone(), f));
    Ok(TuneReport {
        ledger,
        best,
        plan,
        compressed,
        similarity: last_report,
        mode_changes,
        iterations: iteration,
    })
}

fn write(path: &Path, text: &str) -> Result<(), TuneError> {
    fs::write(path, text).map_err(|source| TuneError::Output {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `convergence.csv`, `best_config.json`, `fidelity_plan.json` and
/// `compressed_space.json` into `dir`.
pub fn write_outputs(dir: &Path, report: &TuneReport, space: &ConfigSpace) -> Result<(), TuneError> {
    fs::create_dir_all(dir).map_err(|source| TuneError::Output {
        path: dir.display().to_string(),
        source,
    })?;
    write(&dir.join("convergence.csv"), &report.ledger.to_csv())?;
    let best = match &report.best {
        Some((c, f)) => json!({"config": space.config_to_json(c), "latency_s": f}),
        None => json!({"config": null, "latency_s": null}),
    };
    write(
        &dir.join("best_config.json"),
        &serde_json::to_string_pretty(&best).expect("json"),
    )?;
    let plan = match &report.plan {
        Some(p) => p.to_json_string(),
        None => serde_json::to_string_pretty(&json!({"levels": [], "source_mode": null})).expect("json"),
    };
    write(&dir.join("fidelity_plan.json"), &plan)?;
    let sub = match &report.compressed {
        Some(c) => c.subspace.to_json(),
        None => SubSpace::full(space).to_json(),
    };
    write(
        &dir.join("compressed_space.json"),
        &serde_json::to_string_pretty(&sub).expect("json"),
    )?;
    Ok(())
}
