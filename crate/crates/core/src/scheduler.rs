//! Hyperband brackets, successive halving over fidelity subsets, median-cost
//! early stopping and the mode ladder.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::evaluator::{EvalError, EvaluationResult, Evaluator, StopDecision};
use crate::fidelity::FidelityPlan;
use crate::space::Configuration;
use crate::stats::median;
use crate::task::{EvalStatus, TaskObservation};

/// Same-fidelity ok evaluations needed before early stopping kicks in.
pub const EARLY_STOP_WARMUP: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Rung {
    pub n: usize,
    /// Resource units; `delta = r / R`.
    pub r: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bracket {
    pub s: u32,
    pub rungs: Vec<Rung>,
}

impl Bracket {
    pub fn n1(&self) -> usize {
        self.rungs[0].n
    }

    /// Configurations the bracket carries to its final rung.
    pub fn survivors(&self) -> usize {
        self.rungs.last().map_or(0, |r| r.n)
    }
}

/// Brackets `s = s_max ..= 0` for max resource `r_max` and rate `eta`.
pub fn hyperband_schedule(r_max: u32, eta: u32) -> Vec<Bracket> {
    assert!(r_max >= 1 && eta >= 2, "need R >= 1 and eta >= 2");
    let mut s_max = 0u32;
    while u64::from(eta).pow(s_max + 1) <= u64::from(r_max) {
        s_max += 1;
    }
    let r = f64::from(r_max);
    (0..=s_max)
        .rev()
        .map(|s| {
            let pow = u64::from(eta).pow(s);
            let n1 = ((u64::from(s_max) + 1) * pow).div_ceil(u64::from(s) + 1) as usize;
            let mut n = n1;
            let rungs = (0..=s)
                .map(|i| {
                    let ri = r * f64::from(eta).powi(i as i32) / pow as f64;
                    let rung = Rung {
                        n,
                        r: ri,
                        delta: ri / r,
                    };
                    n /= eta as usize;
                    rung
                })
                .collect();
            Bracket { s, rungs }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    VanillaBo,
    FullFidelityBo,
    FullMfo,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::VanillaBo => "vanilla_bo",
            Self::FullFidelityBo => "full_fidelity_bo",
            Self::FullMfo => "full_mfo",
        }
    }
}

/// What the controller knows when it picks a mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ModeSignals {
    /// Historical tasks usable for transfer and compression.
    pub history: bool,
    /// The similarity transition rule has fired.
    pub transition: bool,
    /// A fidelity plan exists.
    pub plan: bool,
}

/// Next mode; upgrades are one-way and move at most one step per call.
pub fn select_mode(current: Option<Mode>, sig: ModeSignals) -> Mode {
    let informed = sig.history || sig.transition;
    let target = match (informed, sig.plan) {
        (true, true) => Mode::FullMfo,
        (true, false) => Mode::FullFidelityBo,
        (false, _) => Mode::VanillaBo,
    };
    match current {
        None => target,
        Some(cur) if target <= cur => cur,
        Some(Mode::VanillaBo) => Mode::FullFidelityBo,
        Some(_) => Mode::FullMfo,
    }
}

/// One evaluation in the run.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub config_id: usize,
    pub config: Configuration,
    pub delta: f64,
    pub subset: Vec<usize>,
    pub bracket: Option<u32>,
    pub rung: usize,
    pub result: EvaluationResult,
    /// Run time in simulated seconds when this evaluation finished.
    pub elapsed_s: f64,
    /// Best full-fidelity ok latency after this evaluation.
    pub best_full_fidelity_s: Option<f64>,
    pub mode: Mode,
}

impl LedgerEntry {
    /// Aggregate latency over the evaluated subset; `None` unless ok.
    pub fn objective(&self) -> Option<f64> {
        (self.result.status == EvalStatus::Ok).then(|| self.result.aggregate_latency())
    }

    pub fn is_full(&self) -> bool {
        self.delta >= 1.0
    }

    pub fn to_observation(&self) -> TaskObservation {
        TaskObservation {
            config: self.config.clone(),
            latency: self.result.latency.clone(),
            cost: self.result.cost.clone(),
            status: self.result.status,
            delta: self.delta,
        }
    }
}

fn delta_key(delta: f64) -> u64 {
    (delta * 1e9).round() as u64
}

/// Append-only record of every evaluation in a run.
#[derive(Debug, Clone, Default)]
pub struct RunLedger {
    entries: Vec<LedgerEntry>,
    elapsed: f64,
    best: Option<(usize, f64)>,
    ids: HashMap<Vec<u64>, usize>,
    ok_costs: HashMap<u64, Vec<f64>>,
}

impl RunLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    /// Best full-fidelity ok result as `(entry index, latency)`.
    pub fn best(&self) -> Option<(&LedgerEntry, f64)> {
        self.best.map(|(i, f)| (&self.entries[i], f))
    }

    pub fn config_id(&mut self, cfg: &Configuration) -> usize {
        let n = self.ids.len();
        *self.ids.entry(cfg.key()).or_insert(n)
    }

    pub fn contains(&self, cfg: &Configuration) -> bool {
        self.ids.contains_key(&cfg.key())
    }

    /// Wall costs of ok evaluations at `delta`.
    pub fn ok_costs(&self, delta: f64) -> &[f64] {
        self.ok_costs.get(&delta_key(delta)).map_or(&[], Vec::as_slice)
    }

    /// Advances the clock without recording an evaluation.
    pub fn advance(&mut self, seconds: f64) {
        self.elapsed += seconds;
    }

    /// Records a finished evaluation; the clock must already be advanced.
    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &mut self,
        config: Configuration,
        delta: f64,
        subset: Vec<usize>,
        bracket: Option<u32>,
        rung: usize,
        result: EvaluationResult,
        mode: Mode,
    ) -> &LedgerEntry {
        let config_id = self.config_id(&config);
        let idx = self.entries.len();
        if result.status == EvalStatus::Ok {
            self.ok_costs
                .entry(delta_key(delta))
                .or_default()
                .push(result.wall_cost);
            if delta >= 1.0 {
                let f = result.aggregate_latency();
                if self.best.is_none_or(|(_, b)| f < b) {
                    self.best = Some((idx, f));
                }
            }
        }
        self.entries.push(LedgerEntry {
            config_id,
            config,
            delta,
            subset,
            bracket,
            rung,
            result,
            elapsed_s: self.elapsed,
            best_full_fidelity_s: self.best.map(|b| b.1),
            mode,
        });
        &self.entries[idx]
    }

    /// Convergence log as CSV text.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("elapsed_s,bracket,rung,delta,config_id,status,latency_s,best_full_fidelity_s,mode\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{:.6},{},{},{:.6},{},{},{},{},{}",
                e.elapsed_s,
                e.bracket.map_or(String::new(), |b| b.to_string()),
                e.rung,
                e.delta,
                e.config_id,
                e.result.status.as_str(),
                opt(e
                    .objective()
                    .or((e.result.status == EvalStatus::EarlyStopped).then(|| e.result.aggregate_latency()))),
                opt(e.best_full_fidelity_s),
                e.mode.as_str(),
            );
        }
        out
    }
}

/// Terminate iff enough same-fidelity ok costs exist and `running` exceeds
/// their median.
pub fn early_stop_guard(running: f64, prior_costs: &[f64]) -> StopDecision {
    if prior_costs.len() < EARLY_STOP_WARMUP {
        return StopDecision::Continue;
    }
    match median(prior_costs) {
        Some(m) if running > m => StopDecision::Terminate,
        _ => StopDecision::Continue,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Simulated-seconds budget for the whole run.
    pub budget_s: f64,
    pub parallelism: usize,
    pub early_stop: bool,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BracketOutcome {
    /// Ledger indices of the evaluations made, rung by rung.
    pub rungs: Vec<Vec<usize>>,
    /// Configurations that completed the final rung ok.
    pub finalists: Vec<Configuration>,
    /// The budget ran out before the bracket finished.
    pub exhausted: bool,
}

fn failed(nq: usize, err: &EvalError) -> EvaluationResult {
    log::warn!("evaluation error treated as failure: {err}");
    EvaluationResult {
        latency: vec![None; nq],
        cost: vec![None; nq],
        status: EvalStatus::Failed,
        wall_cost: 0.0,
    }
}

/// Evaluates `configs` at `delta` in chunks of `parallelism`, recording each
/// result. Returns ledger indices and whether the budget ran out.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_batch(
    configs: &[Configuration],
    delta: f64,
    subset: &[usize],
    bracket: Option<u32>,
    rung: usize,
    evaluator: &dyn Evaluator,
    ledger: &mut RunLedger,
    opts: &RunOptions,
) -> (Vec<usize>, bool) {
    let nq = evaluator.queries().len();
    let mut done = Vec::with_capacity(configs.len());
    for chunk in configs.chunks(opts.parallelism.max(1)) {
        if ledger.elapsed() >= opts.budget_s {
            return (done, true);
        }
        // Guards see the ledger as it stood when the chunk was dispatched.
        let prior: Vec<f64> = if opts.early_stop {
            ledger.ok_costs(delta).to_vec()
        } else {
            Vec::new()
        };
        let results: Vec<EvaluationResult> = chunk
            .par_iter()
            .map(|cfg| {
                let mut guard = |c: f64| early_stop_guard(c, &prior);
                evaluator
                    .evaluate(cfg, subset, &mut guard)
                    .unwrap_or_else(|e| failed(nq, &e))
            })
            .collect();
        let span = results.iter().map(|r| r.wall_cost).fold(0.0, f64::max);
        ledger.advance(span);
        for (cfg, res) in chunk.iter().zip(results) {
            ledger.record(cfg.clone(), delta, subset.to_vec(), bracket, rung, res, opts.mode);
            done.push(ledger.entries().len() - 1);
        }
    }
    (done, false)
}

fn status_rank(s: EvalStatus) -> u8 {
    match s {
        EvalStatus::Ok => 0,
        EvalStatus::EarlyStopped => 1,
        EvalStatus::Failed => 2,
    }
}

/// Ledger indices ordered best first: ok by objective, then early-stopped,
/// then failed; ties keep evaluation order.
pub fn rank_rung(ledger: &RunLedger, idx: &[usize]) -> Vec<usize> {
    let mut order = idx.to_vec();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&ledger.entries()[a], &ledger.entries()[b]);
        status_rank(ea.result.status)
            .cmp(&status_rank(eb.result.status))
            .then_with(|| match (ea.objective(), eb.objective()) {
                (Some(x), Some(y)) => x.total_cmp(&y),
                _ => std::cmp::Ordering::Equal,
            })
    });
    order
}

/// Successive halving of `batch` through the bracket's rungs.
pub fn run_bracket(
    bracket: &Bracket,
    batch: &[Configuration],
    plan: Option<&FidelityPlan>,
    evaluator: &dyn Evaluator,
    ledger: &mut RunLedger,
    opts: &RunOptions,
) -> BracketOutcome {
    let nq = evaluator.queries().len();
    let eta = if bracket.rungs.len() > 1 {
        (bracket.rungs[1].r / bracket.rungs[0].r).round() as usize
    } else {
        1
    };
    let mut out = BracketOutcome::default();
    let mut current: Vec<Configuration> = batch.to_vec();
    for (i, rung) in bracket.rungs.iter().enumerate() {
        if current.is_empty() {
            break;
        }
        let subset = match plan {
            Some(p) => p.subset(rung.delta, nq),
            None => (0..nq).collect(),
        };
        let delta = if plan.is_some() { rung.delta } else { 1.0 };
        let (idx, exhausted) = evaluate_batch(&current, delta, &subset, Some(bracket.s), i, evaluator, ledger, opts);
        out.rungs.push(idx.clone());
        if exhausted {
            out.exhausted = true;
            return out;
        }
        let ranked = rank_rung(ledger, &idx);
        if i + 1 == bracket.rungs.len() {
            out.finalists = ranked
                .iter()
                .filter(|&&j| ledger.entries()[j].result.status == EvalStatus::Ok)
                .map(|&j| ledger.entries()[j].config.clone())
                .collect();
            break;
        }
        let keep = current.len() / eta.max(1);
        current = ranked
            .iter()
            .filter(|&&j| ledger.entries()[j].result.status == EvalStatus::Ok)
            .take(keep)
            .map(|&j| ledger.entries()[j].config.clone())
            .collect();
    }
    out
}
