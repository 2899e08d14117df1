//! Compares low-fidelity proxies by how well they preserve the full-workload
//! ranking of a held-out task.
//!
//! Each instance is one synthetic suite: the last task is the target, the
//! others are equally weighted sources. Three proxies are scored at every
//! delta below 1 of the Hyperband ladder:
//!
//! * `selection`: greedy query subset chosen on the sources,
//! * `prefix`: queries in workload order until the cost ratio is used up,
//! * `volume`: every latency scaled by delta with multiplicative rank noise
//!   that grows as delta shrinks, mimicking a reduced input size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::evaluator::{make_synthetic_suite, SuiteParams};
use crate::fidelity::{
    cost_profile, delta_levels, greedy_select, prefix_select, subset_correlation, FidelityError, SourceMatrix,
};
use crate::kendall::kendall_tau;
use crate::stats::{mean, mix_seed};
use crate::task::TaskRecord;

/// Log-noise of the volume proxy at delta -> 0; it scales with `1 - delta`.
pub const VOLUME_NOISE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchParams {
    pub suite: SuiteParams,
    pub instances: usize,
    pub eta: u32,
    pub max_resource: u32,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self {
            suite: SuiteParams::default(),
            instances: 100,
            eta: 3,
            max_resource: 9,
        }
    }
}

/// One instance at one fidelity level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub instance: usize,
    pub delta: f64,
    pub selection_tau: f64,
    pub selection_cost: f64,
    pub selection_queries: usize,
    pub prefix_tau: f64,
    pub prefix_cost: f64,
    pub volume_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSummary {
    pub delta: f64,
    pub mean_selection_tau: f64,
    pub mean_prefix_tau: f64,
    pub mean_volume_tau: f64,
    /// Share of instances where selection's tau is at least prefix's.
    pub selection_beats_prefix: f64,
    pub selection_beats_volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub eta: u32,
    pub max_resource: u32,
    pub deltas: Vec<f64>,
    pub instances: usize,
    pub rows: Vec<BenchRow>,
    pub levels: Vec<LevelSummary>,
}

impl BenchReport {
    pub fn level(&self, delta: f64) -> Option<&LevelSummary> {
        self.levels.iter().find(|l| (l.delta - delta).abs() < 1e-9)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8")
    }

    /// Human-readable summary, starting with the fidelity ladder.
    pub fn summary(&self) -> String {
        let deltas: Vec<String> = self.deltas.iter().map(|d| format!("{d:.4}")).collect();
        let mut out = format!(
            "eta={} R={} deltas=[{}] instances={}\n",
            self.eta,
            self.max_resource,
            deltas.join(", "),
            self.instances
        );
        for l in &self.levels {
            out.push_str(&format!(
                "delta {:.4}: tau selection {:.3} prefix {:.3} volume {:.3}; selection >= prefix {:.0}%, >= volume {:.0}%\n",
                l.delta,
                l.mean_selection_tau,
                l.mean_prefix_tau,
                l.mean_volume_tau,
                100.0 * l.selection_beats_prefix,
                100.0 * l.selection_beats_volume
            ));
        }
        out
    }
}

/// Kendall tau between a noisy scaled copy of the target's full latencies and
/// the latencies themselves.
pub fn volume_proxy_tau(target: &SourceMatrix, delta: f64, seed: u64) -> f64 {
    let full: Vec<f64> = target.rows.iter().map(|r| r.iter().sum()).collect();
    if full.len() < 3 {
        return 0.0;
    }
    let sigma = VOLUME_NOISE * (1.0 - delta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proxy: Vec<f64> = full
        .iter()
        .map(|&f| {
            let z: f64 = StandardNormal.sample(&mut rng);
            f * delta * (sigma * z).exp()
        })
        .collect();
    kendall_tau(&proxy, &full).map_or(0.0, |k| k.tau)
}

pub fn bench_fidelity(params: &BenchParams) -> Result<BenchReport, FidelityError> {
    let ladder = delta_levels(params.eta, params.max_resource)?;
    let low: Vec<f64> = ladder.iter().copied().filter(|&d| d < 1.0).collect();
    let mut rows = Vec::new();
    for i in 0..params.instances {
        let suite = make_synthetic_suite(&SuiteParams {
            seed: mix_seed(params.suite.seed, i as u64),
            ..params.suite.clone()
        });
        let records = suite.records();
        let Some((target, sources)) = records.split_last() else {
            continue;
        };
        let w = 1.0 / sources.len().max(1) as f64;
        let weighted: Vec<(&TaskRecord, f64)> = sources.iter().map(|s| (s, w)).collect();
        let profile = cost_profile(&weighted, &target.queries)?;
        let matrices: Vec<SourceMatrix> = weighted.iter().map(|(t, w)| SourceMatrix::from_record(t, *w)).collect();
        let held_out = SourceMatrix::from_record(target, 1.0);
        for &delta in &low {
            let sel = greedy_select(&profile, &matrices, delta)?;
            let prefix = prefix_select(&profile, delta);
            rows.push(BenchRow {
                instance: i,
                delta,
                selection_tau: subset_correlation(&sel.queries, &held_out),
                selection_cost: sel.cost_ratio,
                selection_queries: sel.queries.len(),
                prefix_tau: subset_correlation(&prefix, &held_out),
                prefix_cost: profile.cost(&prefix),
                volume_tau: volume_proxy_tau(&held_out, delta, mix_seed(i as u64, (delta * 1e6) as u64)),
            });
        }
    }
    let levels = low
        .iter()
        .map(|&delta| {
            let at: Vec<&BenchRow> = rows.iter().filter(|r| r.delta == delta).collect();
            let share =
                |f: &dyn Fn(&BenchRow) -> bool| at.iter().filter(|r| f(r)).count() as f64 / at.len().max(1) as f64;
            LevelSummary {
                delta,
                mean_selection_tau: mean(&at.iter().map(|r| r.selection_tau).collect::<Vec<_>>()),
                mean_prefix_tau: mean(&at.iter().map(|r| r.prefix_tau).collect::<Vec<_>>()),
                mean_volume_tau: mean(&at.iter().map(|r| r.volume_tau).collect::<Vec<_>>()),
                selection_beats_prefix: share(&|r| r.selection_tau >= r.prefix_tau),
                selection_beats_volume: share(&|r| r.selection_tau >= r.volume_tau),
            }
        })
        .collect();
    Ok(BenchReport {
        eta: params.eta,
        max_resource: params.max_resource,
        deltas: ladder,
        instances: params.instances,
        rows,
        levels,
    })
}
