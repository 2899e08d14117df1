//! Synthetic multi-query latency simulator.
//!
//! Each query's latency is a positive baseline scaled by
//! `1 + sum_j a[q][j] (u_j - o[q][j])^2 + interactions + categorical penalties`,
//! where `u_j` is knob `j`'s unit position, times a lognormal noise factor.
//! Interactions are products of squared distances to the workload optimum,
//! so they vanish there and the optimum stays analytic: the separable part
//! is minimized per knob by the clipped, weighted mean of the query optima.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_subset, no_guard, EvalError, EvaluationResult, Evaluator, StopDecision};
use crate::space::{lhs_sample, ConfigSpace, Configuration, KnobDomain, KnobKind, KnobSpec, SubSpace};
use crate::stats::mix_seed;
use crate::task::{EvalStatus, MetaFeature, TaskObservation, TaskRecord, META_FEATURE_DIM};

const FAILURE_TAG: u64 = 0xFA11;
/// Log-uniform range of per-knob effect strength.
const IMPORTANCE: (f64, f64) = (1.0, 3.0);

/// Pairwise interaction between two numeric knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub knobs: [usize; 2],
    /// Coefficient per query.
    pub coef: Vec<f64>,
}

/// Parameters of a simulated workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub name: String,
    #[serde(with = "space_json")]
    pub space: ConfigSpace,
    pub queries: Vec<String>,
    /// Latency of each query at the optimum of its own bowls, in seconds.
    pub baseline_s: Vec<f64>,
    /// `[query][knob]` bowl curvature; zero for categorical knobs.
    pub sensitivity: Vec<Vec<f64>>,
    /// `[query][knob]` bowl centre in unit coordinates.
    pub optimum: Vec<Vec<f64>>,
    /// `[query][knob][category]` relative penalty; empty for numeric knobs.
    pub category_penalty: Vec<Vec<Vec<f64>>>,
    pub interactions: Vec<Interaction>,
    /// Sigma of the multiplicative lognormal noise.
    pub noise_sigma: f64,
    pub failure_prob: f64,
    pub seed: u64,
    pub meta_feature: Vec<f64>,
}

mod space_json {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::space::ConfigSpace;

    pub fn serialize<S: Serializer>(space: &ConfigSpace, s: S) -> Result<S::Ok, S::Error> {
        space.to_json().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ConfigSpace, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        ConfigSpace::from_json(v).map_err(serde::de::Error::custom)
    }
}

/// A validated workload with its precomputed optimum.
#[derive(Debug, Clone)]
pub struct Simulator {
    spec: WorkloadSpec,
    /// Unit position of the optimum per knob (interaction centres).
    center: Vec<f64>,
    optimum: Configuration,
    optimum_latency: f64,
}

fn config_hash(seed: u64, cfg: &Configuration) -> u64 {
    cfg.key().iter().fold(mix_seed(seed, 0x51u64), |h, &b| mix_seed(h, b))
}

impl Simulator {
    pub fn new(spec: WorkloadSpec) -> Result<Self, EvalError> {
        validate(&spec)?;
        let nq = spec.queries.len();
        let mut values = Vec::with_capacity(spec.space.len());
        for (j, knob) in spec.space.knobs().iter().enumerate() {
            let v = match &knob.domain {
                KnobDomain::Numeric { low, high } => {
                    let w: Vec<f64> = (0..nq).map(|q| spec.baseline_s[q] * spec.sensitivity[q][j]).collect();
                    let total: f64 = w.iter().sum();
                    if total <= 0.0 {
                        knob.default
                    } else {
                        let u = ((0..nq).map(|q| w[q] * spec.optimum[q][j]).sum::<f64>() / total).clamp(0.0, 1.0);
                        let v = knob.from_unit(u);
                        if knob.kind == KnobKind::Integer {
                            let bowl = |x: f64| {
                                let ux = knob.to_unit(x);
                                (0..nq).map(|q| w[q] * (ux - spec.optimum[q][j]).powi(2)).sum::<f64>()
                            };
                            let lo = v.floor().clamp(*low, *high);
                            let hi = v.ceil().clamp(*low, *high);
                            if bowl(hi) < bowl(lo) {
                                hi
                            } else {
                                lo
                            }
                        } else {
                            v
                        }
                    }
                }
                KnobDomain::Categorical(cats) => {
                    let mut best = 0;
                    let mut best_pen = f64::INFINITY;
                    for c in 0..cats.len() {
                        let pen: f64 = (0..nq)
                            .map(|q| spec.baseline_s[q] * spec.category_penalty[q][j][c])
                            .sum();
                        if pen < best_pen {
                            best_pen = pen;
                            best = c;
                        }
                    }
                    best as f64
                }
            };
            values.push(v);
        }
        let optimum = Configuration(values);
        let center = unit_positions(&spec.space, &optimum);
        let mut sim = Self {
            spec,
            center,
            optimum,
            optimum_latency: 0.0,
        };
        sim.optimum_latency = sim.true_latency(&sim.optimum.clone());
        Ok(sim)
    }

    pub fn spec(&self) -> &WorkloadSpec {
        &self.spec
    }

    /// The noiseless optimum and its total latency.
    pub fn optimum(&self) -> (&Configuration, f64) {
        (&self.optimum, self.optimum_latency)
    }

    /// Noiseless latency of query `q`.
    pub fn true_query_latency(&self, cfg: &Configuration, q: usize) -> f64 {
        self.query_latency(&unit_positions(&self.spec.space, cfg), cfg, q)
    }

    /// Noiseless latency of the whole workload.
    pub fn true_latency(&self, cfg: &Configuration) -> f64 {
        let u = unit_positions(&self.spec.space, cfg);
        (0..self.spec.queries.len())
            .map(|q| self.query_latency(&u, cfg, q))
            .sum()
    }

    fn query_latency(&self, u: &[f64], cfg: &Configuration, q: usize) -> f64 {
        let s = &self.spec;
        let mut scale = 1.0;
        for (j, knob) in s.space.knobs().iter().enumerate() {
            scale += match knob.domain {
                KnobDomain::Numeric { .. } => s.sensitivity[q][j] * (u[j] - s.optimum[q][j]).powi(2),
                KnobDomain::Categorical(_) => s.category_penalty[q][j][cfg.values()[j] as usize],
            };
        }
        for inter in &s.interactions {
            let [i, k] = inter.knobs;
            scale += inter.coef[q] * (u[i] - self.center[i]).powi(2) * (u[k] - self.center[k]).powi(2);
        }
        s.baseline_s[q] * scale
    }

    fn noisy_latency(&self, u: &[f64], cfg: &Configuration, hash: u64, q: usize) -> f64 {
        let base = self.query_latency(u, cfg, q);
        if self.spec.noise_sigma <= 0.0 {
            return base;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(hash, q as u64 + 1));
        let z: f64 = StandardNormal.sample(&mut rng);
        base * (self.spec.noise_sigma * z).exp()
    }

    /// Whether this configuration's runs fail, and at which subset position.
    fn failure_position(&self, hash: u64, len: usize) -> Option<usize> {
        if len == 0 || self.spec.failure_prob <= 0.0 {
            return None;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(hash, FAILURE_TAG));
        (rng.random::<f64>() < self.spec.failure_prob).then(|| rng.random_range(0..len))
    }
}

fn unit_positions(space: &ConfigSpace, cfg: &Configuration) -> Vec<f64> {
    space
        .knobs()
        .iter()
        .zip(cfg.values())
        .map(|(k, &v)| k.to_unit(v))
        .collect()
}

fn validate(spec: &WorkloadSpec) -> Result<(), EvalError> {
    let bad = |m: &str| Err(EvalError::InvalidWorkload(m.to_string()));
    let nq = spec.queries.len();
    let d = spec.space.len();
    if nq == 0 {
        return bad("workload needs at least one query");
    }
    if spec.baseline_s.len() != nq || spec.sensitivity.len() != nq || spec.optimum.len() != nq {
        return bad("per-query tables must have one row per query");
    }
    if spec.category_penalty.len() != nq {
        return bad("category penalties must have one row per query");
    }
    if spec.baseline_s.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return bad("baselines must be positive and finite");
    }
    for q in 0..nq {
        if spec.sensitivity[q].len() != d || spec.optimum[q].len() != d || spec.category_penalty[q].len() != d {
            return bad("per-knob rows must match the space");
        }
        for (j, k) in spec.space.knobs().iter().enumerate() {
            let a = spec.sensitivity[q][j];
            if !(a.is_finite() && a >= 0.0) || !spec.optimum[q][j].is_finite() {
                return bad("sensitivities must be finite and non-negative");
            }
            let pens = &spec.category_penalty[q][j];
            if k.is_categorical() {
                if pens.len() != k.n_categories() || pens.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return bad("category penalties must cover each category and be non-negative");
                }
            } else if !pens.is_empty() {
                return bad("numeric knobs take no category penalties");
            }
        }
    }
    for inter in &spec.interactions {
        let numeric = |i: usize| i < d && !spec.space.knobs()[i].is_categorical();
        if !numeric(inter.knobs[0]) || !numeric(inter.knobs[1]) || inter.coef.len() != nq {
            return bad("interactions must join two numeric knobs with one coefficient per query");
        }
        if inter.coef.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return bad("interaction coefficients must be non-negative");
        }
    }
    if !(0.0..=1.0).contains(&spec.failure_prob) || !(spec.noise_sigma.is_finite() && spec.noise_sigma >= 0.0) {
        return bad("failure probability and noise must be valid");
    }
    if MetaFeature::new(spec.meta_feature.clone()).is_none() {
        return bad("meta-feature must have 34 finite components");
    }
    Ok(())
}

impl Evaluator for Simulator {
    fn space(&self) -> &ConfigSpace {
        &self.spec.space
    }

    fn queries(&self) -> &[String] {
        &self.spec.queries
    }

    fn evaluate(
        &self,
        cfg: &Configuration,
        subset: &[usize],
        guard: &mut dyn FnMut(f64) -> StopDecision,
    ) -> Result<EvaluationResult, EvalError> {
        let nq = self.spec.queries.len();
        if cfg.len() != self.spec.space.len() {
            return Err(EvalError::Dimension {
                expected: self.spec.space.len(),
                got: cfg.len(),
            });
        }
        check_subset(subset, nq)?;
        let hash = config_hash(self.spec.seed, cfg);
        let fail_at = self.failure_position(hash, subset.len());
        let u = unit_positions(&self.spec.space, cfg);
        let mut latency = vec![None; nq];
        let mut wall = 0.0;
        let mut status = EvalStatus::Ok;
        for (pos, &q) in subset.iter().enumerate() {
            let l = self.noisy_latency(&u, cfg, hash, q);
            wall += l;
            if fail_at == Some(pos) {
                return Ok(EvaluationResult {
                    latency: vec![None; nq],
                    cost: vec![None; nq],
                    status: EvalStatus::Failed,
                    wall_cost: wall,
                });
            }
            latency[q] = Some(l);
            if pos + 1 < subset.len() && guard(wall) == StopDecision::Terminate {
                status = EvalStatus::EarlyStopped;
                break;
            }
        }
        Ok(EvaluationResult {
            cost: latency.clone(),
            latency,
            status,
            wall_cost: wall,
        })
    }
}

/// Knobs of the generated spaces, in order; extra knobs are generic.
fn knob_template(i: usize) -> KnobSpec {
    match i {
        0 => KnobSpec::continuous("executor_memory_gb", 1.0, 64.0, 4.0).with_log_scale(),
        1 => KnobSpec::integer("executor_cores", 1, 16, 4),
        2 => KnobSpec::integer("shuffle_partitions", 8, 2048, 200).with_log_scale(),
        3 => KnobSpec::categorical("io_compression_codec", vec!["lz4", "snappy", "zstd"], 0),
        4 => KnobSpec::continuous("broadcast_join_threshold_mb", 1.0, 1024.0, 10.0).with_log_scale(),
        5 => KnobSpec::continuous("memory_fraction", 0.3, 0.9, 0.6),
        6 => KnobSpec::continuous("memory_storage_fraction", 0.1, 0.9, 0.5),
        7 => KnobSpec::categorical("serializer", vec!["java", "kryo"], 0),
        8 => KnobSpec::integer("default_parallelism", 8, 512, 64).with_log_scale(),
        9 => KnobSpec::integer("shuffle_file_buffer_kb", 16, 128, 32),
        10 => KnobSpec::integer("reducer_max_size_in_flight_mb", 24, 192, 48),
        11 => KnobSpec::continuous("advisory_partition_size_mb", 16.0, 512.0, 64.0).with_log_scale(),
        12 => KnobSpec::continuous("locality_wait_s", 0.0, 10.0, 3.0),
        13 => KnobSpec::continuous("speculation_multiplier", 1.0, 5.0, 1.5),
        _ => KnobSpec::continuous(&format!("param_{i}"), 0.0, 1.0, 0.5),
    }
}

/// Knobs of the generated spaces, in template order.
pub fn synthetic_space(n_knobs: usize) -> ConfigSpace {
    ConfigSpace::new((0..n_knobs).map(knob_template).collect()).expect("template knobs are valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteParams {
    pub n_tasks: usize,
    pub n_queries: usize,
    pub n_knobs: usize,
    /// Knobs with no effect on any query.
    pub n_no_effect: usize,
    /// Blend between the shared and the task-private latency surface.
    pub rho: f64,
    pub noise_sigma: f64,
    pub failure_prob: f64,
    pub observations: usize,
    pub seed: u64,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            n_tasks: 6,
            n_queries: 22,
            n_knobs: 14,
            n_no_effect: 3,
            rho: 0.9,
            noise_sigma: 0.05,
            failure_prob: 0.02,
            observations: 50,
            seed: 0,
        }
    }
}

/// A family of related tasks sharing one space and query set.
#[derive(Debug, Clone)]
pub struct SyntheticSuite {
    pub space: ConfigSpace,
    /// Knob indices planted with zero effect.
    pub no_effect: Vec<usize>,
    pub tasks: Vec<(WorkloadSpec, TaskRecord)>,
}

impl SyntheticSuite {
    pub fn simulator(&self, i: usize) -> Simulator {
        Simulator::new(self.tasks[i].0.clone()).expect("generated specs are valid")
    }

    pub fn records(&self) -> Vec<TaskRecord> {
        self.tasks.iter().map(|t| t.1.clone()).collect()
    }
}

/// Raw surface parameters before blending.
struct Surface {
    ln_baseline: Vec<f64>,
    sensitivity: Vec<Vec<f64>>,
    optimum: Vec<Vec<f64>>,
    penalty: Vec<Vec<Vec<f64>>>,
    interaction: Vec<Vec<f64>>,
}

fn draw_surface(rng: &mut ChaCha8Rng, space: &ConfigSpace, no_effect: &[usize], nq: usize, n_pairs: usize) -> Surface {
    let d = space.len();
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let importance: Vec<f64> = (0..d)
        .map(|j| {
            let s = rng.random_range(IMPORTANCE.0.ln()..IMPORTANCE.1.ln()).exp();
            if no_effect.contains(&j) {
                0.0
            } else {
                s
            }
        })
        .collect();
    let centre: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..0.9)).collect();
    let base_penalty: Vec<Vec<f64>> = space
        .knobs()
        .iter()
        .enumerate()
        .map(|(j, k)| {
            // One category is free; the others cost a clear margin more.
            let n = k.n_categories();
            let best = if n > 0 { rng.random_range(0..n) } else { 0 };
            (0..n)
                .map(|c| {
                    if c == best {
                        0.0
                    } else {
                        rng.random_range(0.15..0.5) * importance[j]
                    }
                })
                .collect()
        })
        .collect();
    let ln_baseline: Vec<f64> = (0..nq).map(|_| 8f64.ln() + 1.2 * normal(rng)).collect();
    let mut sensitivity = vec![vec![0.0; d]; nq];
    let mut optimum = vec![vec![0.0; d]; nq];
    let mut penalty = vec![vec![Vec::new(); d]; nq];
    for q in 0..nq {
        for (j, k) in space.knobs().iter().enumerate() {
            let keep = rng.random::<f64>() < 0.75;
            let scale = (0.5 * normal(rng)).exp();
            if k.is_categorical() {
                penalty[q][j] = base_penalty[j]
                    .iter()
                    .map(|p| if keep { p * scale } else { 0.0 })
                    .collect();
            } else {
                sensitivity[q][j] = if keep { importance[j] * scale } else { 0.0 };
                optimum[q][j] = centre[j] + 0.05 * normal(rng);
            }
        }
    }
    let interaction = (0..n_pairs)
        .map(|_| {
            (0..nq)
                .map(|_| {
                    if rng.random::<f64>() < 0.5 {
                        rng.random_range(0.5..2.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Surface {
        ln_baseline,
        sensitivity,
        optimum,
        penalty,
        interaction,
    }
}

fn blend(a: f64, b: f64, rho: f64) -> f64 {
    rho * a + (1.0 - rho) * b
}

/// Summary of a surface that the meta-feature projects.
fn surface_summary(spec: &WorkloadSpec) -> Vec<f64> {
    let nq = spec.queries.len();
    let total_b: f64 = spec.baseline_s.iter().sum();
    let mut t = Vec::new();
    for (j, k) in spec.space.knobs().iter().enumerate() {
        if k.is_categorical() {
            for c in 0..k.n_categories() {
                t.push(
                    (0..nq)
                        .map(|q| spec.baseline_s[q] * spec.category_penalty[q][j][c])
                        .sum::<f64>()
                        / total_b,
                );
            }
        } else {
            let w: Vec<f64> = (0..nq).map(|q| spec.baseline_s[q] * spec.sensitivity[q][j]).collect();
            let wt: f64 = w.iter().sum();
            let centre = if wt > 0.0 {
                (0..nq).map(|q| w[q] * spec.optimum[q][j]).sum::<f64>() / wt
            } else {
                0.5
            };
            t.push(centre);
            t.push(wt / total_b);
        }
    }
    let ln_b: Vec<f64> = spec.baseline_s.iter().map(|b| b.ln()).collect();
    t.push(crate::stats::mean(&ln_b));
    t.push(crate::stats::variance(&ln_b).sqrt());
    t
}

/// Generates `n_tasks` related workloads with pre-populated histories.
///
/// Every surface parameter is `rho * shared + (1 - rho) * private`, so
/// `rho = 1` yields identical surfaces. Meta-features are a fixed random
/// projection of a per-task surface summary, so their distances track
/// surface dissimilarity. Histories are Latin hypercube samples evaluated
/// at full fidelity.
pub fn make_synthetic_suite(params: &SuiteParams) -> SyntheticSuite {
    assert!((0.0..=1.0).contains(&params.rho), "rho must lie in [0, 1]");
    assert!(params.n_queries >= 1 && params.n_knobs >= 1);
    let space = synthetic_space(params.n_knobs);
    let d = space.len();
    let nq = params.n_queries;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, 1));
    let mut no_effect = sample(&mut rng, d, params.n_no_effect.min(d)).into_vec();
    no_effect.sort_unstable();
    let numeric: Vec<usize> = (0..d)
        .filter(|j| !space.knobs()[*j].is_categorical() && !no_effect.contains(j))
        .collect();
    let mut pairs = Vec::new();
    for a in 0..numeric.len() {
        for b in a + 1..numeric.len() {
            pairs.push([numeric[a], numeric[b]]);
        }
    }
    let n_pairs = ((pairs.len() as f64) * 0.1).round() as usize;
    let chosen: Vec<[usize; 2]> = {
        let mut idx = sample(&mut rng, pairs.len(), n_pairs.min(pairs.len())).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| pairs[i]).collect()
    };
    let shared = draw_surface(&mut rng, &space, &no_effect, nq, chosen.len());
    let queries: Vec<String> = (1..=nq).map(|q| format!("q{q:02}")).collect();

    let mut specs = Vec::with_capacity(params.n_tasks);
    for i in 0..params.n_tasks {
        let mut prng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, 1000 + i as u64));
        let private = draw_surface(&mut prng, &space, &no_effect, nq, chosen.len());
        let rho = params.rho;
        let baseline_s = (0..nq)
            .map(|q| blend(shared.ln_baseline[q], private.ln_baseline[q], rho).exp())
            .collect();
        let sensitivity = (0..nq)
            .map(|q| {
                (0..d)
                    .map(|j| blend(shared.sensitivity[q][j], private.sensitivity[q][j], rho))
                    .collect()
            })
            .collect();
        let optimum = (0..nq)
            .map(|q| {
                (0..d)
                    .map(|j| blend(shared.optimum[q][j], private.optimum[q][j], rho))
                    .collect()
            })
            .collect();
        let category_penalty = (0..nq)
            .map(|q| {
                (0..d)
                    .map(|j| {
                        shared.penalty[q][j]
                            .iter()
                            .zip(&private.penalty[q][j])
                            .map(|(&a, &b)| blend(a, b, rho))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let interactions = chosen
            .iter()
            .enumerate()
            .map(|(p, &knobs)| Interaction {
                knobs,
                coef: (0..nq)
                    .map(|q| blend(shared.interaction[p][q], private.interaction[p][q], rho))
                    .collect(),
            })
            .collect();
        specs.push(WorkloadSpec {
            name: format!("task-{i:02}"),
            space: space.clone(),
            queries: queries.clone(),
            baseline_s,
            sensitivity,
            optimum,
            category_penalty,
            interactions,
            noise_sigma: params.noise_sigma,
            failure_prob: params.failure_prob,
            seed: mix_seed(params.seed, 3000 + i as u64),
            meta_feature: Vec::new(),
        });
    }

    let summaries: Vec<Vec<f64>> = specs.iter().map(surface_summary).collect();
    let width = summaries.first().map_or(0, |s| s.len());
    let mut prng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, 7));
    let projection: Vec<Vec<f64>> = (0..META_FEATURE_DIM)
        .map(|_| {
            (0..width)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut prng);
                    z / (width as f64).sqrt()
                })
                .collect()
        })
        .collect();
    for (spec, t) in specs.iter_mut().zip(&summaries) {
        spec.meta_feature = projection
            .iter()
            .map(|row| row.iter().zip(t).map(|(p, v)| p * v).sum())
            .collect();
    }

    let tasks = specs
        .into_iter()
        .enumerate()
        .map(|(i, spec)| {
            let sim = Simulator::new(spec.clone()).expect("generated specs are valid");
            let meta = MetaFeature::new(spec.meta_feature.clone()).expect("projected meta-feature is finite");
            let mut record = TaskRecord::new(&spec.name, meta, spec.queries.clone());
            if params.observations > 0 {
                let all: Vec<usize> = (0..nq).collect();
                let configs = lhs_sample(
                    &SubSpace::full(&space),
                    params.observations,
                    mix_seed(params.seed, 2000 + i as u64),
                )
                .expect("space is non-empty");
                for cfg in configs {
                    let r = sim.evaluate(&cfg, &all, &mut no_guard).expect("valid subset");
                    record.observations.push(TaskObservation {
                        config: cfg,
                        latency: r.latency,
                        cost: r.cost,
                        status: r.status,
                        delta: 1.0,
                    });
                }
            }
            (spec, record)
        })
        .collect();
    SyntheticSuite {
        space,
        no_effect,
        tasks,
    }
}
