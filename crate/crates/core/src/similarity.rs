//! Source-to-target task similarity and transfer weights.
//!
//! Until the target has enough observations, similarities come from a
//! regressor over meta-feature pairs. Once a strict majority of sources show
//! a significant rank correlation on the target's own data, the tracker
//! switches to measured Kendall tau for the rest of the run.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kendall::{kendall_tau, KendallError, KendallTau};
use crate::space::{lhs_sample, ConfigSpace, Configuration, SubSpace};
use crate::stats::{mean, mix_seed};
use crate::surrogate::{Forest, ForestParams, ObservationSet, SurrogateModel, TargetTransform};
use crate::task::{MetaFeature, TaskRecord};

/// Random configurations used to label meta-feature pairs.
pub const PAIR_LABEL_CONFIGS: usize = 200;
/// Folds for the target's out-of-sample self-similarity.
pub const SELF_WEIGHT_FOLDS: usize = 5;
pub const TRANSITION_P_VALUE: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("source task `{0}` has no fitted surrogate")]
    NoSurrogate(String),
    #[error("need at least {need} target observations, got {got}")]
    TooFewObservations { need: usize, got: usize },
    #[error("need at least two history tasks with surrogates, got {0}")]
    TooFewTasks(usize),
    #[error(transparent)]
    Kendall(#[from] KendallError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityMode {
    Predicted,
    Kendall,
}

impl SimilarityMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SimilarityMode::Predicted => "predicted",
            SimilarityMode::Kendall => "kendall",
        }
    }
}

/// Normalized transfer weights over sources and the target itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferWeights {
    /// One weight per source; zero for excluded sources.
    pub sources: Vec<f64>,
    pub target: f64,
    /// Set when every entry, the target included, was non-positive.
    pub no_transfer: bool,
}

impl TransferWeights {
    pub fn total(&self) -> f64 {
        self.sources.iter().sum::<f64>() + self.target
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSimilarity {
    pub task_id: String,
    pub tau: f64,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    pub sources: Vec<SourceSimilarity>,
    pub target_tau: f64,
    pub weights: TransferWeights,
    pub mode: SimilarityMode,
}

/// Rank agreement between a source surrogate and the target's observations.
pub fn task_similarity(source: &TaskRecord, target_obs: &ObservationSet) -> Result<KendallTau, SimilarityError> {
    let model = source
        .surrogate
        .as_ref()
        .ok_or_else(|| SimilarityError::NoSurrogate(source.task_id.clone()))?;
    model_similarity(model, target_obs)
}

/// Same as [`task_similarity`] for an arbitrary surrogate.
pub fn model_similarity(model: &SurrogateModel, target_obs: &ObservationSet) -> Result<KendallTau, SimilarityError> {
    let pairs = target_obs.training_pairs();
    if pairs.len() < 3 {
        return Err(SimilarityError::TooFewObservations {
            need: 3,
            got: pairs.len(),
        });
    }
    let predicted: Vec<f64> = pairs.iter().map(|(c, _)| model.predict(c).mean).collect();
    let truth: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok(kendall_tau(&predicted, &truth)?)
}

/// Regressor from a pair of meta-features to the pair's similarity.
#[derive(Debug, Clone)]
pub struct MetaRegressor {
    forest: Forest,
    label_mean: f64,
}

impl MetaRegressor {
    pub fn label_mean(&self) -> f64 {
        self.label_mean
    }
}

fn pair_row(a: &MetaFeature, b: &MetaFeature) -> Vec<f64> {
    a.values().iter().chain(b.values()).copied().collect()
}

/// Similarity label of two surrogates: tau of their predictions on `probe`.
pub fn surrogate_pair_label(a: &SurrogateModel, b: &SurrogateModel, probe: &[Configuration]) -> f64 {
    let pa: Vec<f64> = probe.iter().map(|c| a.predict(c).mean).collect();
    let pb: Vec<f64> = probe.iter().map(|c| b.predict(c).mean).collect();
    kendall_tau(&pa, &pb).map(|k| k.tau).unwrap_or(0.0)
}

/// Pair-label matrix over tasks with surrogates (`labels[i][j]`, diagonal 1).
pub fn pair_labels(history: &[&TaskRecord], space: &ConfigSpace, seed: u64) -> Vec<Vec<f64>> {
    let probe = lhs_sample(&SubSpace::full(space), PAIR_LABEL_CONFIGS, seed).expect("non-empty space");
    let preds: Vec<Vec<f64>> = history
        .iter()
        .map(|t| {
            let m = t.surrogate.as_ref().expect("filtered to fitted tasks");
            probe.iter().map(|c| m.predict(c).mean).collect()
        })
        .collect();
    let n = history.len();
    let mut labels = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                labels[i][j] = kendall_tau(&preds[i], &preds[j]).map(|k| k.tau).unwrap_or(0.0);
            }
        }
    }
    labels
}

pub fn fit_meta_regressor(
    history: &[TaskRecord],
    space: &ConfigSpace,
    seed: u64,
) -> Result<MetaRegressor, SimilarityError> {
    let fitted: Vec<&TaskRecord> = history.iter().filter(|t| t.surrogate.is_some()).collect();
    if fitted.len() < 2 {
        return Err(SimilarityError::TooFewTasks(fitted.len()));
    }
    let labels = pair_labels(&fitted, space, seed);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..fitted.len() {
        for j in 0..fitted.len() {
            if i != j {
                rows.push(pair_row(&fitted[i].meta, &fitted[j].meta));
                y.push(labels[i][j]);
            }
        }
    }
    let forest = Forest::fit(&rows, &y, &ForestParams::default(), mix_seed(seed, 1));
    Ok(MetaRegressor {
        forest,
        label_mean: mean(&y),
    })
}

pub fn predict_similarity(reg: &MetaRegressor, source_meta: &MetaFeature, target_meta: &MetaFeature) -> f64 {
    reg.forest
        .predict(&pair_row(source_meta, target_meta))
        .0
        .clamp(-1.0, 1.0)
}

/// True iff strictly more than half of the p-values are below 0.05.
pub fn should_transition(p_values: &[f64]) -> bool {
    let significant = p_values.iter().filter(|&&p| p < TRANSITION_P_VALUE).count();
    !p_values.is_empty() && 2 * significant > p_values.len()
}

/// Out-of-fold Kendall tau of the target's own surrogate.
///
/// Folds whose training part has fewer than two points predict the training
/// mean. Returns `None` when the observations cannot be split or tau is
/// undefined.
pub fn cross_validated_tau(
    target_obs: &ObservationSet,
    space: &ConfigSpace,
    folds: usize,
    seed: u64,
) -> Option<KendallTau> {
    let pairs = target_obs.training_pairs();
    let n = pairs.len();
    if folds < 2 || n < folds || n < 2 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut predicted = vec![0.0; n];
    for f in 0..folds {
        let held: Vec<usize> = order.iter().copied().skip(f).step_by(folds).collect();
        let train: Vec<usize> = order.iter().copied().filter(|i| !held.contains(i)).collect();
        let train_cfgs: Vec<&Configuration> = train.iter().map(|&i| pairs[i].0).collect();
        let train_y: Vec<f64> = train.iter().map(|&i| pairs[i].1).collect();
        match SurrogateModel::fit_xy(
            space,
            &train_cfgs,
            &train_y,
            &ForestParams::default(),
            TargetTransform::Log,
            mix_seed(seed, f as u64),
        ) {
            Ok(model) => {
                for &i in &held {
                    predicted[i] = model.predict(pairs[i].0).mean;
                }
            }
            Err(_) => {
                let fallback = mean(&train_y.iter().map(|y| y.max(1e-12).ln()).collect::<Vec<_>>());
                for &i in &held {
                    predicted[i] = fallback;
                }
            }
        }
    }
    let truth: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    kendall_tau(&predicted, &truth).ok()
}

/// Target self-similarity; 0 when it cannot be estimated.
pub fn target_self_weight(target_obs: &ObservationSet, space: &ConfigSpace, folds: usize, seed: u64) -> f64 {
    cross_validated_tau(target_obs, space, folds, seed).map_or(0.0, |k| k.tau)
}

/// Drops non-positive similarities and normalizes the rest to sum to one.
pub fn to_weights(similarities: &[f64], target_tau: f64) -> TransferWeights {
    let keep = |t: f64| if t > 0.0 && t.is_finite() { t } else { 0.0 };
    let sources: Vec<f64> = similarities.iter().map(|&t| keep(t)).collect();
    let target = keep(target_tau);
    let total = sources.iter().sum::<f64>() + target;
    if total <= 0.0 {
        return TransferWeights {
            sources: vec![0.0; similarities.len()],
            target: 1.0,
            no_transfer: true,
        };
    }
    TransferWeights {
        sources: sources.iter().map(|s| s / total).collect(),
        target: target / total,
        no_transfer: false,
    }
}

/// One-way switch from predicted to measured similarity.
#[derive(Debug, Clone)]
pub struct SimilarityTracker {
    mode: SimilarityMode,
    switched_at: Option<usize>,
}

impl Default for SimilarityTracker {
    fn default() -> Self {
        Self::new()
    }
}

impl SimilarityTracker {
    pub fn new() -> Self {
        Self {
            mode: SimilarityMode::Predicted,
            switched_at: None,
        }
    }

    pub fn mode(&self) -> SimilarityMode {
        self.mode
    }

    pub fn switched_at(&self) -> Option<usize> {
        self.switched_at
    }

    /// Feeds the latest p-values; returns true on the iteration that switches.
    pub fn observe(&mut self, p_values: &[f64], iteration: usize) -> bool {
        if self.mode == SimilarityMode::Predicted && should_transition(p_values) {
            self.mode = SimilarityMode::Kendall;
            self.switched_at = Some(iteration);
            return true;
        }
        false
    }
}
