//! Probabilistic random-forest surrogate and Expected Improvement.
//!
//! The forest is trained on log-latency. [`SurrogateModel::predict`] reports
//! the per-tree mean and variance in that log domain; EI converts the
//! incumbent into the same domain before scoring.

pub mod forest;

use thiserror::Error;

use crate::space::{ConfigSpace, Configuration, KnobDomain};
use crate::stats::{std_normal_cdf, std_normal_pdf};
use crate::task::EvalStatus;
pub use forest::{Forest, ForestParams, Node, Split, Tree};

#[derive(Debug, Error, PartialEq)]
pub enum SurrogateError {
    #[error("need at least 2 usable observations, got {0}")]
    InsufficientData(usize),
}

/// One observed evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedPoint {
    pub config: Configuration,
    /// Objective in seconds; for failed entries the value is ignored.
    pub objective: f64,
    pub fidelity: f64,
    pub status: EvalStatus,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSet {
    pub entries: Vec<ObservedPoint>,
}

impl ObservationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, config: Configuration, objective: f64, fidelity: f64, status: EvalStatus) {
        self.entries.push(ObservedPoint {
            config,
            objective,
            fidelity,
            status,
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Training pairs with penalties applied.
    ///
    /// Failed runs take twice the worst ok objective at their fidelity;
    /// early-stopped runs take the larger of their partial cost and that worst
    /// ok objective. Entries at a fidelity with no ok observation are dropped
    /// unless they are ok themselves.
    pub fn training_pairs(&self) -> Vec<(&Configuration, f64)> {
        let worst_at = |fid: f64| {
            self.entries
                .iter()
                .filter(|e| e.fidelity == fid && e.status == EvalStatus::Ok && e.objective.is_finite())
                .map(|e| e.objective)
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        };
        self.entries
            .iter()
            .filter_map(|e| match e.status {
                EvalStatus::Ok if e.objective.is_finite() => Some((&e.config, e.objective)),
                EvalStatus::Ok => None,
                EvalStatus::Failed => worst_at(e.fidelity).map(|w| (&e.config, 2.0 * w)),
                EvalStatus::EarlyStopped => worst_at(e.fidelity).map(|w| {
                    let partial = if e.objective.is_finite() { e.objective } else { w };
                    (&e.config, partial.max(w))
                }),
            })
            .collect()
    }
}

/// Maps configurations to forest feature rows: numeric knobs to their unit
/// position, categorical knobs to one-hot columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    space: ConfigSpace,
    /// Knob index of each feature column.
    feature_knob: Vec<usize>,
}

impl Encoder {
    pub fn new(space: &ConfigSpace) -> Self {
        let mut feature_knob = Vec::new();
        for (i, k) in space.knobs().iter().enumerate() {
            match &k.domain {
                KnobDomain::Numeric { .. } => feature_knob.push(i),
                KnobDomain::Categorical(values) => feature_knob.extend(std::iter::repeat_n(i, values.len())),
            }
        }
        Self {
            space: space.clone(),
            feature_knob,
        }
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn n_features(&self) -> usize {
        self.feature_knob.len()
    }

    pub fn feature_knob(&self) -> &[usize] {
        &self.feature_knob
    }

    pub fn encode(&self, cfg: &Configuration) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.feature_knob.len());
        for (k, &v) in self.space.knobs().iter().zip(cfg.values()) {
            match &k.domain {
                KnobDomain::Numeric { .. } => row.push(k.to_unit(v)),
                KnobDomain::Categorical(values) => {
                    for c in 0..values.len() {
                        row.push(if c == v as usize { 1.0 } else { 0.0 });
                    }
                }
            }
        }
        row
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetTransform {
    Identity,
    Log,
}

impl TargetTransform {
    pub fn apply(self, y: f64) -> f64 {
        match self {
            TargetTransform::Identity => y,
            TargetTransform::Log => y.max(1e-12).ln(),
        }
    }

    pub fn invert(self, t: f64) -> f64 {
        match self {
            TargetTransform::Identity => t,
            TargetTransform::Log => t.exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn std_dev(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// A fitted forest over configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    forest: Forest,
    encoder: Encoder,
    transform: TargetTransform,
    training_size: usize,
    /// Best (lowest) training objective in seconds.
    best_objective: f64,
}

impl SurrogateModel {
    /// Fits on an observation set with the default forest and log targets.
    pub fn fit(data: &ObservationSet, space: &ConfigSpace, seed: u64) -> Result<Self, SurrogateError> {
        let pairs = data.training_pairs();
        let configs: Vec<&Configuration> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        Self::fit_xy(
            space,
            &configs,
            &y,
            &ForestParams::default(),
            TargetTransform::Log,
            seed,
        )
    }

    pub fn fit_xy(
        space: &ConfigSpace,
        configs: &[&Configuration],
        y: &[f64],
        params: &ForestParams,
        transform: TargetTransform,
        seed: u64,
    ) -> Result<Self, SurrogateError> {
        if configs.len() < 2 {
            return Err(SurrogateError::InsufficientData(configs.len()));
        }
        let encoder = Encoder::new(space);
        let rows: Vec<Vec<f64>> = configs.iter().map(|c| encoder.encode(c)).collect();
        let t: Vec<f64> = y.iter().map(|&v| transform.apply(v)).collect();
        let forest = Forest::fit(&rows, &t, params, seed);
        Ok(Self {
            forest,
            encoder,
            transform,
            training_size: configs.len(),
            best_objective: y.iter().copied().fold(f64::INFINITY, f64::min),
        })
    }

    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn transform(&self) -> TargetTransform {
        self.transform
    }

    pub fn training_size(&self) -> usize {
        self.training_size
    }

    pub fn best_objective(&self) -> f64 {
        self.best_objective
    }

    /// Mean and variance of the per-tree outputs, in the transformed domain.
    pub fn predict(&self, cfg: &Configuration) -> Prediction {
        let (mean, variance) = self.forest.predict(&self.encoder.encode(cfg));
        Prediction { mean, variance }
    }

    /// Point prediction mapped back to seconds.
    pub fn predict_objective(&self, cfg: &Configuration) -> f64 {
        self.transform.invert(self.predict(cfg).mean)
    }

    pub fn predict_many(&self, cfgs: &[Configuration]) -> Vec<Prediction> {
        cfgs.iter().map(|c| self.predict(c)).collect()
    }
}

/// Closed-form EI of a Gaussian for minimization: E[max(best - Y, 0)].
pub fn gaussian_ei(mean: f64, std_dev: f64, best: f64) -> f64 {
    let gap = best - mean;
    if std_dev <= 0.0 || !std_dev.is_finite() {
        return gap.max(0.0);
    }
    let z = gap / std_dev;
    (gap * std_normal_cdf(z) + std_dev * std_normal_pdf(z)).max(0.0)
}

/// EI of `cfg` against the incumbent `y_best` (seconds).
pub fn expected_improvement(model: &SurrogateModel, cfg: &Configuration, y_best: f64) -> f64 {
    let p = model.predict(cfg);
    gaussian_ei(p.mean, p.std_dev(), model.transform.apply(y_best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{lhs_sample, KnobSpec, SubSpace};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space() -> ConfigSpace {
        ConfigSpace::new(vec![
            KnobSpec::continuous("a", 0.0, 1.0, 0.5),
            KnobSpec::continuous("b", 0.0, 1.0, 0.5),
            KnobSpec::categorical("c", vec!["x", "y", "z"], 0),
        ])
        .unwrap()
    }

    fn dataset(n: usize, seed: u64, f: impl Fn(&Configuration) -> f64) -> ObservationSet {
        let s = space();
        let mut obs = ObservationSet::new();
        for c in lhs_sample(&SubSpace::full(&s), n, seed).unwrap() {
            let y = f(&c);
            obs.push(c, y, 1.0, EvalStatus::Ok);
        }
        obs
    }

    #[test]
    fn constant_data_predicts_constant() {
        let obs = dataset(30, 1, |_| 7.0);
        let m = SurrogateModel::fit(&obs, &space(), 3).unwrap();
        for c in lhs_sample(&SubSpace::full(&space()), 10, 9).unwrap() {
            let p = m.predict(&c);
            assert!((m.predict_objective(&c) - 7.0).abs() < 1e-12);
            assert_eq!(p.variance, 0.0);
        }
    }

    #[test]
    fn insufficient_data() {
        let obs = dataset(1, 1, |_| 1.0);
        assert_eq!(
            SurrogateModel::fit(&obs, &space(), 0).unwrap_err(),
            SurrogateError::InsufficientData(1)
        );
    }

    #[test]
    fn fits_better_than_shuffled_labels() {
        let f = |c: &Configuration| 1.0 + 5.0 * c.values()[0] + 2.0 * (c.values()[1] - 0.5).powi(2);
        let obs = dataset(60, 2, f);
        let m = SurrogateModel::fit(&obs, &space(), 4).unwrap();
        let mut shuffled = obs.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ys: Vec<f64> = shuffled.entries.iter().map(|e| e.objective).collect();
        for i in (1..ys.len()).rev() {
            ys.swap(i, rng.random_range(0..=i));
        }
        for (e, y) in shuffled.entries.iter_mut().zip(ys) {
            e.objective = y;
        }
        let ms = SurrogateModel::fit(&shuffled, &space(), 4).unwrap();
        let rmse = |m: &SurrogateModel| {
            let se: f64 = obs
                .entries
                .iter()
                .map(|e| (m.predict(&e.config).mean - e.objective.ln()).powi(2))
                .sum();
            (se / obs.len() as f64).sqrt()
        };
        assert!(rmse(&m) < rmse(&ms));
    }

    #[test]
    fn refit_is_deterministic() {
        let obs = dataset(25, 3, |c| 1.0 + c.values()[0]);
        let a = SurrogateModel::fit(&obs, &space(), 11).unwrap();
        let b = SurrogateModel::fit(&obs, &space(), 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failed_runs_get_penalty() {
        let s = space();
        let mut obs = ObservationSet::new();
        let cfgs = lhs_sample(&SubSpace::full(&s), 4, 0).unwrap();
        obs.push(cfgs[0].clone(), 10.0, 1.0, EvalStatus::Ok);
        obs.push(cfgs[1].clone(), 30.0, 1.0, EvalStatus::Ok);
        obs.push(cfgs[2].clone(), f64::NAN, 1.0, EvalStatus::Failed);
        obs.push(cfgs[3].clone(), 12.0, 1.0, EvalStatus::EarlyStopped);
        let y: Vec<f64> = obs.training_pairs().iter().map(|p| p.1).collect();
        assert_eq!(y, vec![10.0, 30.0, 60.0, 30.0]);
    }

    #[test]
    fn ei_deterministic_cases() {
        assert_eq!(gaussian_ei(7.0, 0.0, 10.0), 3.0);
        assert_eq!(gaussian_ei(11.0, 0.0, 10.0), 0.0);
        let v = gaussian_ei(2.0, 1.0, 2.0);
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ei_nonnegative_and_monotone_in_sigma() {
        for mi in -20..=20 {
            let mu = mi as f64 * 0.25;
            let mut prev = -1.0;
            for si in 0..=40 {
                let sigma = si as f64 * 0.1;
                let v = gaussian_ei(mu, sigma, 0.0);
                assert!(v >= 0.0);
                assert!(v >= prev - 1e-12, "mu {mu} sigma {sigma}");
                prev = v;
            }
        }
    }
}
