//! Search-space compression from weighted source tasks.
//!
//! For each source, configurations better than the task median are
//! explained with TreeSHAP; knob values whose attribution lowers latency
//! form that knob's promising set. A knob whose set is empty for a weighted
//! majority of sources is removed; otherwise its range shrinks to the
//! minimal region holding `alpha` of the pooled value density.

pub mod density;
pub mod shap;

use thiserror::Error;

use crate::space::{ConfigSpace, Configuration, KnobStatus, SubSpace};
use crate::stats::{median, variance};
use crate::task::TaskRecord;

pub use density::{fit_density, minimal_alpha_region, DensityModel, GRID_CELLS};
pub use shap::{shap_attribution, ShapValues};

#[derive(Debug, Error, PartialEq)]
pub enum CompressionError {
    #[error("source task `{0}` has no fitted surrogate")]
    NoSurrogate(String),
    #[error("promising values of knob `{0}` carry no weight")]
    ZeroWeight(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionParams {
    pub alpha: f64,
    /// A value counts as latency-reducing when its attribution is below
    /// `-shap_tolerance` times the standard deviation of the surrogate's
    /// predictions over the task's observations.
    pub shap_tolerance: f64,
}

impl Default for CompressionParams {
    fn default() -> Self {
        Self {
            alpha: 0.65,
            shap_tolerance: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromisingValueSet {
    pub knob: String,
    /// `(value, weight)` pairs; values use the configuration encoding.
    pub entries: Vec<(f64, f64)>,
}

impl PromisingValueSet {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scaled(&self, w: f64) -> Self {
        Self {
            knob: self.knob.clone(),
            entries: self.entries.iter().map(|&(v, x)| (v, x * w)).collect(),
        }
    }
}

/// Full-fidelity configurations strictly better than the task median.
#[derive(Debug, Clone, PartialEq)]
pub struct PromisingConfigs {
    pub median: f64,
    pub configs: Vec<(Configuration, f64)>,
}

pub fn promising_configs(task: &TaskRecord) -> PromisingConfigs {
    let full = task.full_fidelity();
    let latencies: Vec<f64> = full.iter().map(|p| p.1).collect();
    let Some(med) = median(&latencies) else {
        return PromisingConfigs {
            median: f64::NAN,
            configs: Vec::new(),
        };
    };
    PromisingConfigs {
        median: med,
        configs: full
            .into_iter()
            .filter(|(_, f)| *f < med)
            .map(|(o, f)| (o.config.clone(), f))
            .collect(),
    }
}

/// Promising value sets of one source, one per knob, weighted by `weight`.
pub fn extract_promising_values(
    task: &TaskRecord,
    weight: f64,
    params: &CompressionParams,
) -> Result<Vec<PromisingValueSet>, CompressionError> {
    let model = task
        .surrogate
        .as_ref()
        .ok_or_else(|| CompressionError::NoSurrogate(task.task_id.clone()))?;
    let space = model.encoder().space();
    let promising = promising_configs(task);
    let mut sets: Vec<PromisingValueSet> = space
        .knobs()
        .iter()
        .map(|k| PromisingValueSet {
            knob: k.name.clone(),
            entries: Vec::new(),
        })
        .collect();
    if promising.configs.is_empty() {
        return Ok(sets);
    }
    let threshold = if params.shap_tolerance > 0.0 {
        let preds: Vec<f64> = task
            .full_fidelity()
            .iter()
            .map(|(o, _)| model.predict(&o.config).mean)
            .collect();
        -params.shap_tolerance * variance(&preds).sqrt()
    } else {
        0.0
    };
    for (cfg, f) in &promising.configs {
        let v = weight * (promising.median - f) / promising.median;
        let attribution = shap_attribution(model, cfg);
        for (j, &c) in attribution.contributions.iter().enumerate() {
            if c < threshold {
                sets[j].entries.push((cfg.values()[j], v));
            }
        }
    }
    Ok(sets)
}

/// What compression decided for one knob.
#[derive(Debug, Clone, PartialEq)]
pub struct KnobDecision {
    pub knob: String,
    /// Normalized weight of sources with an empty promising set.
    pub empty_vote: f64,
    pub status: KnobStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedSpace {
    pub subspace: SubSpace,
    pub decisions: Vec<KnobDecision>,
    /// Every knob voted out; the original space is used instead.
    pub degenerate: bool,
}

/// Compresses `space` from per-source promising sets (unit-weight) and the
/// source weights.
pub fn compress_from_sets(
    sources: &[(&[PromisingValueSet], f64)],
    space: &ConfigSpace,
    params: &CompressionParams,
) -> CompressedSpace {
    let total_w: f64 = sources.iter().map(|s| s.1.max(0.0)).sum();
    let mut decisions = Vec::with_capacity(space.len());
    for (j, knob) in space.knobs().iter().enumerate() {
        if total_w <= 0.0 {
            decisions.push(KnobDecision {
                knob: knob.name.clone(),
                empty_vote: 0.0,
                status: KnobStatus::Unchanged,
            });
            continue;
        }
        let empty: f64 = sources
            .iter()
            .filter(|(sets, _)| sets[j].is_empty())
            .map(|s| s.1.max(0.0))
            .sum::<f64>();
        let vote = empty / total_w;
        let status = if vote > 0.5 {
            KnobStatus::Removed
        } else {
            let pooled: Vec<(f64, f64)> = sources
                .iter()
                .flat_map(|(sets, w)| sets[j].entries.iter().map(move |&(v, x)| (v, x * w.max(0.0))))
                .collect();
            match fit_density(&pooled, knob) {
                Ok(d) => KnobStatus::Narrowed(minimal_alpha_region(&d, params.alpha, knob)),
                Err(_) => KnobStatus::Unchanged,
            }
        };
        decisions.push(KnobDecision {
            knob: knob.name.clone(),
            empty_vote: vote,
            status,
        });
    }
    let degenerate = decisions.iter().all(|d| d.status == KnobStatus::Removed);
    let subspace = if degenerate {
        log::warn!("compression removed every knob; keeping the original space");
        SubSpace::full(space)
    } else {
        SubSpace::new(space, decisions.iter().map(|d| d.status.clone()).collect())
            .expect("regions lie inside knob ranges")
    };
    CompressedSpace {
        subspace,
        decisions,
        degenerate,
    }
}

/// Compresses `space` using weighted source tasks with fitted surrogates.
pub fn build_compressed_space(
    sources: &[(&TaskRecord, f64)],
    space: &ConfigSpace,
    params: &CompressionParams,
) -> Result<CompressedSpace, CompressionError> {
    let sets: Vec<Vec<PromisingValueSet>> = sources
        .iter()
        .map(|(t, _)| extract_promising_values(t, 1.0, params))
        .collect::<Result<_, _>>()?;
    let refs: Vec<(&[PromisingValueSet], f64)> =
        sets.iter().zip(sources).map(|(s, (_, w))| (s.as_slice(), *w)).collect();
    Ok(compress_from_sets(&refs, space, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{lhs_sample, KnobSpec, NarrowedRange};
    use crate::task::{EvalStatus, MetaFeature, TaskObservation};

    fn space() -> ConfigSpace {
        ConfigSpace::new(vec![
            KnobSpec::continuous("a", 0.0, 1.0, 0.5),
            KnobSpec::continuous("b", 0.0, 1.0, 0.5),
        ])
        .unwrap()
    }

    fn task(latencies: &[f64]) -> TaskRecord {
        let mut t = TaskRecord::new("t", MetaFeature::new(vec![0.0; 34]).unwrap(), vec!["q".into()]);
        let cfgs = lhs_sample(&SubSpace::full(&space()), latencies.len(), 1).unwrap();
        for (c, &l) in cfgs.into_iter().zip(latencies) {
            t.observations.push(TaskObservation {
                config: c,
                latency: vec![Some(l)],
                cost: vec![Some(l)],
                status: EvalStatus::Ok,
                delta: 1.0,
            });
        }
        t
    }

    fn set(knob: &str, entries: Vec<(f64, f64)>) -> PromisingValueSet {
        PromisingValueSet {
            knob: knob.into(),
            entries,
        }
    }

    #[test]
    fn median_split() {
        let p = promising_configs(&task(&[10.0, 20.0, 30.0, 40.0]));
        assert_eq!(p.median, 25.0);
        let l: Vec<f64> = p.configs.iter().map(|c| c.1).collect();
        assert_eq!(l, vec![10.0, 20.0]);
        assert!(promising_configs(&task(&[5.0; 6])).configs.is_empty());
    }

    #[test]
    fn promising_weight_formula() {
        let mut t = task(&[80.0, 100.0, 120.0]);
        let s = space();
        t.fit_surrogate(&s, 0).unwrap();
        let sets = extract_promising_values(&t, 0.5, &CompressionParams::default()).unwrap();
        for e in sets.iter().flat_map(|s| &s.entries) {
            assert!((e.1 - 0.1).abs() < 1e-12);
        }
        let zero = extract_promising_values(&t, 0.0, &CompressionParams::default()).unwrap();
        assert!(zero.iter().flat_map(|s| &s.entries).all(|e| e.1 == 0.0));
    }

    #[test]
    fn removal_vote_is_strict() {
        let s = space();
        let full = vec![set("a", vec![(0.5, 1.0)]), set("b", vec![(0.5, 1.0)])];
        let empty_a = vec![set("a", vec![]), set("b", vec![(0.4, 1.0)])];
        let r = compress_from_sets(&[(&empty_a, 0.6), (&full, 0.4)], &s, &CompressionParams::default());
        assert_eq!(r.decisions[0].status, KnobStatus::Removed);
        let r = compress_from_sets(&[(&empty_a, 0.5), (&full, 0.5)], &s, &CompressionParams::default());
        assert_ne!(r.decisions[0].status, KnobStatus::Removed);
        let r2 = compress_from_sets(&[(&empty_a, 5.0), (&full, 5.0)], &s, &CompressionParams::default());
        assert_eq!(r, r2);
    }

    #[test]
    fn all_removed_falls_back() {
        let s = space();
        let none = vec![set("a", vec![]), set("b", vec![])];
        let r = compress_from_sets(&[(&none, 1.0)], &s, &CompressionParams::default());
        assert!(r.degenerate);
        assert_eq!(r.subspace, SubSpace::full(&s));
    }

    #[test]
    fn zero_weight_knob_unchanged() {
        let s = space();
        let sets = vec![set("a", vec![(0.3, 0.0)]), set("b", vec![(0.3, 1.0)])];
        let r = compress_from_sets(&[(&sets, 1.0)], &s, &CompressionParams::default());
        assert_eq!(r.decisions[0].status, KnobStatus::Unchanged);
        assert!(matches!(
            r.decisions[1].status,
            KnobStatus::Narrowed(NarrowedRange::Numeric { .. })
        ));
    }

    #[test]
    fn high_values_promising_when_they_help() {
        let s = space();
        let mut t = TaskRecord::new("t", MetaFeature::new(vec![0.0; 34]).unwrap(), vec!["q".into()]);
        for c in lhs_sample(&SubSpace::full(&s), 60, 4).unwrap() {
            let l = 10.0 - 6.0 * c.values()[0] + 0.2 * c.values()[1];
            t.observations.push(TaskObservation {
                config: c,
                latency: vec![Some(l)],
                cost: vec![Some(l)],
                status: EvalStatus::Ok,
                delta: 1.0,
            });
        }
        t.fit_surrogate(&s, 1).unwrap();
        let sets = extract_promising_values(&t, 1.0, &CompressionParams::default()).unwrap();
        let total: f64 = sets[0].entries.iter().map(|e| e.1).sum();
        let high: f64 = sets[0].entries.iter().filter(|e| e.0 > 0.5).map(|e| e.1).sum();
        assert!(high / total > 0.9, "{}", high / total);
    }
}
