//! Knob search space: definitions, sampling, mutation and compressed subspaces.
//!
//! A [`Configuration`] is stored as one `f64` per knob in [`ConfigSpace`]
//! order. Numeric knobs carry their value directly (integers are whole
//! numbers); categorical knobs carry the index of the chosen value.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("invalid knob `{name}`: {reason}")]
    InvalidKnob { name: String, reason: String },
    #[error("duplicate knob name `{0}`")]
    DuplicateKnob(String),
    #[error("configuration has {got} values, space has {expected} knobs")]
    Dimension { expected: usize, got: usize },
    #[error("value {value} of knob `{knob}` is outside its range")]
    OutOfRange { knob: String, value: f64 },
    #[error("unknown knob `{0}` in configuration")]
    UnknownKnob(String),
    #[error("missing knob `{0}` in configuration")]
    MissingKnob(String),
    #[error("degenerate subspace: every knob is removed")]
    Degenerate,
    #[error("sample size must be at least 1")]
    EmptySample,
    #[error("malformed space definition: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnobKind {
    Continuous,
    Integer,
    Categorical,
}

/// Definition of one tunable knob.
#[derive(Debug, Clone, PartialEq)]
pub struct KnobSpec {
    pub name: String,
    pub kind: KnobKind,
    pub domain: KnobDomain,
    pub log_scale: bool,
    /// Default value in the internal encoding (category index for categoricals).
    pub default: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KnobDomain {
    Numeric { low: f64, high: f64 },
    Categorical(Vec<Value>),
}

#[derive(Serialize, Deserialize)]
struct RawKnob {
    name: String,
    kind: KnobKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<Value>>,
    #[serde(default)]
    log_scale: bool,
    default: Value,
}

impl KnobSpec {
    pub fn continuous(name: &str, low: f64, high: f64, default: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: KnobKind::Continuous,
            domain: KnobDomain::Numeric { low, high },
            log_scale: false,
            default,
        }
    }

    pub fn integer(name: &str, low: i64, high: i64, default: i64) -> Self {
        Self {
            name: name.to_string(),
            kind: KnobKind::Integer,
            domain: KnobDomain::Numeric {
                low: low as f64,
                high: high as f64,
            },
            log_scale: false,
            default: default as f64,
        }
    }

    pub fn categorical<V: Into<Value>>(name: &str, values: Vec<V>, default_index: usize) -> Self {
        Self {
            name: name.to_string(),
            kind: KnobKind::Categorical,
            domain: KnobDomain::Categorical(values.into_iter().map(Into::into).collect()),
            log_scale: false,
            default: default_index as f64,
        }
    }

    pub fn with_log_scale(mut self) -> Self {
        self.log_scale = true;
        self
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == KnobKind::Categorical
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self.domain {
            KnobDomain::Numeric { low, high } => Some((low, high)),
            KnobDomain::Categorical(_) => None,
        }
    }

    pub fn n_categories(&self) -> usize {
        match &self.domain {
            KnobDomain::Categorical(v) => v.len(),
            KnobDomain::Numeric { .. } => 0,
        }
    }

    pub fn validate(&self) -> Result<(), SpaceError> {
        let bad = |reason: &str| SpaceError::InvalidKnob {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        match &self.domain {
            KnobDomain::Numeric { low, high } => {
                if self.kind == KnobKind::Categorical {
                    return Err(bad("categorical knob needs a value list"));
                }
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(bad("range requires finite low < high"));
                }
                if self.log_scale && *low <= 0.0 {
                    return Err(bad("log-scale range must be positive"));
                }
            }
            KnobDomain::Categorical(values) => {
                if self.kind != KnobKind::Categorical {
                    return Err(bad("numeric knob needs a range"));
                }
                if values.is_empty() {
                    return Err(bad("empty value list"));
                }
                for (i, v) in values.iter().enumerate() {
                    if values[..i].contains(v) {
                        return Err(bad("duplicate categorical value"));
                    }
                }
            }
        }
        if !self.contains(self.default) {
            return Err(bad("default lies outside the range"));
        }
        Ok(())
    }

    /// Whether an internally encoded value is admissible for this knob.
    pub fn contains(&self, v: f64) -> bool {
        if !v.is_finite() {
            return false;
        }
        match &self.domain {
            KnobDomain::Numeric { low, high } => {
                v >= *low && v <= *high && (self.kind != KnobKind::Integer || v.fract() == 0.0)
            }
            KnobDomain::Categorical(values) => v.fract() == 0.0 && v >= 0.0 && (v as usize) < values.len(),
        }
    }

    /// Maps a numeric value to its position in `[0, 1]` (log domain for log knobs).
    pub fn to_unit(&self, v: f64) -> f64 {
        match self.domain {
            KnobDomain::Numeric { low, high } => {
                if self.log_scale {
                    (v.ln() - low.ln()) / (high.ln() - low.ln())
                } else {
                    (v - low) / (high - low)
                }
            }
            KnobDomain::Categorical(ref values) => {
                if values.len() <= 1 {
                    0.0
                } else {
                    v / (values.len() - 1) as f64
                }
            }
        }
    }

    /// Inverse of [`KnobSpec::to_unit`] for numeric knobs, without integer rounding.
    pub fn from_unit(&self, u: f64) -> f64 {
        match self.domain {
            KnobDomain::Numeric { low, high } => {
                let u = u.clamp(0.0, 1.0);
                let v = if self.log_scale {
                    (low.ln() + u * (high.ln() - low.ln())).exp()
                } else {
                    low + u * (high - low)
                };
                v.clamp(low, high)
            }
            KnobDomain::Categorical(_) => u,
        }
    }

    /// Transform into the domain where sampling and density modelling are linear.
    pub fn to_linear(&self, v: f64) -> f64 {
        if self.log_scale {
            v.ln()
        } else {
            v
        }
    }

    pub fn from_linear(&self, t: f64) -> f64 {
        if self.log_scale {
            t.exp()
        } else {
            t
        }
    }

    fn encode_json(&self, v: &Value) -> Option<f64> {
        match &self.domain {
            KnobDomain::Numeric { .. } => v.as_f64(),
            KnobDomain::Categorical(values) => values.iter().position(|x| x == v).map(|i| i as f64),
        }
    }

    fn decode_json(&self, v: f64) -> Value {
        match &self.domain {
            KnobDomain::Numeric { .. } => {
                if self.kind == KnobKind::Integer && v.abs() < 9.0e15 {
                    Value::from(v as i64)
                } else {
                    Value::from(v)
                }
            }
            KnobDomain::Categorical(values) => values[v as usize].clone(),
        }
    }

    fn to_raw(&self) -> RawKnob {
        let (range, values) = match &self.domain {
            KnobDomain::Numeric { low, high } => (Some([*low, *high]), None),
            KnobDomain::Categorical(v) => (None, Some(v.clone())),
        };
        RawKnob {
            name: self.name.clone(),
            kind: self.kind,
            range,
            values,
            log_scale: self.log_scale,
            default: self.decode_json(self.default),
        }
    }

    fn from_raw(raw: RawKnob) -> Result<Self, SpaceError> {
        let bad = |reason: &str| SpaceError::InvalidKnob {
            name: raw.name.clone(),
            reason: reason.to_string(),
        };
        let domain = match (raw.kind, &raw.range, &raw.values) {
            (KnobKind::Categorical, _, Some(values)) => KnobDomain::Categorical(values.clone()),
            (KnobKind::Categorical, _, None) => return Err(bad("categorical knob needs `values`")),
            (_, Some([low, high]), _) => KnobDomain::Numeric { low: *low, high: *high },
            (_, None, _) => return Err(bad("numeric knob needs `range`")),
        };
        let mut knob = KnobSpec {
            name: raw.name.clone(),
            kind: raw.kind,
            domain,
            log_scale: raw.log_scale,
            default: 0.0,
        };
        knob.default = knob
            .encode_json(&raw.default)
            .ok_or_else(|| bad("default is not a member of the range"))?;
        knob.validate()?;
        Ok(knob)
    }
}

/// Ordered list of knobs; the order defines the configuration vector layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSpace {
    knobs: Vec<KnobSpec>,
}

#[derive(Serialize, Deserialize)]
struct RawSpace {
    knobs: Vec<RawKnob>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    removed: Vec<String>,
}

impl ConfigSpace {
    pub fn new(knobs: Vec<KnobSpec>) -> Result<Self, SpaceError> {
        let mut seen = BTreeSet::new();
        for k in &knobs {
            k.validate()?;
            if !seen.insert(k.name.clone()) {
                return Err(SpaceError::DuplicateKnob(k.name.clone()));
            }
        }
        Ok(Self { knobs })
    }

    pub fn knobs(&self) -> &[KnobSpec] {
        &self.knobs
    }

    pub fn len(&self) -> usize {
        self.knobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knobs.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.knobs.iter().position(|k| k.name == name)
    }

    pub fn default_config(&self) -> Configuration {
        Configuration(self.knobs.iter().map(|k| k.default).collect())
    }

    pub fn validate(&self, cfg: &Configuration) -> Result<(), SpaceError> {
        if cfg.len() != self.len() {
            return Err(SpaceError::Dimension {
                expected: self.len(),
                got: cfg.len(),
            });
        }
        for (k, &v) in self.knobs.iter().zip(cfg.values()) {
            if !k.contains(v) {
                return Err(SpaceError::OutOfRange {
                    knob: k.name.clone(),
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// Configuration as a JSON object keyed by knob name.
    pub fn config_to_json(&self, cfg: &Configuration) -> Value {
        let mut map = Map::new();
        for (k, &v) in self.knobs.iter().zip(cfg.values()) {
            map.insert(k.name.clone(), k.decode_json(v));
        }
        Value::Object(map)
    }

    pub fn config_from_json(&self, value: &Value) -> Result<Configuration, SpaceError> {
        let obj = value
            .as_object()
            .ok_or_else(|| SpaceError::Json(serde::de::Error::custom("configuration must be an object")))?;
        for key in obj.keys() {
            if self.index_of(key).is_none() {
                return Err(SpaceError::UnknownKnob(key.clone()));
            }
        }
        let mut values = Vec::with_capacity(self.len());
        for k in &self.knobs {
            let raw = obj
                .get(&k.name)
                .ok_or_else(|| SpaceError::MissingKnob(k.name.clone()))?;
            let v = k.encode_json(raw).ok_or_else(|| SpaceError::OutOfRange {
                knob: k.name.clone(),
                value: raw.as_f64().unwrap_or(f64::NAN),
            })?;
            values.push(v);
        }
        let cfg = Configuration(values);
        self.validate(&cfg)?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(RawSpace {
            knobs: self.knobs.iter().map(KnobSpec::to_raw).collect(),
            removed: Vec::new(),
        })
        .expect("space serialization")
    }

    pub fn from_json(value: Value) -> Result<Self, SpaceError> {
        let raw: RawSpace = serde_json::from_value(value)?;
        Self::new(
            raw.knobs
                .into_iter()
                .map(KnobSpec::from_raw)
                .collect::<Result<_, _>>()?,
        )
    }

    pub fn load(path: &Path) -> Result<Self, SpaceError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), SpaceError> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_json())?)?;
        Ok(())
    }
}

/// One value per knob in [`ConfigSpace`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration(pub Vec<f64>);

impl Configuration {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Exact bit-level key, used for de-duplication.
    pub fn key(&self) -> Vec<u64> {
        self.0.iter().map(|v| v.to_bits()).collect()
    }
}

/// Per-knob state of a compressed space.
#[derive(Debug, Clone, PartialEq)]
pub enum KnobStatus {
    Unchanged,
    Removed,
    Narrowed(NarrowedRange),
}

#[derive(Debug, Clone, PartialEq)]
pub enum NarrowedRange {
    Numeric {
        low: f64,
        high: f64,
    },
    /// Allowed category indices, ascending.
    Categories(Vec<usize>),
}

/// The effective sampling domain of one knob.
#[derive(Debug, Clone, PartialEq)]
pub enum ActiveDomain {
    Fixed(f64),
    Numeric { low: f64, high: f64 },
    Categories(Vec<usize>),
}

/// A compressed view of a parent [`ConfigSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct SubSpace {
    parent: ConfigSpace,
    status: Vec<KnobStatus>,
}

impl SubSpace {
    pub fn full(parent: &ConfigSpace) -> Self {
        Self {
            parent: parent.clone(),
            status: vec![KnobStatus::Unchanged; parent.len()],
        }
    }

    pub fn new(parent: &ConfigSpace, status: Vec<KnobStatus>) -> Result<Self, SpaceError> {
        if status.len() != parent.len() {
            return Err(SpaceError::Dimension {
                expected: parent.len(),
                got: status.len(),
            });
        }
        for (k, s) in parent.knobs().iter().zip(&status) {
            let bad = |reason: &str| SpaceError::InvalidKnob {
                name: k.name.clone(),
                reason: reason.to_string(),
            };
            match (s, &k.domain) {
                (
                    KnobStatus::Narrowed(NarrowedRange::Numeric { low, high }),
                    KnobDomain::Numeric { low: pl, high: ph },
                ) => {
                    if !(low <= high && low >= pl && high <= ph) {
                        return Err(bad("narrowed range must lie inside the parent range"));
                    }
                }
                (KnobStatus::Narrowed(NarrowedRange::Categories(c)), KnobDomain::Categorical(values)) => {
                    if c.is_empty() || c.iter().any(|&i| i >= values.len()) {
                        return Err(bad("narrowed categories must be a non-empty subset"));
                    }
                }
                (KnobStatus::Narrowed(_), _) => return Err(bad("narrowed range kind mismatch")),
                _ => {}
            }
        }
        Ok(Self {
            parent: parent.clone(),
            status,
        })
    }

    pub fn parent(&self) -> &ConfigSpace {
        &self.parent
    }

    pub fn status(&self) -> &[KnobStatus] {
        &self.status
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.status.len())
            .filter(|&i| self.status[i] != KnobStatus::Removed)
            .collect()
    }

    pub fn removed_names(&self) -> Vec<String> {
        self.parent
            .knobs()
            .iter()
            .zip(&self.status)
            .filter(|(_, s)| **s == KnobStatus::Removed)
            .map(|(k, _)| k.name.clone())
            .collect()
    }

    pub fn active_domain(&self, i: usize) -> ActiveDomain {
        let knob = &self.parent.knobs()[i];
        match (&self.status[i], &knob.domain) {
            (KnobStatus::Removed, _) => ActiveDomain::Fixed(knob.default),
            (KnobStatus::Narrowed(NarrowedRange::Numeric { low, high }), _) => {
                ActiveDomain::Numeric { low: *low, high: *high }
            }
            (KnobStatus::Narrowed(NarrowedRange::Categories(c)), _) => ActiveDomain::Categories(c.clone()),
            (KnobStatus::Unchanged, KnobDomain::Numeric { low, high }) => {
                ActiveDomain::Numeric { low: *low, high: *high }
            }
            (KnobStatus::Unchanged, KnobDomain::Categorical(values)) => {
                ActiveDomain::Categories((0..values.len()).collect())
            }
        }
    }

    /// Full-dimensional validity: removed knobs must sit at their default.
    pub fn contains(&self, cfg: &Configuration) -> bool {
        if cfg.len() != self.parent.len() {
            return false;
        }
        (0..cfg.len()).all(|i| {
            let v = cfg.values()[i];
            let knob = &self.parent.knobs()[i];
            knob.contains(v)
                && match self.active_domain(i) {
                    ActiveDomain::Fixed(d) => v == d,
                    ActiveDomain::Numeric { low, high } => v >= low && v <= high,
                    ActiveDomain::Categories(c) => c.contains(&(v as usize)),
                }
        })
    }

    /// Drops removed knobs from a full configuration.
    pub fn project(&self, cfg: &Configuration) -> Configuration {
        Configuration(self.active_indices().into_iter().map(|i| cfg.values()[i]).collect())
    }

    /// Expands a configuration over the active knobs into the full space,
    /// pinning removed knobs to their defaults.
    pub fn materialize(&self, cfg_in_sub: &Configuration) -> Result<Configuration, SpaceError> {
        let active = self.active_indices();
        if cfg_in_sub.len() != active.len() {
            return Err(SpaceError::Dimension {
                expected: active.len(),
                got: cfg_in_sub.len(),
            });
        }
        let mut values: Vec<f64> = self.parent.knobs().iter().map(|k| k.default).collect();
        for (&i, &v) in active.iter().zip(cfg_in_sub.values()) {
            values[i] = v;
        }
        let full = Configuration(values);
        for &i in &active {
            let v = full.values()[i];
            let ok = self.parent.knobs()[i].contains(v)
                && match self.active_domain(i) {
                    ActiveDomain::Numeric { low, high } => v >= low && v <= high,
                    ActiveDomain::Categories(c) => c.contains(&(v as usize)),
                    ActiveDomain::Fixed(d) => v == d,
                };
            if !ok {
                return Err(SpaceError::OutOfRange {
                    knob: self.parent.knobs()[i].name.clone(),
                    value: v,
                });
            }
        }
        Ok(full)
    }

    /// Serializes as a space document whose ranges are the narrowed ones,
    /// plus a `removed` list.
    pub fn to_json(&self) -> Value {
        let knobs = self
            .parent
            .knobs()
            .iter()
            .zip(&self.status)
            .map(|(k, s)| {
                let mut narrowed = k.clone();
                match s {
                    KnobStatus::Narrowed(NarrowedRange::Numeric { low, high }) => {
                        narrowed.domain = KnobDomain::Numeric { low: *low, high: *high };
                        narrowed.default = k.default.clamp(*low, *high);
                        let mut raw = narrowed.to_raw();
                        raw.default = k.decode_json(narrowed.default);
                        raw
                    }
                    KnobStatus::Narrowed(NarrowedRange::Categories(c)) => {
                        let mut raw = k.to_raw();
                        if let KnobDomain::Categorical(values) = &k.domain {
                            raw.values = Some(c.iter().map(|&i| values[i].clone()).collect());
                            if !c.contains(&(k.default as usize)) {
                                raw.default = values[c[0]].clone();
                            }
                        }
                        raw
                    }
                    _ => k.to_raw(),
                }
            })
            .collect();
        serde_json::to_value(RawSpace {
            knobs,
            removed: self.removed_names(),
        })
        .expect("subspace serialization")
    }
}

impl From<&ConfigSpace> for SubSpace {
    fn from(space: &ConfigSpace) -> Self {
        SubSpace::full(space)
    }
}

fn round_integer(knob: &KnobSpec, v: f64, low: f64, high: f64) -> f64 {
    if knob.kind == KnobKind::Integer {
        // f64::round rounds half away from zero.
        v.round().clamp(low.ceil(), high.floor())
    } else {
        v.clamp(low, high)
    }
}

/// Latin hypercube sample of `n` full-dimensional configurations.
///
/// Each numeric active knob gets exactly one value in each of `n`
/// equal-probability strata (log strata for log-scale knobs); categorical
/// knobs are drawn uniformly from their allowed values.
pub fn lhs_sample(space: &SubSpace, n: usize, seed: u64) -> Result<Vec<Configuration>, SpaceError> {
    if n == 0 {
        return Err(SpaceError::EmptySample);
    }
    if space.active_indices().is_empty() {
        return Err(SpaceError::Degenerate);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = space.parent().len();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dims);
    for i in 0..dims {
        let knob = &space.parent().knobs()[i];
        let col = match space.active_domain(i) {
            ActiveDomain::Fixed(v) => vec![v; n],
            ActiveDomain::Numeric { low, high } => {
                let (lo, hi) = (knob.to_linear(low), knob.to_linear(high));
                let mut strata: Vec<usize> = (0..n).collect();
                strata.shuffle(&mut rng);
                strata
                    .into_iter()
                    .map(|s| {
                        let u = (s as f64 + rng.random::<f64>()) / n as f64;
                        round_integer(knob, knob.from_linear(lo + u * (hi - lo)), low, high)
                    })
                    .collect()
            }
            ActiveDomain::Categories(c) => (0..n).map(|_| c[rng.random_range(0..c.len())] as f64).collect(),
        };
        columns.push(col);
    }
    Ok((0..n)
        .map(|r| Configuration(columns.iter().map(|c| c[r]).collect()))
        .collect())
}

/// Uniform random configurations (independent draws, no stratification).
pub fn random_sample(space: &SubSpace, n: usize, rng: &mut impl Rng) -> Vec<Configuration> {
    let dims = space.parent().len();
    (0..n)
        .map(|_| {
            Configuration(
                (0..dims)
                    .map(|i| {
                        let knob = &space.parent().knobs()[i];
                        match space.active_domain(i) {
                            ActiveDomain::Fixed(v) => v,
                            ActiveDomain::Numeric { low, high } => {
                                let (lo, hi) = (knob.to_linear(low), knob.to_linear(high));
                                let u: f64 = rng.random();
                                round_integer(knob, knob.from_linear(lo + u * (hi - lo)), low, high)
                            }
                            ActiveDomain::Categories(c) => c[rng.random_range(0..c.len())] as f64,
                        }
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Perturbs each active knob independently with probability `strength`.
///
/// Numeric knobs take a Gaussian step with sigma equal to 20% of the
/// (linearized) active range, truncated to the range by rejection.
/// Categorical knobs are resampled uniformly.
pub fn mutate(cfg: &Configuration, space: &SubSpace, strength: f64, seed: u64) -> Configuration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = cfg.clone();
    for i in 0..cfg.len() {
        if strength <= 0.0 || rng.random::<f64>() >= strength {
            continue;
        }
        let knob = &space.parent().knobs()[i];
        match space.active_domain(i) {
            ActiveDomain::Fixed(_) => {}
            ActiveDomain::Numeric { low, high } => {
                let (lo, hi) = (knob.to_linear(low), knob.to_linear(high));
                let sigma = 0.2 * (hi - lo);
                let start = knob.to_linear(cfg.values()[i].clamp(low, high));
                let mut next = start;
                for _ in 0..64 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let cand = start + sigma * z;
                    if cand >= lo && cand <= hi {
                        next = cand;
                        break;
                    }
                }
                out.0[i] = round_integer(knob, knob.from_linear(next), low, high);
            }
            ActiveDomain::Categories(c) => {
                out.0[i] = c[rng.random_range(0..c.len())] as f64;
            }
        }
    }
    out
}
