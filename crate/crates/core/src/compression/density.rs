//! Weighted value densities and minimal alpha-mass regions.

use crate::space::{KnobDomain, KnobKind, KnobSpec, NarrowedRange};
use crate::stats::{std_normal_cdf, std_normal_pdf, weighted_quantile};

use super::CompressionError;

/// Grid cells used to discretize continuous densities.
pub const GRID_CELLS: usize = 512;

/// Bandwidth floor as a fraction of the knob's (linearized) width.
const MIN_BANDWIDTH_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum DensityModel {
    /// Gaussian KDE in the knob's linear domain (log domain for log knobs).
    Kde {
        /// `(theta, weight)` with theta in the linear domain.
        samples: Vec<(f64, f64)>,
        bandwidth: f64,
        /// Support in the linear domain.
        low: f64,
        high: f64,
    },
    /// Normalized mass per category index.
    Discrete(Vec<f64>),
}

/// Silverman's rule on a weighted sample.
///
/// `h = 0.9 * min(sd_w, iqr_w / 1.34) * n_eff^(-1/5)`. When one spread
/// estimate is zero the other is used; when both are zero the caller's floor
/// applies.
pub fn silverman_bandwidth(samples: &[(f64, f64)]) -> f64 {
    let total: f64 = samples.iter().map(|s| s.1).sum();
    let sq: f64 = samples.iter().map(|s| s.1 * s.1).sum();
    let n_eff = total * total / sq;
    let mean = samples.iter().map(|(t, w)| t * w).sum::<f64>() / total;
    let sd = (samples.iter().map(|(t, w)| w * (t - mean).powi(2)).sum::<f64>() / total).sqrt();
    let iqr = weighted_quantile(samples, 0.75) - weighted_quantile(samples, 0.25);
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        (false, true) => iqr / 1.34,
        (false, false) => 0.0,
    };
    0.9 * spread * n_eff.powf(-0.2)
}

/// Fits the value density of one knob from `(value, weight)` entries.
pub fn fit_density(entries: &[(f64, f64)], knob: &KnobSpec) -> Result<DensityModel, CompressionError> {
    let total: f64 = entries.iter().map(|e| e.1).sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(CompressionError::ZeroWeight(knob.name.clone()));
    }
    match &knob.domain {
        KnobDomain::Categorical(values) => {
            let mut mass = vec![0.0; values.len()];
            for &(v, w) in entries {
                mass[v as usize] += w;
            }
            mass.iter_mut().for_each(|m| *m /= total);
            Ok(DensityModel::Discrete(mass))
        }
        KnobDomain::Numeric { low, high } => {
            let (lo, hi) = (knob.to_linear(*low), knob.to_linear(*high));
            let samples: Vec<(f64, f64)> = entries
                .iter()
                .filter(|e| e.1 > 0.0)
                .map(|&(v, w)| (knob.to_linear(v), w))
                .collect();
            let bandwidth = silverman_bandwidth(&samples).max(MIN_BANDWIDTH_FRACTION * (hi - lo));
            Ok(DensityModel::Kde {
                samples,
                bandwidth,
                low: lo,
                high: hi,
            })
        }
    }
}

impl DensityModel {
    /// Density at `t` (linear domain), normalized over the real line.
    pub fn pdf(&self, t: f64) -> f64 {
        match self {
            DensityModel::Kde { samples, bandwidth, .. } => {
                let total: f64 = samples.iter().map(|s| s.1).sum();
                samples
                    .iter()
                    .map(|(theta, w)| w * std_normal_pdf((t - theta) / bandwidth))
                    .sum::<f64>()
                    / (bandwidth * total)
            }
            DensityModel::Discrete(m) => m.get(t as usize).copied().unwrap_or(0.0),
        }
    }

    /// Exact mass of `[a, b]` (linear domain).
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        match self {
            DensityModel::Kde { samples, bandwidth, .. } => {
                let total: f64 = samples.iter().map(|s| s.1).sum();
                samples
                    .iter()
                    .map(|(theta, w)| {
                        w * (std_normal_cdf((b - theta) / bandwidth) - std_normal_cdf((a - theta) / bandwidth))
                    })
                    .sum::<f64>()
                    / total
            }
            DensityModel::Discrete(m) => m
                .iter()
                .enumerate()
                .filter(|(i, _)| (*i as f64) >= a && (*i as f64) <= b)
                .map(|p| p.1)
                .sum(),
        }
    }

    /// Cell masses over the support, normalized to sum to one.
    pub fn grid_masses(&self) -> Vec<f64> {
        match self {
            DensityModel::Kde { low, high, .. } => {
                let width = (high - low) / GRID_CELLS as f64;
                let raw: Vec<f64> = (0..GRID_CELLS)
                    .map(|c| self.mass(low + c as f64 * width, low + (c + 1) as f64 * width).max(0.0))
                    .collect();
                let total: f64 = raw.iter().sum();
                if total > 0.0 {
                    raw.iter().map(|m| m / total).collect()
                } else {
                    vec![1.0 / GRID_CELLS as f64; GRID_CELLS]
                }
            }
            DensityModel::Discrete(m) => m.clone(),
        }
    }
}

/// Cells chosen by descending mass until their total reaches `alpha`.
pub fn greedy_cells(masses: &[f64], alpha: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..masses.len()).collect();
    order.sort_by(|&a, &b| masses[b].total_cmp(&masses[a]).then(a.cmp(&b)));
    let target = alpha * masses.iter().sum::<f64>() * (1.0 - 1e-12);
    let mut acc = 0.0;
    let mut chosen = Vec::new();
    for i in order {
        if acc >= target && !chosen.is_empty() {
            break;
        }
        acc += masses[i];
        chosen.push(i);
    }
    chosen.sort_unstable();
    chosen
}

/// Shortest run of consecutive cells holding at least `alpha` of the mass,
/// as inclusive cell indices. Ties go to the heavier, then the leftmost run.
pub fn shortest_window(masses: &[f64], alpha: f64) -> (usize, usize) {
    let target = alpha * masses.iter().sum::<f64>() * (1.0 - 1e-12);
    let mut best: Option<(usize, f64, usize, usize)> = None;
    let mut acc = 0.0;
    let mut start = 0;
    for end in 0..masses.len() {
        acc += masses[end];
        while start < end && acc - masses[start] >= target {
            acc -= masses[start];
            start += 1;
        }
        if acc >= target {
            let len = end - start + 1;
            let better = match best {
                None => true,
                Some((bl, bm, _, _)) => len < bl || (len == bl && acc > bm),
            };
            if better {
                best = Some((len, acc, start, end));
            }
        }
    }
    best.map_or((0, masses.len().saturating_sub(1)), |b| (b.2, b.3))
}

/// Contiguous cell range of the alpha region: the greedy selection when it
/// is already contiguous, otherwise the shortest contiguous alpha window.
pub fn alpha_cells(masses: &[f64], alpha: f64) -> (usize, usize) {
    let cells = greedy_cells(masses, alpha);
    let (first, last) = (cells[0], *cells.last().expect("non-empty"));
    if last - first + 1 == cells.len() {
        (first, last)
    } else {
        shortest_window(masses, alpha)
    }
}

/// Minimal region holding at least `alpha` of the density.
///
/// Categorical knobs take the smallest set of most-probable values; numeric
/// knobs get one interval, snapped outward to whole numbers for integers.
pub fn minimal_alpha_region(density: &DensityModel, alpha: f64, knob: &KnobSpec) -> NarrowedRange {
    let masses = density.grid_masses();
    match density {
        DensityModel::Discrete(_) => NarrowedRange::Categories(greedy_cells(&masses, alpha)),
        DensityModel::Kde { low, high, .. } => {
            let (a, b) = alpha_cells(&masses, alpha);
            let width = (high - low) / GRID_CELLS as f64;
            let (lo_lin, hi_lin) = (
                low + a as f64 * width,
                if b + 1 == GRID_CELLS {
                    *high
                } else {
                    low + (b + 1) as f64 * width
                },
            );
            let (low_v, high_v) = knob.bounds().expect("numeric knob");
            let mut lo_v = knob.from_linear(lo_lin).clamp(low_v, high_v);
            let mut hi_v = knob.from_linear(hi_lin).clamp(low_v, high_v);
            if a == 0 {
                lo_v = low_v;
            }
            if b + 1 == GRID_CELLS {
                hi_v = high_v;
            }
            if knob.kind == KnobKind::Integer {
                lo_v = lo_v.floor().max(low_v);
                hi_v = hi_v.ceil().min(high_v);
                if lo_v == hi_v {
                    if hi_v < high_v {
                        hi_v += 1.0;
                    } else {
                        lo_v -= 1.0;
                    }
                }
            }
            NarrowedRange::Numeric { low: lo_v, high: hi_v }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> KnobSpec {
        KnobSpec::continuous("x", 0.0, 1.0, 0.5)
    }

    #[test]
    fn categorical_single_entry() {
        let k = KnobSpec::categorical("c", vec!["a", "b", "c", "d", "e", "f"], 0);
        let d = fit_density(&[(5.0, 1.0)], &k).unwrap();
        assert_eq!(d, DensityModel::Discrete(vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn categorical_region_is_minimal_prefix() {
        let k = KnobSpec::categorical("c", vec!["a", "b"], 0);
        let d = fit_density(&[(0.0, 3.0), (1.0, 1.0)], &k).unwrap();
        assert_eq!(minimal_alpha_region(&d, 0.65, &k), NarrowedRange::Categories(vec![0]));
        assert_eq!(minimal_alpha_region(&d, 1.0, &k), NarrowedRange::Categories(vec![0, 1]));
    }

    #[test]
    fn zero_weight_is_error() {
        assert!(matches!(
            fit_density(&[(0.5, 0.0)], &unit()),
            Err(CompressionError::ZeroWeight(_))
        ));
    }

    #[test]
    fn symmetric_about_midpoint() {
        let d = fit_density(&[(0.3, 1.0), (0.5, 1.0)], &unit()).unwrap();
        for i in 0..20 {
            let t = i as f64 * 0.01;
            assert!((d.pdf(0.4 + t) - d.pdf(0.4 - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn kde_integrates_to_one() {
        let entries: Vec<(f64, f64)> = (0..30)
            .map(|i| ((i * 37 % 30) as f64 / 30.0, 1.0 + (i % 4) as f64))
            .collect();
        let d = fit_density(&entries, &unit()).unwrap();
        let (a, b, n) = (-3.0, 4.0, 20_000);
        let step = (b - a) / n as f64;
        let mut area = 0.0;
        for i in 0..n {
            let x0 = a + i as f64 * step;
            area += 0.5 * step * (d.pdf(x0) + d.pdf(x0 + step));
        }
        assert!((area - 1.0).abs() < 1e-3, "{area}");
    }

    #[test]
    fn unimodal_region_mass() {
        let entries: Vec<(f64, f64)> = (0..41)
            .map(|i| (0.3 + 0.01 * i as f64, 1.0 - ((i as f64 - 20.0) / 21.0).powi(2)))
            .collect();
        let d = fit_density(&entries, &unit()).unwrap();
        let NarrowedRange::Numeric { low, high } = minimal_alpha_region(&d, 0.65, &unit()) else {
            panic!("numeric knob");
        };
        assert!(low < 0.5 && high > 0.5);
        let mass = d.mass(low, high) / d.mass(0.0, 1.0);
        assert!((0.65..=0.70).contains(&mass), "{mass}");
    }

    #[test]
    fn alpha_one_covers_support() {
        let d = fit_density(&[(0.2, 1.0), (0.8, 1.0)], &unit()).unwrap();
        let NarrowedRange::Numeric { low, high } = minimal_alpha_region(&d, 1.0, &unit()) else {
            panic!("numeric knob");
        };
        assert!(low <= 0.2 - 0.05 && high >= 0.8 + 0.05);
    }

    #[test]
    fn bimodal_uses_shortest_window() {
        let masses = vec![0.3, 0.0, 0.0, 0.25, 0.2, 0.25];
        assert_eq!(greedy_cells(&masses, 0.6), vec![0, 3, 5]);
        assert_eq!(alpha_cells(&masses, 0.6), (3, 5));
    }

    #[test]
    fn integer_region_snaps_outward() {
        let k = KnobSpec::integer("n", 1, 16, 4);
        let d = fit_density(&[(7.0, 1.0), (7.0, 1.0)], &k).unwrap();
        let NarrowedRange::Numeric { low, high } = minimal_alpha_region(&d, 0.65, &k) else {
            panic!("numeric knob");
        };
        assert!(low.fract() == 0.0 && high.fract() == 0.0 && low < high);
        assert!(low <= 7.0 && high >= 7.0);
    }

    #[test]
    fn log_knob_density_in_log_domain() {
        let k = KnobSpec::continuous("mem", 1.0, 64.0, 4.0).with_log_scale();
        let d = fit_density(&[(8.0, 1.0), (8.0, 1.0), (16.0, 1.0)], &k).unwrap();
        let NarrowedRange::Numeric { low, high } = minimal_alpha_region(&d, 0.65, &k) else {
            panic!("numeric knob");
        };
        assert!(low >= 1.0 && high <= 64.0 && low < 8.0 && high > 8.0);
    }
}
