//! Kendall tau-b rank correlation with an asymptotic p-value.
//!
//! Pair counts come from Knight's O(n log n) merge-sort algorithm. The
//! p-value uses the normal approximation with the tie-corrected variance of
//! the concordant-minus-discordant statistic.

use thiserror::Error;

use crate::stats::std_normal_cdf;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KendallError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two paired observations")]
    TooShort,
    #[error("all values tied in one input; tau is undefined")]
    AllTied,
    #[error("non-finite input value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KendallTau {
    pub tau: f64,
    pub p_value: f64,
}

/// Raw pair statistics for a pair of samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    /// Total pairs n(n-1)/2.
    pub n0: u64,
    /// Pairs tied in `a`.
    pub ties_a: u64,
    /// Pairs tied in `b`.
    pub ties_b: u64,
    /// Concordant minus discordant pairs.
    pub score: i64,
}

impl PairCounts {
    pub fn tau_b(&self) -> f64 {
        self.score as f64 / ((self.n0 - self.ties_a) as f64 * (self.n0 - self.ties_b) as f64).sqrt()
    }
}

fn tie_groups(sorted: &[f64]) -> Vec<u64> {
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        groups.push((j - i) as u64);
        i = j;
    }
    groups
}

fn pairs(t: u64) -> u64 {
    t * t.saturating_sub(1) / 2
}

/// Counts swaps while merge-sorting `v`; returns the number of inversions.
fn merge_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

pub fn pair_counts(a: &[f64], b: &[f64]) -> Result<PairCounts, KendallError> {
    if a.len() != b.len() {
        return Err(KendallError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(KendallError::TooShort);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(KendallError::NonFinite);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));

    let n0 = pairs(n as u64);
    // ties in a, and joint ties in (a, b)
    let mut ties_a = 0u64;
    let mut ties_ab = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && a[idx[j]] == a[idx[i]] {
            j += 1;
        }
        ties_a += pairs((j - i) as u64);
        let mut k = i;
        while k < j {
            let mut l = k + 1;
            while l < j && b[idx[l]] == b[idx[k]] {
                l += 1;
            }
            ties_ab += pairs((l - k) as u64);
            k = l;
        }
        i = j;
    }

    let mut by = idx.iter().map(|&i| b[i]).collect::<Vec<f64>>();
    let mut buf = Vec::with_capacity(n);
    let swaps = merge_count(&mut by, &mut buf);
    let ties_b: u64 = tie_groups(&by).into_iter().map(pairs).sum();

    // concordant - discordant = n0 - ties_a - ties_b + ties_ab - 2 * swaps
    let score = n0 as i64 - ties_a as i64 - ties_b as i64 + ties_ab as i64 - 2 * swaps as i64;
    Ok(PairCounts {
        n0,
        ties_a,
        ties_b,
        score,
    })
}

/// Tau-b between `a` and `b` with a two-sided asymptotic p-value.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<KendallTau, KendallError> {
    let counts = pair_counts(a, b)?;
    if counts.ties_a == counts.n0 || counts.ties_b == counts.n0 {
        return Err(KendallError::AllTied);
    }
    let tau = counts.tau_b().clamp(-1.0, 1.0);
    let p_value = asymptotic_p_value(a, b, counts.score);
    Ok(KendallTau { tau, p_value })
}

fn asymptotic_p_value(a: &[f64], b: &[f64], score: i64) -> f64 {
    let n = a.len() as f64;
    let groups = |x: &[f64]| {
        let mut s = x.to_vec();
        s.sort_by(f64::total_cmp);
        tie_groups(&s).into_iter().map(|t| t as f64).collect::<Vec<f64>>()
    };
    let ga = groups(a);
    let gb = groups(b);
    let v0 = n * (n - 1.0) * (2.0 * n + 5.0);
    let vt: f64 = ga.iter().map(|t| t * (t - 1.0) * (2.0 * t + 5.0)).sum();
    let vu: f64 = gb.iter().map(|u| u * (u - 1.0) * (2.0 * u + 5.0)).sum();
    let t1: f64 = ga.iter().map(|t| t * (t - 1.0)).sum();
    let u1: f64 = gb.iter().map(|u| u * (u - 1.0)).sum();
    let t2: f64 = ga.iter().map(|t| t * (t - 1.0) * (t - 2.0)).sum();
    let u2: f64 = gb.iter().map(|u| u * (u - 1.0) * (u - 2.0)).sum();
    let mut var = (v0 - vt - vu) / 18.0 + t1 * u1 / (2.0 * n * (n - 1.0));
    if n > 2.0 {
        var += t2 * u2 / (9.0 * n * (n - 1.0) * (n - 2.0));
    }
    if var <= 0.0 {
        return 1.0;
    }
    let z = score as f64 / var.sqrt();
    (2.0 * (1.0 - std_normal_cdf(z.abs()))).clamp(0.0, 1.0)
}
