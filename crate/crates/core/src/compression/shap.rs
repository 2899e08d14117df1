//! Path-dependent TreeSHAP over the surrogate forest.
//!
//! Attributions are computed per encoded feature in the forest's target
//! domain and summed per knob, so one-hot columns of a categorical knob
//! collapse into a single value.

use crate::space::Configuration;
use crate::surrogate::{Forest, SurrogateModel, Tree};

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: Option<usize>) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    });
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one_fraction * path[i].weight * (i + 1) as f64 / d1;
        path[i].weight = zero_fraction * path[i].weight * (depth - i) as f64 / d1;
    }
}

fn unwind(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let PathElement {
        zero_fraction,
        one_fraction,
        ..
    } = path[index];
    let d1 = (depth + 1) as f64;
    let mut next = path[depth].weight;
    for i in (0..depth).rev() {
        if one_fraction != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next * d1 / ((i + 1) as f64 * one_fraction);
            next = tmp - path[i].weight * zero_fraction * (depth - i) as f64 / d1;
        } else {
            path[i].weight = path[i].weight * d1 / (zero_fraction * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let PathElement {
        zero_fraction,
        one_fraction,
        ..
    } = path[index];
    let d1 = (depth + 1) as f64;
    let mut next = path[depth].weight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one_fraction != 0.0 {
            let tmp = next * d1 / ((i + 1) as f64 * one_fraction);
            total += tmp;
            next = path[i].weight - tmp * zero_fraction * (depth - i) as f64 / d1;
        } else {
            total += path[i].weight / (zero_fraction * (depth - i) as f64 / d1);
        }
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &Tree,
    node: usize,
    x: &[f64],
    phi: &mut [f64],
    mut path: Vec<PathElement>,
    zero_fraction: f64,
    one_fraction: f64,
    feature: Option<usize>,
) {
    extend(&mut path, zero_fraction, one_fraction, feature);
    let n = &tree.nodes()[node];
    let Some(split) = n.split else {
        for i in 1..path.len() {
            let w = unwound_sum(&path, i);
            let el = path[i];
            let f = el.feature.expect("only the root element has no feature");
            phi[f] += w * (el.one_fraction - el.zero_fraction) * n.value;
        }
        return;
    };
    let (hot, cold) = if x[split.feature] <= split.threshold {
        (split.left, split.right)
    } else {
        (split.right, split.left)
    };
    let mut incoming_zero = 1.0;
    let mut incoming_one = 1.0;
    if let Some(k) = path.iter().position(|e| e.feature == Some(split.feature)) {
        incoming_zero = path[k].zero_fraction;
        incoming_one = path[k].one_fraction;
        unwind(&mut path, k);
    }
    let nodes = tree.nodes();
    let hot_frac = nodes[hot].cover / n.cover;
    let cold_frac = nodes[cold].cover / n.cover;
    recurse(
        tree,
        hot,
        x,
        phi,
        path.clone(),
        hot_frac * incoming_zero,
        incoming_one,
        Some(split.feature),
    );
    recurse(
        tree,
        cold,
        x,
        phi,
        path,
        cold_frac * incoming_zero,
        0.0,
        Some(split.feature),
    );
}

/// Cover-weighted mean leaf value of a tree.
pub fn tree_expected_value(tree: &Tree) -> f64 {
    let root = tree.root().cover;
    tree.nodes()
        .iter()
        .filter(|n| n.split.is_none())
        .map(|n| n.value * n.cover / root)
        .sum()
}

/// Per-feature attributions of one tree at `x`.
pub fn tree_shap(tree: &Tree, x: &[f64], n_features: usize) -> Vec<f64> {
    let mut phi = vec![0.0; n_features];
    recurse(tree, 0, x, &mut phi, Vec::new(), 1.0, 1.0, None);
    phi
}

/// Per-feature attributions of the forest mean, with the base value.
pub fn forest_shap(forest: &Forest, x: &[f64]) -> (f64, Vec<f64>) {
    let n = forest.trees().len() as f64;
    let mut phi = vec![0.0; forest.n_features()];
    let mut base = 0.0;
    for t in forest.trees() {
        base += tree_expected_value(t);
        for (p, v) in phi.iter_mut().zip(tree_shap(t, x, forest.n_features())) {
            *p += v;
        }
    }
    phi.iter_mut().for_each(|p| *p /= n);
    (base / n, phi)
}

/// Additive per-knob attribution of a surrogate prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapValues {
    /// Expected prediction over the training distribution.
    pub base: f64,
    /// One contribution per knob, in the surrogate's target domain.
    pub contributions: Vec<f64>,
}

pub fn shap_attribution(model: &SurrogateModel, cfg: &Configuration) -> ShapValues {
    let x = model.encoder().encode(cfg);
    let (base, phi) = forest_shap(model.forest(), &x);
    let mut contributions = vec![0.0; model.encoder().space().len()];
    for (f, &k) in model.encoder().feature_knob().iter().enumerate() {
        contributions[k] += phi[f];
    }
    ShapValues { base, contributions }
}
