//! Segregation scoring: the per-node index over a socioeconomic distribution,
//! quantile class labels, and global Moran's I on a graph.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::Graph;

/// Tolerance on `Σ τ = 1` when scoring a node.
pub const TAU_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegregationConfig {
    /// Number of socioeconomic categories in τ.
    pub c: usize,
    /// Quantile below which nodes are labelled low segregation.
    pub quantile_split: f64,
}

impl Default for SegregationConfig {
    fn default() -> Self {
        Self {
            c: 3,
            quantile_split: 0.5,
        }
    }
}

/// `S = c / (2(c-1)) · Σ_k |τ_k - 1/c|`, in `[0, 1]`.
pub fn segregation_index(tau: &[f64], c: usize) -> Result<f64> {
    if c < 2 {
        return Err(invalid(format!("segregation index needs c >= 2, got {c}")));
    }
    if tau.len() != c {
        return Err(Error::DimensionMismatch(format!(
            "tau has {} entries, c = {c}",
            tau.len()
        )));
    }
    if tau.iter().any(|&t| !(t.is_finite() && t >= 0.0)) {
        return Err(invalid("tau entries must be finite and nonnegative"));
    }
    let sum: f64 = tau.iter().sum();
    if (sum - 1.0).abs() > TAU_SUM_TOLERANCE {
        return Err(invalid(format!("tau sums to {sum}, expected 1")));
    }
    let uniform = 1.0 / c as f64;
    let dev: f64 = tau.iter().map(|t| (t - uniform).abs()).sum();
    Ok((c as f64 / (2.0 * (c as f64 - 1.0)) * dev).clamp(0.0, 1.0))
}

/// Two-class quantile labelling: the `floor(n · split)` lowest scores get 0,
/// the rest 1. Ties are ordered by node index, lower index first.
pub fn label_by_quantile(scores: &[f64], split: f64) -> Vec<usize> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let n_low = ((n as f64) * split.clamp(0.0, 1.0)).floor() as usize;
    let mut labels = vec![1; n];
    for &i in &order[..n_low.min(n)] {
        labels[i] = 0;
    }
    labels
}

/// Spatial weighting for Moran's I.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MoranWeights {
    /// `w_ij = a_ij`.
    #[default]
    Binary,
    /// `w_ij = a_ij / deg(i)`.
    RowNormalized,
    /// `w_ij` = edge weight.
    EdgeWeight,
}

/// Global Moran's I of `values` over the adjacency of `g`.
pub fn morans_i(g: &Graph, values: &[f64], weights: MoranWeights) -> Result<f64> {
    let n = g.node_count();
    if values.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {n} nodes",
            values.len()
        )));
    }
    if g.edge_count() == 0 {
        return Err(Error::UndefinedStatistic(
            "Moran's I on an edgeless graph".into(),
        ));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let denom: f64 = z.iter().map(|d| d * d).sum();
    if denom <= f64::EPSILON * n as f64 * mean.abs().max(1.0) {
        return Err(Error::UndefinedStatistic(
            "Moran's I of zero-variance values".into(),
        ));
    }
    let mut num = 0.0;
    let mut w_total = 0.0;
    for i in 0..n {
        let nbrs = g.neighbors(i);
        if nbrs.is_empty() {
            continue;
        }
        match weights {
            MoranWeights::EdgeWeight => {
                for &(j, w) in nbrs {
                    num += w * z[i] * z[j];
                    w_total += w;
                }
            }
            _ => {
                let w = if weights == MoranWeights::Binary {
                    1.0
                } else {
                    1.0 / nbrs.len() as f64
                };
                let s: f64 = nbrs.iter().map(|&(j, _)| z[j]).sum();
                num += w * z[i] * s;
                w_total += w * nbrs.len() as f64;
            }
        }
    }
    if w_total <= 0.0 {
        return Err(Error::UndefinedStatistic(
            "Moran's I with zero total weight".into(),
        ));
    }
    Ok(n as f64 / w_total * num / denom)
}
