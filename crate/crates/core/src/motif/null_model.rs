//! Degree-preserving null models and motif significance.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::catalog::MotifCatalog;
use super::census::census_graph;
use crate::error::{invalid, Result};
use crate::graph::Graph;
use crate::rng::RngState;

/// Attempts allowed per requested swap before giving up.
pub const ATTEMPTS_PER_SWAP: usize = 10;

/// Randomizes `g` with `swaps` accepted double-edge swaps.
///
/// A swap picks edges `{a,b}`, `{c,d}` and replaces them with `{a,d}`,
/// `{c,b}`; swaps that would create a self-loop or a repeated edge are
/// rejected. At most `ATTEMPTS_PER_SWAP * swaps` attempts are made, so graphs
/// with no valid swap (a lone triangle) come back unchanged.
pub fn rewire_null_model(g: &Graph, swaps: usize, rng: RngState) -> Result<Graph> {
    if g.edge_count() < 2 {
        return Err(invalid(
            "degree-preserving rewiring needs at least two edges",
        ));
    }
    let mut out = g.clone();
    if swaps == 0 {
        return Ok(out);
    }
    let mut edges: Vec<(usize, usize, f64)> = g.edges();
    let mut r = rng.rng();
    let max_attempts = swaps.saturating_mul(ATTEMPTS_PER_SWAP).max(100);
    let mut accepted = 0;
    let mut attempts = 0;
    while accepted < swaps && attempts < max_attempts {
        attempts += 1;
        let i = r.random_range(0..edges.len());
        let j = r.random_range(0..edges.len());
        if i == j {
            continue;
        }
        let (a, b, wab) = edges[i];
        let (mut c, mut d, wcd) = edges[j];
        if r.random::<bool>() {
            std::mem::swap(&mut c, &mut d);
        }
        if a == c || a == d || b == c || b == d {
            continue;
        }
        if out.has_edge(a, d) || out.has_edge(c, b) {
            continue;
        }
        out.remove_edge(a, b);
        out.remove_edge(c, d);
        out.insert_edge(a, d, wab);
        out.insert_edge(c, b, wcd);
        edges[i] = (a.min(d), a.max(d), wab);
        edges[j] = (c.min(b), c.max(b), wcd);
        accepted += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceConfig {
    pub n_null: usize,
    pub p_m: f64,
    /// Accepted swaps per null graph, as a multiple of the edge count.
    pub swaps_per_edge: usize,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        Self {
            n_null: 1000,
            p_m: 0.05,
            swaps_per_edge: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSignificance {
    pub pattern_id: String,
    pub f_real: u64,
    pub f_rand_mean: f64,
    pub f_rand_sd: f64,
    /// Fraction of null graphs whose count strictly exceeds `f_real`.
    pub empirical_p: f64,
    pub is_motif: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub patterns: Vec<PatternSignificance>,
}

impl SignificanceResult {
    pub fn get(&self, id: &str) -> Option<&PatternSignificance> {
        self.patterns.iter().find(|p| p.pattern_id == id)
    }
}

/// Compares catalog counts of `g` against `n_null` rewired replicas.
///
/// Replica `r` draws from `rng.child(r)`, so the result does not depend on
/// evaluation order.
pub fn significance(
    g: &Graph,
    catalog: &MotifCatalog,
    cfg: &SignificanceConfig,
    rng: RngState,
) -> Result<SignificanceResult> {
    if cfg.n_null == 0 {
        return Err(invalid("significance needs n_null >= 1"));
    }
    if !(cfg.p_m > 0.0 && cfg.p_m < 1.0) {
        return Err(invalid(format!("P_M must lie in (0, 1), got {}", cfg.p_m)));
    }
    let real = census_graph(g, catalog).counts;
    let swaps = cfg.swaps_per_edge * g.edge_count();
    let nulls: Vec<Vec<u64>> = (0..cfg.n_null)
        .into_par_iter()
        .map(|r| {
            rewire_null_model(g, swaps, rng.child(r as u64))
                .map(|h| census_graph(&h, catalog).counts)
        })
        .collect::<Result<_>>()?;
    let n = cfg.n_null as f64;
    let patterns = catalog
        .patterns()
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let vals: Vec<f64> = nulls.iter().map(|c| c[k] as f64).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let sd = if cfg.n_null > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let exceed = nulls.iter().filter(|c| c[k] > real[k]).count();
            let empirical_p = exceed as f64 / n;
            PatternSignificance {
                pattern_id: p.id.clone(),
                f_real: real[k],
                f_rand_mean: mean,
                f_rand_sd: sd,
                empirical_p,
                is_motif: empirical_p <= cfg.p_m,
            }
        })
        .collect();
    Ok(SignificanceResult { patterns })
}
