//! Walk-based local structures: sampling, fragments and their motif
//! profiles.

pub mod encoder;
mod walks;

pub use encoder::{encode_bundles, encode_local, LocalEncoderWeights};
pub use walks::{bundle_to_subgraph, random_walks, walks_for_roots, Fragment, WalkBundle};

use rayon::prelude::*;

use crate::error::Result;
use crate::graph::Graph;
use crate::motif::{census_graph, MotifCatalog, MotifDistribution};
use crate::rng::RngState;

/// Motif distribution of a bundle's fragment.
pub fn fragment_distribution(bundle: &WalkBundle, catalog: &MotifCatalog) -> MotifDistribution {
    census_graph(&bundle_to_subgraph(bundle).local_graph(), catalog)
}

/// Local motif distribution of every node, from one fresh bundle per node.
pub fn local_distributions(
    g: &Graph,
    r: usize,
    t: usize,
    catalog: &MotifCatalog,
    rng: RngState,
) -> Result<Vec<MotifDistribution>> {
    let roots: Vec<usize> = (0..g.node_count()).collect();
    let bundles = walks_for_roots(g, &roots, r, t, rng)?;
    Ok(bundles
        .par_iter()
        .map(|b| fragment_distribution(b, catalog))
        .collect())
}
