//! Motif catalog, exact census, and significance against null models.

pub mod catalog;
pub mod census;
pub mod null_model;

pub use catalog::{canonical_code, CanonicalCode, MotifCatalog, Pattern};
pub use census::{census, census_graph, triangles_per_node, MotifDistribution, SMOOTHING};
pub use null_model::{
    rewire_null_model, significance, PatternSignificance, SignificanceConfig, SignificanceResult,
};
