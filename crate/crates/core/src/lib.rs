pub mod error;
pub mod graph;
pub mod io;
pub mod model;
pub mod motif;
pub mod pipeline;
pub mod reconstruct;
pub mod rng;
pub mod segregation;
pub mod synth;
pub mod walk;
