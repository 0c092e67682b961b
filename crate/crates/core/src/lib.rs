//! Quantitative discrete approximation automata for reachability analysis
//! of multi-affine biochemical systems.
//!
//! The phase space is cut into rectangles by per-variable thresholds. Each
//! automaton state pairs a rectangle with the facet tiles through which
//! trajectories entered it, and transitions carry the fraction of sampled
//! trajectories that take them.

pub mod cli;
pub mod geometry;
pub mod model;
pub mod qdaa;
pub mod rng;
pub mod simulate;
