//! Simulation and exact-analytics toolkit for simple random walk on
//! percolated Galton-Watson trees embedded into `Z^d` by a branching
//! random walk.
//!
//! The crate is organized around the pipeline
//!
//! * [`analytics`] — exact finite arithmetic on offspring generating
//!   functions: percolation thinning, extinction probability, the
//!   backbone/trap duality decomposition, effective speed and its
//!   near-critical constant.
//! * [`tree`] — lazy survival-conditioned tree growth via the
//!   backbone-plus-traps decomposition, with a rejection sampler as an
//!   independent distributional oracle.
//! * [`embedding`] — the lattice embedding: i.i.d. zero-mean steps on
//!   tree edges, memoized per vertex.
//! * [`walker`] — simple random walk on the lazy tree with online
//!   detection of the regeneration structure.
//! * [`electrical`] — exact electrical-network computations on finite
//!   trees (resistance, hitting probabilities, return and commute
//!   times) with dense linear-solve oracles.
//! * [`experiments`] — Monte Carlo estimators and statistical checks
//!   tying simulation to the analytic predictions.

pub mod analytics;
pub mod electrical;
pub mod embedding;
pub mod experiments;
pub mod rng;
pub mod stats;
pub mod tree;
pub mod walker;

// pub use analytics::{AnalyticProfile, OffspringLaw};
