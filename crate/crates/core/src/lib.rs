//! Multi-fidelity configuration tuning for multi-query workloads.
//!
//! Configurations are screened on cheap query subsets chosen to preserve the
//! full workload's ranking, promoted through successive-halving brackets, and
//! proposed by a rank-aggregated ensemble of random-forest surrogates drawn
//! from the current task, its fidelity levels and similar historical tasks.
//! Historical tasks also drive a density-based compression of the search
//! space and a two-phase warm start.

pub mod bench;
pub mod compression;
pub mod controller;
pub mod evaluator;
pub mod fidelity;
pub mod generator;
pub mod kendall;
pub mod scheduler;
pub mod similarity;
pub mod space;
pub mod stats;
pub mod store;
pub mod surrogate;
pub mod task;
