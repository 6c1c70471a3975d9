//! Hierarchical Bayesian models of environment structure and their use in
//! localizing a robot relative to a partial map.

pub mod cli_eval;
pub mod dirichlet;
pub mod error;
pub mod localization_filter;
pub mod partial_map;
pub mod sim_world;
pub mod structure_hmm;
pub mod view_model;

pub use error::{Error, Result};
