//! Monte Carlo laboratory for cover times, thick points and excursion counts
//! of simple random walks on balanced trees and planar lattices.

pub mod branching;
pub mod cli;
pub mod error;
pub mod excursions;
pub mod experiment;
pub mod graph_models;
mod linalg;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod suite;
pub mod trajectory;
pub mod walker;

pub use error::{LabError, PartialWalk, Result};
