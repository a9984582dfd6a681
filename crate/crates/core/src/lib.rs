//! Exact and approximate laws of density dependent Markov population
//! processes near equilibrium, and the translated Poisson local limit.

mod banded;
pub mod config;
pub mod generator;
pub mod harness;
pub mod lattice;
pub mod metrics;
pub mod model;
pub mod montecarlo;
pub mod stein_poisson;
