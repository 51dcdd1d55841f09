//! Random-intercept accelerated failure time model with Bayesian additive
//! regression trees (riAFT-BART) for clustered, right-censored survival
//! data, with treatment-effect heterogeneity, permutation variable
//! selection and a simulation benchmark.

pub mod bart;
pub mod data;
pub mod effects;
pub mod error;
pub mod sampler;
pub mod select;
pub mod sim;
pub mod stats;

pub use error::{Result, RiaftError};
