//! Personalized federated unsupervised learning under a hierarchical-Bayes prior.
//!
//! Each client `i` keeps its own model `θ_i`; the server keeps a population model
//! `(μ, σ)`. Training minimizes the local losses plus the coupling
//! `(1/m) Σ_i (2ξ + ‖μ − θ_i‖²)/(2σ²) + d_θ log σ`, so that `σ` learns how much the
//! clients should borrow from each other.
//!
//! The crate is `no_std` (with `alloc`); the `adept` crate adds IO and the CLI.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod ae;
pub mod baselines;
pub mod datagen;
pub mod dgm;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod manifold;
pub mod nnet;
pub mod pca;
pub mod pca_theory;
pub mod personal;
pub mod prior;
pub mod rng;
pub mod runtime;
pub mod trace;

pub use error::{Error, Result};
