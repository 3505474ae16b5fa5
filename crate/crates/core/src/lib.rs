//! Sparsity structures for Koopman operator analysis.
//!
//! Subsystems of a dynamical system are coordinate subsets whose dynamics
//! close on themselves. They are detected from the sparsity graph and then
//! exploited throughout: EDMD per subsystem, lifting of eigenfunctions and
//! eigenvectors, gluing of atomic invariant measures along shared marginals,
//! and clique-sparse moment relaxations for extremal invariant measures.

pub mod cli;
pub mod dictionary;
pub mod dynamics;
pub mod edmd;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod measures;
pub mod moment;
pub mod poly;
pub mod rng;
pub mod spectral;
pub mod sparsity_graph;

pub use error::{Error, Result};
