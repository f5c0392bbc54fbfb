//! Graph encodings, Weisfeiler-Lehman refinement, exact solvers and a
//! message-passing GNN for linearly constrained quadratic programs.

pub mod corpus;
pub mod error;
pub mod generator;
pub mod gnn;
pub mod graph;
pub mod harness;
pub mod instance;
pub mod io;
pub mod solver;
pub mod tractability;
pub mod wl;

pub use error::{Error, Result};
