//! Hierarchical proxy-skeletonization fast direct solver for Laplace
//! boundary integral equations discretized with quadrature by expansion.

pub mod assembly;
pub mod config;
pub mod error;
pub mod error_model;
pub mod experiments;
pub mod geometry;
pub mod id;
pub mod kernels;
pub mod linalg;
pub mod point;
pub mod quadrature;
pub mod skeletonization;
pub mod solver;
pub mod tree;

pub use error::{Error, Result};
