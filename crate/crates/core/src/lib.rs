//! Compiler and simulator for similarity-search kernels on hierarchical
//! content-addressable-memory accelerators.

pub mod arch;
pub mod cam;
pub mod cim;
pub mod cli;
pub mod data;
pub mod frontend;
pub mod ir;
pub mod pipeline;
pub mod score;
pub mod sim;
pub mod sweep;
