//! Numerical propagator laboratory.

pub mod acceptance;
pub mod cexpr;
pub mod config;
pub mod dirac;
pub mod expr;
pub mod fft;
pub mod geometry;
pub mod linalg;
pub mod minkowski_qft;
pub mod model_space;
pub mod special;
pub mod symbols;
pub mod transport;
pub mod wf_probe;
