//! Spectral analysis and bilinear control on compact quantum graphs.

pub mod document;
pub mod gaps;
pub mod graph;
pub mod integrals;
pub mod lab;
pub mod moments;
pub mod operator;
pub mod propagator;
pub mod spectrum;
