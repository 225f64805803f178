//! Simulation lab for compressed, differentially private primal-dual
//! decentralized SGD.

pub mod algorithms;
pub mod attack;
pub mod compress;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod problems;
pub mod rng;
pub mod theory;
pub mod topology;
