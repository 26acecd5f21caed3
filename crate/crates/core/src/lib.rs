//! Simulation and characteristic-function verification of stable and mixing
//! convergence for explosive multidimensional processes.
//!
//! The limit object is the series `∑_{j≥0} Pʲ Zⱼ` with `ϱ(P) < 1` and
//! `Zⱼ` i.i.d. with law μ. The modules cover the matrix analysis behind its
//! tail bounds ([`matalg`]), the increment laws and closed-form limit
//! characteristic functions ([`laws`]), truncated sampling and log-moment
//! diagnostics ([`series`]), processes built to meet the limit theorem's
//! hypotheses ([`processes`]), empirical characteristic functions ([`ecf`])
//! and finite-sample convergence statistics ([`verify`]).

pub mod ecf;
pub mod error;
pub mod laws;
pub mod matalg;
pub mod processes;
pub mod rng;
pub mod series;
pub mod verify;

pub use error::{Error, Result};
