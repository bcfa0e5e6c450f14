//! Spectral-Galerkin stochastic control of truncated Navier–Stokes dynamics.
//!
//! The crate builds the finite-dimensional model (`galerkin`), samples its
//! Ornstein–Uhlenbeck part exactly (`ou`), solves the associated
//! Hamilton–Jacobi–Bellman equation three ways (`hjb`), simulates the
//! controlled and closed-loop systems (`sde`) and estimates costs (`control`).

pub mod control;
pub mod cost;
pub mod error;
pub mod field;
pub mod galerkin;
pub mod hamiltonian;
pub mod hjb;
pub mod io;
pub mod ou;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
pub use field::SpectralField;
pub use galerkin::{build_torus_system, GalerkinSystem, HypothesisParams};
