//! Stochastic Navier–Stokes on the rotating unit sphere driven by additive,
//! finite-dimensional symmetric β-stable Lévy noise.
//!
//! The state is scalar vorticity expanded in orthonormal spherical harmonics.
//! The random flow is built through the Ornstein–Uhlenbeck change of variables
//! `u = v + z`, which turns the stochastic equation into a random PDE for `v`
//! that is integrated pathwise on a stored noise realisation.

// Guards such as `!(x > 0.0)` deliberately reject NaN along with the range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attractor_lab;
pub mod config;
pub mod error;
pub mod fluid_operators;
pub mod flow_map;
pub mod invariant_measure;
pub mod io;
pub mod model;
pub mod orchestrator;
pub mod ou_process;
pub mod seeding;
pub mod spherical_spectral;
pub mod stable_noise;

pub use error::{Error, Result};
