//! Simulation and analysis of nonlinear randomized urn models.
//!
//! The urn evolves by `Y_{n+1} = Y_n + D_{n+1} X_{n+1}` where the drawn colour
//! `X_{n+1}` follows a skewed rule `P(X = e^i) ∝ f(Ỹ_n^i)`. The crate covers
//! the stochastic dynamics ([`urn`]), the deterministic mean field
//! ([`meanfield`]), rate predictions ([`asymptotics`]), the Pólya case
//! ([`polya`]), the allocation model ([`finance`]) and batch verification
//! ([`montecarlo`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod finance;
pub mod linalg;
pub mod meanfield;
pub mod montecarlo;
pub mod polya;
pub mod rng;
pub mod shape;
pub mod stats;
pub mod urn;

pub use error::{Result, UrnError};
pub use shape::ShapeFunction;
