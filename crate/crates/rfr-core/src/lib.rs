//! Feasible regions for controllable DER active powers in unbalanced
//! three-phase radial distribution networks, and their robust shrinking
//! under box uncertainty on line impedances.
//!
//! The pipeline is:
//!
//! 1. [`model`] — parse and validate a network description document.
//! 2. [`assemble`] — build the real-valued compact linear power-flow model
//!    and the affine impedance-uncertainty model.
//! 3. [`polytope`] — eliminate the state variables to get the feasible
//!    region `{p | Hp <= h}` over free customer active powers, plus
//!    general half-space operations (containment, redundancy removal,
//!    2-D vertex extraction).
//! 4. [`robust`] — shrink the feasible region so it stays feasible for
//!    every impedance realisation in the uncertainty box, by alternating
//!    worst-case search (a bilinear max solved through iterated LPs) and
//!    cut insertion.
//! 5. [`validate`] — Monte Carlo check of the result against randomly
//!    sampled impedance scenarios.
//!
//! All linear programs are solved by the self-contained dense simplex in
//! [`numcore`]; no external solver is required.

pub mod assemble;
pub mod fixtures;
pub mod model;
pub mod numcore;
pub mod polytope;
pub mod robust;
pub mod validate;

mod error;

pub use error::{Error, Result};
