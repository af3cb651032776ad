//! F^α-calculus on symmetric Cantor prefractals and quasiparticle asymptotics
//! for the one-dimensional nonlocal Fisher–KPP equation with a fractal time
//! derivative.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command-line driver live in the companion `fractal-fkpp-cli` crate.
//!
//! Layout:
//!
//! * [`fractal_set`]: prefractal construction, membership, coarse-grained mass
//!   and the integral staircase function.
//! * [`calculus`]: F^α derivative and integral on sampled functions, plus the
//!   fractal-time ODE integrator.
//! * [`flees`]: the second-order moment system for interacting quasiparticles.
//! * [`asymptotics`]: Green function, Duhamel corrections and the assembled
//!   asymptotic field.
//! * [`reference`]: direct method-of-lines solver used as an oracle.
//! * [`identities`]: the calculus identity checks exposed by `verify-calculus`.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod asymptotics;
pub mod calculus;
mod error;
pub mod flees;
pub mod fractal_set;
pub mod identities;
pub(crate) mod math;
pub mod reference;

pub use error::{Error, Result};
