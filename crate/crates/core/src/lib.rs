//! Majorana (nonadiabatic) spin-flip transitions of a spin-J atom in a
//! reversing magnetic field.
//!
//! The crate has two independent routes to the same observable. The
//! [`analytic`] module evaluates the closed-form Landau-Zener-type flip
//! probability and lifts it to arbitrary J through the Wigner small-d
//! matrix; the [`propagator`] module integrates the spin-J Schrödinger
//! equation directly. [`experiments`] runs turn-off-time sweeps over both
//! and compares them, and [`cli`] is the command-line front end.
//!
//! All quantities are SI: tesla, seconds, hertz. Spin bases are ordered by
//! descending magnetic quantum number, `m = J, J-1, ..., -J`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod field;
pub mod propagator;
pub mod spin;

pub use error::{Error, Result};
pub use field::{FieldMode, FieldModel};
pub use spin::{SpinState, SpinSystem, TransitionMatrix};
