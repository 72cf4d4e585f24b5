//! Behavioral simulation of Gm-C dynamic amplifiers.
//!
//! The crate is layered bottom-up:
//!
//! - [`devmodel`]: square-law MOSFET and resistor models with first-order
//!   temperature dependence.
//! - [`diffpair`]: symmetric, asymmetric and composite differential pairs,
//!   their current split and transconductance.
//! - [`bias`]: the constant-gm bias loop and the mirrored tail current.
//! - [`dynamp`]: the reset / integrate / sample amplifier cycle for the
//!   proposed composite-pair amplifier and the traditional reference.
//! - [`analysis`]: DC transfer sweeps, coherent-sine THD and
//!   temperature x supply corner statistics.
//!
//! Every evaluation is a pure function of immutable inputs, so sweeps are
//! parallelised with rayon without affecting results.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bias;
pub mod devmodel;
pub mod diffpair;
pub mod dynamp;
mod error;

pub use error::ModelError;

pub type Result<T> = std::result::Result<T, ModelError>;
