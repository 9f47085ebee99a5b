//! Optimal time-varying coupling for catching a single-excitation pulse in a
//! lossy resonator memory.
//!
//! All quantities are dimensionless: rates in units of the maximum coupling
//! `κ_max` and times in units of `1/κ_max`.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// reference values are quoted to the digits their oracle produced
#![allow(clippy::excessive_precision)]

pub mod cli;
pub mod closedform;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod ode;
pub mod profiles;
pub mod protocol;
pub mod quad;
pub mod roots;
pub mod semiclassical;
pub mod special;
pub mod sweep;

pub use error::{Error, Result};
pub use profiles::{Family, InputProfile, MemoryParams};
