//! Momentum optimizers on separable linear classification, the L2 max-margin
//! structure of the data, and per-step diagnostics of the implicit bias.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod io_util;
pub mod linalg;
pub mod losses;
pub mod maxmargin;
pub mod optimizers;
pub mod rng;
pub mod trajectory;

pub use error::{Error, Result};
