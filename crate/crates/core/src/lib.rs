//! Nonlinear modal reduced-order models built from amplitude-dependent
//! complex modes.

pub mod error;
pub mod exec;
pub mod hbm;
pub mod linalg;
pub mod interp;
pub mod manifold;
pub mod model;
pub mod nma;
pub mod reference;
pub mod ode;
pub mod slowflow;
pub mod systems;

pub use error::{Error, Result};
pub use exec::Execution;

/// Crate version recorded in output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
