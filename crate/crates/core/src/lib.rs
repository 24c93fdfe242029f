//! Small-area poverty estimation from person-level survey data.
//!
//! The crate covers design-based direct estimation ([`survey_design`]), the area-level
//! hierarchical models ([`model`]), a NUTS sampler ([`hmc`]), convergence diagnostics
//! ([`diagnostics`]), PSIS leave-one-out comparison ([`psis`]), posterior products
//! ([`reports`]) and a synthetic two-stage survey generator ([`synthetic`]).

pub mod diagnostics;
pub mod error;
pub mod hmc;
pub mod io;
pub mod linalg;
pub mod math;
pub mod model;
pub mod psis;
pub mod reports;
pub mod survey_design;
pub mod synthetic;

pub use error::*;
