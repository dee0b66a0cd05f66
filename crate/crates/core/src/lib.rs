//! Spectral simulation of cubic NLS under strong magnetic confinement, its
//! averaged limit and the full resonant system.

pub mod basis;
mod dense;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod field;
pub mod nonlinear;
pub mod norms;
mod plot;
pub mod quadrature;

pub use basis::{build_basis, BasisWorkspace, Mode, Operator};
pub use error::{Error, Result};
pub use field::{propagate, Flow, GridField, Space, SpectralField, ZGrid};
