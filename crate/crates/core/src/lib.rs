//! Semiclassical WKB laboratory for the cubic nonlinear Schrödinger equation
//! `i eps u_t + eps^2/2 Δu = V u + eps^kappa |u|^2 u` on periodic boxes.

pub mod convergence;
pub mod error;
pub mod field;
pub mod flow;
pub mod grid;
pub mod io;
pub mod multiphase;
pub mod nls;
pub mod norms;
pub mod resonance;
pub mod spectral;
pub mod wigner;
pub mod wkb;

pub use error::{Error, Result};
pub use field::{bump, mass_outside, ComplexField, RealField, SupportBox};
pub use grid::{make_grid, GridSpec, Point};
pub use norms::{norm, NormKind};
