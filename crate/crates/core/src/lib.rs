//! Numerical calculus of flat connections, Higgs operators, and Einstein
//! bundle metrics on discretized complex tori.
//!
//! The crate builds up in layers:
//! - [`geometry`]: the lattice torus, (p,q)-form fields with spectral ∂/∂̄,
//!   metric contractions, integration, Gauduchon factors, and the scalar
//!   solver for iΛ∂̄∂.
//! - [`bundle`]: connections D = d + A, bundle metrics, Higgs operators,
//!   the decomposition D = d_h + Θ_h, (pseudo)curvature, and degree/slope.
//! - [`einstein`]: Einstein residuals and constants, the metric flow for
//!   the flat- and Higgs-side Einstein equations, conformal transfer.
//! - [`stability`]: invariant subbundles and slope classification in the
//!   constant-coefficient model.
//! - [`correspondence`]: the surface (n = 2) flat ↔ Higgs correspondence
//!   with its certificates.
//! - [`line_moduli`]: line-bundle moduli, the degree-0 correspondence, and
//!   the abstract splitting maps for arbitrary degree.

pub mod bundle;
pub mod correspondence;
pub mod einstein;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod io;
pub mod line_moduli;
pub mod linalg;
pub mod stability;

pub use error::{Error, Result};

/// Residual tolerances shared across modules.
pub mod tol {
    /// Constant-coefficient algebra is exact up to round-off.
    pub const CONSTANT_MODE: f64 = 1e-9;
    /// Lattice-mode identities on smooth fields at desk-scale grids.
    pub const LATTICE_MODE: f64 = 1e-6;
    /// Gate for "is flat" / "is integrable" preconditions.
    pub const RESIDUAL_GATE: f64 = 1e-6;
    /// Gate for the Gauduchon property of a base metric.
    pub const GAUDUCHON: f64 = 1e-7;
    /// Slope comparisons (stability ties).
    pub const SLOPE_TIE: f64 = 1e-8;
    /// Degree-zero gate in the surface correspondence, scaled by rank.
    pub const DEGREE_GATE: f64 = 1e-7;
}
