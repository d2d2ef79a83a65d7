//! Isotropic spherical random fields as sparse superpositions of Legendre
//! waves centred at random directions.
//!
//! A field is written as
//!
//! ```text
//! T(x) = Σ_ℓ Σ_k η_{ℓk} (2ℓ+1)/(4π) P_ℓ(⟨ξ_k, x⟩)
//! ```
//!
//! with directions `ξ_k` uniform on the sphere and real weights `η_{ℓk}`.
//! The crate covers weight generation (i.i.d., local f_NL, generalized
//! quadratic), exact harmonic coefficients and empirical spectra, grid-based
//! spherical harmonic transforms, bispectrum formulas and estimators, and
//! greedy sparse reconstruction of given fields.

pub mod error;
pub mod geom;
pub mod harmonic;
pub mod io;
pub mod model;
pub mod reconstruct;
pub mod rng;
pub mod specfun;
pub mod spectra;
pub mod stats;

pub use error::{Error, Result};
pub use geom::{Rotation, SphereGrid, UnitVector};
pub use harmonic::{GridField, HarmonicCoefficients};
pub use model::SparseField;
pub use spectra::PowerSpectrum;
