//! Special functions: Legendre polynomials, spherical harmonics, Wigner 3j
//! symbols, Gaunt coefficients, Hermite polynomials and the Isserlis/Wick
//! expectation oracle.

mod legendre;
mod wick;
mod wigner;

pub use legendre::{
    addition_kernel, legendre_p, legendre_row, real_sph_harm, sph_harm, sph_harm_all,
    sph_harm_degree, tri_index, AssocLegendre,
};
pub(crate) use legendre::polar_parts;
pub use wick::{hermite, wick_expectation, WickMonomial, MAX_WICK_DEGREE};
pub use wigner::{gaunt, wigner3j, wigner3j_exact, SignedSqrt, SymbolTriple, MAX_EXACT_ELL};
