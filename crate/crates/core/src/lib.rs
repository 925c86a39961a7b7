//! Finite-N laboratory for orbital free probability.
//!
//! The crate is organised bottom-up:
//!
//! * [`ncpoly`]: exact symbolic algebra of non-commutative *-polynomials in
//!   self-adjoint letters `x[i,j]`, `z[i,j]` and unitary letters `u[i]`, `u'[i]`,
//!   with the unitary, difference-quotient and liberation derivations.
//! * [`randmat`]: Haar/GUE sampling, quantile microstates, spectral clipping and
//!   evaluation of polynomials on matrix tuples.
//! * [`moments`]: truncated tracial states, empirical states, microstate sets,
//!   free products, free cumulants and single-variable free entropy.
//! * [`gibbs`]: Metropolis samplers for the orbital and matrix Gibbs ensembles,
//!   log-partition estimators and occupancy statistics.
//! * [`pressure`]: finite-N orbital free pressure, its Legendre transform,
//!   the double pressure and the associated finite-N property checks.
//! * [`sdsolver`]: truncated Schwinger-Dyson fixed-point solver and the
//!   liberation-gradient check.
//! * [`experiment`]: JSON experiment specs, reports and the command runner used
//!   by the `orbital` binary.
//!
//! Matrix numerics and moment tables are generic over the real scalar type
//! ([`Scalar`], implemented for `f32` and `f64`); symbolic polynomials are
//! generic over the coefficient ring ([`Coeff`]), with exact rational-complex
//! coefficients for symbolic identities and floating coefficients for
//! numerically assembled polynomials.

pub mod error;
pub mod experiment;
pub mod gibbs;
pub mod moments;
pub mod ncpoly;
pub mod pressure;
pub mod randmat;
pub mod scalar;
pub mod sdsolver;
pub mod stats;

pub use error::{Error, Result};
pub use ncpoly::{Coeff, ExactComplex, FamilyLayout, Generator, Word};
pub use scalar::Scalar;

/// Complex double, the evaluation coefficient type.
pub type C64 = num_complex::Complex<f64>;

/// Symbolic polynomial with exact rational-complex coefficients.
pub type Poly = ncpoly::NCPoly<ExactComplex>;
/// Symbolic tensor polynomial with exact rational-complex coefficients.
pub type TensorPoly = ncpoly::TensorNCPoly<ExactComplex>;
/// Polynomial with double-precision complex coefficients.
pub type PolyF64 = ncpoly::NCPoly<C64>;
/// Tensor polynomial with double-precision complex coefficients.
pub type TensorPolyF64 = ncpoly::TensorNCPoly<C64>;

/// Dense complex matrix in double precision.
pub type CMatrix = randmat::CMat<f64>;
/// Matrix tuple in double precision.
pub type MatrixTuple = randmat::MatrixTuple<f64>;
/// Moment table in double precision.
pub type MomentTable = moments::MomentTable<f64>;
/// Spectral measure in double precision.
pub type SpectralMeasure = randmat::SpectralMeasure<f64>;
