//! Non-commutative *-polynomials in self-adjoint letters `x[i,j]`, `z[i,j]`
//! and unitary letters `u[i]`, `u'[i]`.
//!
//! Words are kept in reduced form (only the relations `u u' = u' u = 1` are
//! applied). Polynomials carry their [`FamilyLayout`]; combining polynomials
//! over different layouts is an error (`try_*` methods) or a panic (operator
//! overloads).

mod coeff;
mod derive;
mod layout;
mod parse;
mod poly;
mod tensor;
mod word;

use thiserror::Error;

pub use coeff::{Coeff, ExactComplex};
pub use derive::{
    cyclic_gradient, derive, liberation_gradient, norm_bound, substitute_x, theta, theta_bar,
    unsubstitute, unsubstitute_word, Derivation,
};
pub(crate) use derive::substitute_word;
pub(crate) use poly::same_layout;
pub use layout::FamilyLayout;
pub use parse::parse;
pub use poly::NCPoly;
pub use tensor::TensorNCPoly;
pub use word::{Generator, Word};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("index out of bounds: {0}")]
    IndexOutOfBounds(String),
    #[error("invalid layout: {0}")]
    Layout(String),
    #[error("operands have different family layouts")]
    LayoutMismatch,
    #[error("alphabet mismatch: {0}")]
    Alphabet(String),
    #[error("not expressible in x letters: {0}")]
    NotExpressible(String),
    #[error("polynomial is not self-adjoint")]
    NotSelfAdjoint,
    #[error("symbolic identity violated: {0}")]
    IdentityViolated(String),
}
