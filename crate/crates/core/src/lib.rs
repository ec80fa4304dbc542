//! Desk-scale numerics for de Branges–Rovnyak model operators.
//!
//! * [`hardy`]: Taylor / rational / boundary-grid representations of disc functions.
//! * [`factorization`]: outer functions, Pythagorean mates, zero counting.
//! * [`operators`]: finite contractions, defects, characteristic functions, coincidence.
//! * [`dbr_model`]: the model operators `Y_b` and their two-sided dilation.
//! * [`dilation`]: the one-dimensional-defect dilations `T_ξ`.
//! * [`conditions`]: decision procedures for conditions (C1)–(C4).

pub mod error;
pub mod hardy;
pub mod factorization;
pub mod linalg;
pub mod operators;
pub mod dbr_model;
pub mod dilation;
pub mod fit;
pub mod conditions;
pub mod cli;

pub use error::{Error, Result};
pub use hardy::C64;
