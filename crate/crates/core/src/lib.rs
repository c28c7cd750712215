//! Deformed quon algebras on truncated Fock spaces and on the real line.
//!
//! A pair of operators `(a, b)` with `b != a†` satisfying `ab - q ba = 1`
//! generates two biorthogonal families `φ_n = b^n φ_0 / β_{n-1}!` and
//! `Ψ_n = (a†)^n Ψ_0 / β_{n-1}!`. This crate builds those pairs from a
//! similarity operator, checks the ladder and number-operator identities,
//! constructs the metric operator `Θ`, evaluates the associated bi-coherent
//! states and verifies their resolution of the identity with a
//! moment-matched radial quadrature.
//!
//! Modules:
//! - [`qcore`]: the β-sequence, q-factorials and the log-number spectrum.
//! - [`fock`]: truncated matrices of `c`, `c†` and q-mutator residuals.
//! - [`pseudoquon`]: similarity-deformed pairs, biorthogonal families, `Θ`.
//! - [`bicoherent`]: normalisation, bi-coherent states, radii, uncertainty.
//! - [`resolution`]: radial moment quadrature and the resolution of identity.
//! - [`positionrep`]: the deformed real-line representation with `S = e^{γx}`.
//! - [`cli`]: config-driven experiment runner behind the `dquon` binary.
//! - [`acceptance`]: the end-to-end verification suite (`dquon selftest`).

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod bicoherent;
pub mod cli;
mod error;
pub mod fock;
pub mod positionrep;
pub mod pseudoquon;
pub mod qcore;
pub mod resolution;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;
