//! Large-N classical solution of the single-impurity Kondo model.
//!
//! The impurity spin is replaced by `N` fermion flavours and the model is
//! solved exactly in the classical limit: the ground state is a Slater
//! determinant of the one-body Hamiltonian `h(g)`, whose spectrum follows from
//! a secular equation with one root between every pair of conduction levels.

pub mod cli;
pub mod condensate;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod hamiltonian;
pub mod oracle;
pub mod quadrature;
pub mod renorm;
pub mod spectrum;

pub use error::{KondoError, Result};
