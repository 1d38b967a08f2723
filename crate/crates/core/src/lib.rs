//! Finite-geometry toolkit centred on unitals of even order.
//!
//! The crate constructs the classical (Hermitian) unital of order `n = 2^e`,
//! explicit projective spaces PG(d, q), block designs, inversive planes, and
//! the full chain of derived structures (special spreads, generalized
//! quadrangles, regular spreads, pencils of quadrics, Bruck-Bose planes) that
//! certify whether a given unital is classical. Every construction doubles as
//! a verifiable computation: the pipeline emits machine-checkable
//! certificates with explicit witnesses and counts.

pub mod bridge;
pub mod bruckbose;
pub mod certificate;
pub mod design;
pub mod error;
pub mod galois;
pub mod linalg;
pub mod pipeline;
pub mod projgeom;
pub mod unital;

pub use error::{Error, Result};
