//! Numerical toolkit for quasi-invariance studies of Gaussian measures under
//! truncated power-type nonlinear Schrodinger flows on the two-torus.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod counting;
pub mod energy;
pub mod ensemble;
pub mod error;
pub mod flow;
pub mod grid;
pub mod lattice;
pub mod smoothing;
pub mod transport;
pub mod tree;

pub use error::{Error, Result};
pub use lattice::{Mode, SpectralField};
