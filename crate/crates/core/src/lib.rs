//! Harmonic polynomial and symmetric tensor calculus, connection-form
//! algebra, principal-symbol span checks, a flat-torus spectral model for
//! conformal Killing tensors, finite-dimensional resolvent perturbation
//! identities and holonomy probes.

pub mod connalg;
pub mod error;
pub mod exec;
pub mod holonomy;
pub mod linalg;
pub mod polyharm;
pub mod sparse;
pub mod spectral;
pub mod symbolcheck;
pub mod symtensor;
pub mod textfmt;
pub mod torusmodel;

pub use error::{Error, Result};
pub use exec::Execution;
pub use num_complex::Complex64 as C64;
