//! Green-hyperbolic operators on a discrete globally hyperbolic spacetime,
//! their Green's operators, and the bosonic and fermionic quantization built
//! on top of them.
//!
//! The spacetime is a product lattice of a finite time interval with a
//! spatial circle. Every identity is checked at machine precision where the
//! discretization makes it exact, and against independent oracles otherwise.

pub mod error;
pub mod functor;
pub mod green;
pub mod lattice;
pub mod linalg;
pub mod ops;
pub mod quant_bos;
pub mod quant_ferm;
pub mod symbols;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
