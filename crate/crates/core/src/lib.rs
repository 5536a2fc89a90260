//! Finite-dimensional toolkit for block completely positive maps, their
//! semigroups, inclusion and product systems, and discrete-time dilations.

pub mod error;
pub mod numerics;
pub mod cpmap;
pub mod random;
pub mod vnmodule;
pub mod blockcp;
pub mod json;
pub mod semigroup;
pub mod prodsys;
pub mod dilation;
pub mod lindblad;

pub use error::{Error, Result};
pub use numerics::{CMatrix, Tolerances, C64};
