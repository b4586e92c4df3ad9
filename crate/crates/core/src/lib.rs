//! Quasi-static pivoting of planar objects against a wall and a floor.

// `!(a <= b)` checks deliberately reject NaN; dense kernels index several
// arrays with one loop variable
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ad;
pub mod cli;
pub mod error;
pub mod margin;
pub mod mechanics;
pub mod object;
pub mod ocp;
pub mod plot;
pub mod robust;
pub mod solver;
pub mod trajectory;
pub mod validate;

pub use error::{Error, Result};
