#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auxiliary_ops;
pub mod bessel_kernel;
pub mod cli;
pub mod error;
pub mod estimates;
pub mod measure_grid;
pub mod operators;
pub mod par;
pub mod quadrature;
pub mod special_fn;

pub use error::{Error, Result};
