// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covers;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod extended;
pub mod functionals;
pub mod io;
pub mod measures;
pub mod shearer;
pub mod simplex;
pub mod tridiag;

pub use error::{Error, Result};
pub use extended::Extended;
