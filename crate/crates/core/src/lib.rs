//! Randomly pivoted LU and friends.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accessor;
pub mod bench;
pub mod cauchy;
pub mod error;
pub mod io;
pub mod linalg;
pub mod lowmem;
pub mod phi;
pub mod pivots;
pub mod precond;
pub mod qless;
pub mod rational;
pub mod rng;
pub mod svd;
pub mod theory;
pub mod tree;

pub use accessor::{Capabilities, MatrixAccessor, SparseMatrix};
pub use error::{Error, Result};
pub use linalg::{DenseMatrix, C64};
pub use rng::RngState;

/// Library version, echoed in output headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
