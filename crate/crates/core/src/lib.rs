#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod diagnostics;
pub mod error;
pub mod exact;
pub mod linalg;
pub mod model;
pub mod partial_sums;
pub mod quadrature;
pub mod rng;
pub mod telegraph;

pub use error::{OfbmError, Result};
pub use exact::GridPath;
pub use linalg::Operator;
pub use model::{CovMatrixFn, OfbmSpec, Tail};
pub use quadrature::QuadratureConfig;
