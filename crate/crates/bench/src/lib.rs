//! Shared fixtures for the benchmarks.

use ofbm_core::{OfbmSpec, Operator};

/// `D = diag(0.7, 0.6)` with `A = I`.
pub fn planar_spec() -> OfbmSpec {
    OfbmSpec::mason_xiao(Operator::diag(&[0.7, 0.6]))
}

/// `{0, 1/m, ..., 1}`.
pub fn unit_grid(m: usize) -> Vec<f64> {
    (0..=m).map(|k| k as f64 / m as f64).collect()
}
