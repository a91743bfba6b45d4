//! Exact joint Gaussian sampling of a time-reversible OFBM on a grid.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OfbmError, Result};
use crate::linalg::{cholesky_psd, CholeskyFactor, Operator};
use crate::model::reversible_covariance;
use crate::rng::{StreamKey, StreamRole};

/// Jitter ceiling for grid covariance factorisations.
pub const GRID_JITTER_MAX: f64 = 1e-8;

/// One replicate of a process on a fixed time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    pub grid: Vec<f64>,
    /// `values[i]` is the d-vector at `grid[i]`.
    pub values: Vec<Vec<f64>>,
    pub replicate_id: u64,
    pub seed: u64,
}

impl GridPath {
    pub fn dim(&self) -> usize {
        self.values.first().map(|v| v.len()).unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Applies `M` to every value.
    pub fn transformed(&self, m: &Operator) -> GridPath {
        GridPath {
            values: self.values.iter().map(|v| m.mat_vec(v)).collect(),
            ..self.clone()
        }
    }
}

/// Checks that `grid` is finite, strictly increasing and starts at 0.
pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(OfbmError::invalid("time grid is empty"));
    }
    if grid[0] != 0.0 {
        return Err(OfbmError::invalid(format!(
            "time grid must start at 0, got {}",
            grid[0]
        )));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(OfbmError::invalid("time grid has non-finite points"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(OfbmError::invalid("time grid must be strictly increasing"));
    }
    Ok(())
}

/// Block covariance `[R(t_i, t_j)]` over the grid (row-major blocks).
pub fn build_grid_covariance(grid: &[f64], exponent: &Operator, gamma: &Operator) -> Result<Operator> {
    if grid.is_empty() {
        return Err(OfbmError::invalid("time grid is empty"));
    }
    if grid[0] < 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(OfbmError::invalid("grid must be strictly increasing with grid[0] >= 0"));
    }
    let d = exponent.dim();
    let m = grid.len();
    let mut big = Operator::zeros(m * d);
    for i in 0..m {
        for j in i..m {
            let block = reversible_covariance(grid[i], grid[j], exponent, gamma)?;
            big.set_block(i, j, &block);
            if i != j {
                big.set_block(j, i, &block.transpose());
            }
        }
    }
    Ok(big)
}

/// Factorised grid covariance, reusable across replicates.
#[derive(Clone, Debug)]
pub struct ExactSampler {
    grid: Vec<f64>,
    dim: usize,
    /// Index of the first grid point with nonzero time.
    offset: usize,
    factor: Option<CholeskyFactor>,
}

impl ExactSampler {
    pub fn new(grid: &[f64], exponent: &Operator, gamma: &Operator) -> Result<Self> {
        validate_grid(grid)?;
        let offset = 1;
        let dim = exponent.dim();
        let factor = if grid.len() > offset {
            let cov = build_grid_covariance(&grid[offset..], exponent, gamma)?;
            Some(cholesky_psd(&cov, GRID_JITTER_MAX)?)
        } else {
            None
        };
        Ok(ExactSampler {
            grid: grid.to_vec(),
            dim,
            offset,
            factor,
        })
    }

    pub fn jitter(&self) -> f64 {
        self.factor.as_ref().map(|f| f.jitter).unwrap_or(0.0)
    }

    pub fn sample(&self, seed: u64, replicate: u64) -> GridPath {
        let d = self.dim;
        let mut values = vec![vec![0.0; d]; self.offset];
        if let Some(f) = &self.factor {
            let mut rng = StreamKey::new(seed, replicate, 0, StreamRole::Exact).rng();
            let z: Vec<f64> = (0..f.lower.dim()).map(|_| rng.sample(StandardNormal)).collect();
            let x = f.apply(&z);
            values.extend(x.chunks(d).map(|c| c.to_vec()));
        }
        GridPath {
            grid: self.grid.clone(),
            values,
            replicate_id: replicate,
            seed,
        }
    }

    pub fn sample_many(&self, seed: u64, count: usize) -> Vec<GridPath> {
        (0..count as u64)
            .into_par_iter()
            .map(|r| self.sample(seed, r))
            .collect()
    }
}

/// `count` i.i.d. replicates with the closed reversible covariance.
pub fn sample_exact(
    grid: &[f64],
    exponent: &Operator,
    gamma: &Operator,
    count: usize,
    seed: u64,
) -> Result<Vec<GridPath>> {
    if count == 0 {
        validate_grid(grid)?;
        return Ok(Vec::new());
    }
    Ok(ExactSampler::new(grid, exponent, gamma)?.sample_many(seed, count))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_grid_gives_gamma() {
        let g = Operator::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let c = build_grid_covariance(&[1.0], &Operator::diag(&[0.7, 0.6]), &g).unwrap();
        assert!((&c - &g).max_abs() < 1e-15);
    }

    #[test]
    fn brownian_grid_covariance() {
        let c = build_grid_covariance(&[0.25, 0.5, 1.0], &Operator::diag(&[0.5]), &Operator::identity(1)).unwrap();
        let want = Operator::from_rows(&[vec![0.25, 0.25, 0.25], vec![0.25, 0.5, 0.5], vec![0.25, 0.5, 1.0]]).unwrap();
        assert!((&c - &want).max_abs() < 1e-15);
    }

    #[test]
    fn blocks_are_transposes() {
        let d = Operator::from_rows(&[vec![0.6, 0.1], vec![-0.1, 0.7]]).unwrap();
        let g = Operator::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let c = build_grid_covariance(&[0.2, 0.5, 0.9], &d, &g).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(c.block(i, j, 2), c.block(j, i, 2).transpose());
            }
        }
    }

    #[test]
    fn zero_count_and_zero_start() {
        let d = Operator::diag(&[0.5]);
        let g = Operator::identity(1);
        assert!(sample_exact(&[0.0, 1.0], &d, &g, 0, 1).unwrap().is_empty());
        let paths = sample_exact(&[0.0, 0.5, 1.0], &d, &g, 3, 1).unwrap();
        assert!(paths.iter().all(|p| p.values[0] == vec![0.0]));
        assert_eq!(paths, sample_exact(&[0.0, 0.5, 1.0], &d, &g, 3, 1).unwrap());
        assert!(sample_exact(&[0.1, 1.0], &d, &g, 1, 1).is_err());
    }

    #[test]
    fn brownian_variance_at_one() {
        let paths = sample_exact(&[0.0, 1.0], &Operator::diag(&[0.5]), &Operator::identity(1), 20000, 11).unwrap();
        let sq: Vec<f64> = paths.iter().map(|p| p.values[1][0].powi(2)).collect();
        let m = sq.len() as f64;
        let mean = sq.iter().sum::<f64>() / m;
        let sd = (sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        assert!((mean - 1.0).abs() <= 5.0 * sd / m.sqrt());
    }
}
