//! Small dense real-matrix calculus.
//!
//! Everything here operates on [`Operator`], a square row-major matrix of
//! dimension `d`. The sizes of interest are tiny (`d <= 16` for operators,
//! a few hundred for grid covariances), so the algorithms favour clarity
//! over blocking or vectorisation.

mod decomp;
mod eigen;
mod expm;

use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{OfbmError, Result};

pub use decomp::{cholesky_psd, solve, solve_lyapunov, CholeskyFactor};
pub use eigen::{eigenvalues, spectral_real_bounds, SpectralBounds};
pub use expm::{mat_exp, mat_power};

/// Square real matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Operator {
    dim: usize,
    data: Vec<f64>,
}

impl Operator {
    /// Builds an operator from row-major entries. Fails on a size mismatch
    /// or on non-finite entries.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(OfbmError::invalid("operator dimension must be at least 1"));
        }
        if data.len() != dim * dim {
            return Err(OfbmError::invalid(format!(
                "expected {} entries for a {dim}x{dim} operator, got {}",
                dim * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(OfbmError::invalid("operator has non-finite entries"));
        }
        Ok(Operator { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(OfbmError::invalid("operator rows must form a square matrix"));
        }
        Operator::new(dim, rows.iter().flatten().copied().collect())
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "operator dimension must be at least 1");
        Operator {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Operator::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Operator::zeros(entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m.data[i * entries.len() + i] = v;
        }
        m
    }

    /// Wraps data without validation; callers guarantee shape.
    pub(crate) fn from_raw(dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        Operator { dim, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> Operator {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[j * d + i] = self.data[i * d + j];
            }
        }
        Operator::from_raw(d, out)
    }

    pub fn scale(&self, c: f64) -> Operator {
        Operator::from_raw(self.dim, self.data.iter().map(|v| v * c).collect())
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let d = self.dim;
        (0..d)
            .map(|j| (0..d).map(|i| self.data[i * d + j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        self.data
            .chunks(self.dim)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Operator) -> Operator {
        assert_eq!(self.dim, other.dim, "dimension mismatch in matmul");
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[k * d..(k + 1) * d];
                let dst = &mut out[i * d..(i + 1) * d];
                for (o, b) in dst.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        Operator::from_raw(d, out)
    }

    /// `self * m * selfᵀ`.
    pub fn congruence(&self, m: &Operator) -> Operator {
        self.matmul(m).matmul(&self.transpose())
    }

    /// Symmetric part `(M + Mᵀ)/2`.
    pub fn symmetrized(&self) -> Operator {
        let t = self.transpose();
        Operator::from_raw(
            self.dim,
            self.data.iter().zip(&t.data).map(|(a, b)| 0.5 * (a + b)).collect(),
        )
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let d = self.dim;
        (0..d).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// `self += a · x`.
    pub fn axpy(&mut self, a: f64, x: &Operator) {
        for (y, xv) in self.data.iter_mut().zip(&x.data) {
            *y += a * xv;
        }
    }

    /// Embeds a `d×d` block at block position `(bi, bj)` of a larger matrix.
    pub(crate) fn set_block(&mut self, bi: usize, bj: usize, block: &Operator) {
        let d = block.dim;
        for i in 0..d {
            for j in 0..d {
                self.set(bi * d + i, bj * d + j, block.get(i, j));
            }
        }
    }

    pub fn block(&self, bi: usize, bj: usize, d: usize) -> Operator {
        let mut out = Operator::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.set(i, j, self.get(bi * d + i, bj * d + j));
            }
        }
        out
    }
}

impl TryFrom<Vec<Vec<f64>>> for Operator {
    type Error = OfbmError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Operator::from_rows(&rows)
    }
}

impl From<Operator> for Vec<Vec<f64>> {
    fn from(m: Operator) -> Self {
        m.rows()
    }
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim);
        Operator::from_raw(self.dim, self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim);
        Operator::from_raw(self.dim, self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect())
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.matmul(rhs)
    }
}

/// Operator norm `max_{|x|=1} |Mx|`, i.e. the largest singular value.
///
/// Power iteration on `MᵀM` from the normalised all-ones vector. A second
/// start along the heaviest column guards against a start vector that is
/// orthogonal to the dominant singular direction.
pub fn operator_norm(m: &Operator) -> Result<f64> {
    if !m.is_finite() {
        return Err(OfbmError::invalid("operator has non-finite entries"));
    }
    if m.is_zero() {
        return Ok(0.0);
    }
    let d = m.dim();
    let gram = m.transpose().matmul(m);
    let ones = vec![1.0 / (d as f64).sqrt(); d];
    let heaviest = (0..d)
        .max_by(|&a, &b| {
            let ca: f64 = (0..d).map(|i| m.get(i, a).powi(2)).sum();
            let cb: f64 = (0..d).map(|i| m.get(i, b).powi(2)).sum();
            ca.total_cmp(&cb)
        })
        .unwrap_or(0);
    let mut unit = vec![0.0; d];
    unit[heaviest] = 1.0;
    let a = power_iteration(&gram, ones);
    let b = power_iteration(&gram, unit);
    Ok(a.max(b).max(0.0).sqrt())
}

fn power_iteration(gram: &Operator, mut v: Vec<f64>) -> f64 {
    const TOL: f64 = 1e-12;
    const MAX_ITER: usize = 10_000;
    let mut rho = 0.0;
    for _ in 0..MAX_ITER {
        let w = gram.mat_vec(&v);
        let next: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = w.into_iter().map(|x| x / norm).collect();
        if (next - rho).abs() <= TOL * next.abs() {
            return next;
        }
        rho = next;
    }
    rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn norm_examples() {
        assert_relative_eq!(operator_norm(&Operator::identity(3)).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(
            operator_norm(&Operator::diag(&[2.0, -3.0])).unwrap(),
            3.0,
            epsilon = 1e-10
        );
        let rank1 = Operator::from_rows(&[vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap();
        assert_relative_eq!(operator_norm(&rank1).unwrap(), 2.0, epsilon = 1e-10);
    }

    #[test]
    fn norm_survives_orthogonal_start() {
        // MᵀM annihilates the all-ones vector.
        let m = Operator::from_rows(&[vec![1.0, -1.0], vec![0.0, 0.0]]).unwrap();
        assert_relative_eq!(operator_norm(&m).unwrap(), 2f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Operator::new(2, vec![1.0; 3]).is_err());
        assert!(Operator::new(1, vec![f64::NAN]).is_err());
        assert!(Operator::from_rows(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn serde_uses_nested_rows() {
        let m: Operator = serde_json_like(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(m.rows(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    fn serde_json_like(rows: &[Vec<f64>]) -> Operator {
        Operator::try_from(rows.to_vec()).unwrap()
    }
}
