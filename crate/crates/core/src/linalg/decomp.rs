use super::Operator;
use crate::error::{OfbmError, Result};

/// Lower-triangular factor together with the diagonal jitter that made the
/// factorisation succeed.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    pub lower: Operator,
    pub jitter: f64,
}

impl CholeskyFactor {
    /// `L z` for a vector of standard normals.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let n = self.lower.dim();
        let l = self.lower.as_slice();
        (0..n)
            .map(|i| l[i * n..i * n + i + 1].iter().zip(z).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Cholesky factorisation of a symmetric matrix with a geometric jitter
/// ladder `0, 1e-12, 1e-10, ...` capped at `jitter_max`.
pub fn cholesky_psd(m: &Operator, jitter_max: f64) -> Result<CholeskyFactor> {
    if !m.is_finite() {
        return Err(OfbmError::invalid("cholesky: non-finite entries"));
    }
    if !(jitter_max >= 0.0) {
        return Err(OfbmError::invalid("cholesky: jitter_max must be nonnegative"));
    }
    let scale = m.max_abs().max(1.0);
    if !m.is_symmetric(1e-10 * scale) {
        return Err(OfbmError::invalid("cholesky: matrix is not symmetric"));
    }

    let mut ladder = vec![0.0];
    let mut eps = 1e-12;
    while eps <= jitter_max * (1.0 + 1e-9) {
        ladder.push(eps);
        eps *= 100.0;
    }

    for &jitter in &ladder {
        if let Some(lower) = try_cholesky(m, jitter) {
            return Ok(CholeskyFactor { lower, jitter });
        }
    }
    Err(OfbmError::NotPositiveSemidefinite(format!(
        "factorisation failed for every jitter up to {jitter_max:e}"
    )))
}

fn try_cholesky(m: &Operator, jitter: f64) -> Option<Operator> {
    let n = m.dim();
    let a = m.as_slice();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut diag = a[j * n + j] + jitter;
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return None;
        }
        let ljj = diag.sqrt();
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    Some(Operator::from_raw(n, l))
}

/// Solves `A X = B` by LU with partial pivoting.
pub fn solve(a: &Operator, b: &Operator) -> Result<Operator> {
    let n = a.dim();
    assert_eq!(n, b.dim());
    let mut lu = a.as_slice().to_vec();
    let mut x = b.as_slice().to_vec();
    lu_solve_in_place(&mut lu, &mut x, n, n)?;
    Ok(Operator::from_raw(n, x))
}

/// In-place Gaussian elimination on an `n×n` system with `cols` right-hand
/// sides stored row-major in `rhs`.
pub(crate) fn lu_solve_in_place(a: &mut [f64], rhs: &mut [f64], n: usize, cols: usize) -> Result<()> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for k in 0..n {
        let pivot_row = (k..n)
            .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
            .unwrap();
        let pivot = a[pivot_row * n + k];
        if pivot.abs() <= 1e-300 * scale || pivot == 0.0 {
            return Err(OfbmError::numerical("singular linear system", 0.0));
        }
        if pivot_row != k {
            for j in 0..n {
                a.swap(k * n + j, pivot_row * n + j);
            }
            for j in 0..cols {
                rhs.swap(k * cols + j, pivot_row * cols + j);
            }
        }
        for i in k + 1..n {
            let f = a[i * n + k] / pivot;
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                a[i * n + j] -= f * a[k * n + j];
            }
            for j in 0..cols {
                rhs[i * cols + j] -= f * rhs[k * cols + j];
            }
        }
    }
    for k in (0..n).rev() {
        let pivot = a[k * n + k];
        for j in 0..cols {
            let mut s = rhs[k * cols + j];
            for i in k + 1..n {
                s -= a[k * n + i] * rhs[i * cols + j];
            }
            rhs[k * cols + j] = s / pivot;
        }
    }
    Ok(())
}

/// Solves the Lyapunov equation `A Y + Y Aᵀ = C` through its Kronecker
/// form. Requires `λ_i(A) + λ_j(A) != 0` for all eigenvalue pairs.
pub fn solve_lyapunov(a: &Operator, c: &Operator) -> Result<Operator> {
    let d = a.dim();
    assert_eq!(d, c.dim());
    let n = d * d;
    // vec(Y) indexed as y[i*d + j]; (AY)_{ij} = Σ_k A_ik Y_kj, (YAᵀ)_{ij} = Σ_k Y_ik A_jk.
    let mut k = vec![0.0; n * n];
    for i in 0..d {
        for j in 0..d {
            let row = i * d + j;
            for m in 0..d {
                k[row * n + (m * d + j)] += a.get(i, m);
                k[row * n + (i * d + m)] += a.get(j, m);
            }
        }
    }
    let mut y = c.as_slice().to_vec();
    lu_solve_in_place(&mut k, &mut y, n, 1)?;
    Ok(Operator::from_raw(d, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn op(rows: &[&[f64]]) -> Operator {
        Operator::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn cholesky_examples() {
        let f = cholesky_psd(&Operator::identity(3), 1e-6).unwrap();
        assert_eq!(f.lower, Operator::identity(3));
        assert_eq!(f.jitter, 0.0);

        let f = cholesky_psd(&op(&[&[4.0, 2.0], &[2.0, 5.0]]), 0.0).unwrap();
        let want = op(&[&[2.0, 0.0], &[1.0, 2.0]]);
        assert!((&f.lower - &want).max_abs() < 1e-15);
        assert_eq!(f.jitter, 0.0);

        let err = cholesky_psd(&op(&[&[1.0, 2.0], &[2.0, 1.0]]), 1e-6).unwrap_err();
        assert!(matches!(err, OfbmError::NotPositiveSemidefinite(_)));
    }

    #[test]
    fn cholesky_jitter_ladder_rescues_singular_psd() {
        // Rank one: exact factorisation hits a zero pivot.
        let m = op(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let f = cholesky_psd(&m, 1e-6).unwrap();
        assert!(f.jitter > 0.0 && f.jitter <= 1e-6);
        let llt = f.lower.matmul(&f.lower.transpose());
        let mut target = m.clone();
        target.axpy(f.jitter, &Operator::identity(2));
        assert!((&llt - &target).max_abs() <= 1e-8 * 2.0);
    }

    #[test]
    fn cholesky_rejects_asymmetric() {
        let m = op(&[&[1.0, 0.5], &[0.0, 1.0]]);
        assert!(matches!(cholesky_psd(&m, 0.0), Err(OfbmError::InvalidInput(_))));
    }

    #[test]
    fn lyapunov_diagonal() {
        let a = Operator::diag(&[1.0, 2.0]);
        let c = op(&[&[2.0, 3.0], &[3.0, 4.0]]);
        let y = solve_lyapunov(&a, &c).unwrap();
        // (a_i + a_j) y_ij = c_ij
        assert_relative_eq!(y.get(0, 0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(y.get(0, 1), 1.0, epsilon = 1e-14);
        assert_relative_eq!(y.get(1, 1), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn lyapunov_residual_nonnormal() {
        let a = op(&[&[0.7, 0.4], &[-0.2, 0.6]]);
        let c = op(&[&[1.0, 0.2], &[0.2, 3.0]]);
        let y = solve_lyapunov(&a, &c).unwrap();
        let res = &(&a.matmul(&y) + &y.matmul(&a.transpose())) - &c;
        assert!(res.max_abs() < 1e-13);
    }

    #[test]
    fn solve_recovers_inverse() {
        let a = op(&[&[0.0, 2.0], &[1.0, 1.0]]);
        let inv = solve(&a, &Operator::identity(2)).unwrap();
        let prod = a.matmul(&inv);
        assert!((&prod - &Operator::identity(2)).max_abs() < 1e-15);
    }
}
