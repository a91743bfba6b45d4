use serde::{Deserialize, Serialize};

use super::Operator;
use crate::error::{OfbmError, Result};

/// Extreme real parts of the spectrum: `lambda_min = min Re σ(M)` and
/// `lambda_max = max Re σ(M)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralBounds {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

const MAX_DIM: usize = 16;

pub fn spectral_real_bounds(m: &Operator) -> Result<SpectralBounds> {
    if m.dim() > MAX_DIM {
        return Err(OfbmError::invalid(format!(
            "spectral bounds supported up to d = {MAX_DIM}, got {}",
            m.dim()
        )));
    }
    let eig = eigenvalues(m)?;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(re, _)| {
            (lo.min(re), hi.max(re))
        });
    Ok(SpectralBounds {
        lambda_min: lo,
        lambda_max: hi,
    })
}

/// All eigenvalues as `(re, im)` pairs: balancing, reduction to upper
/// Hessenberg form, then Francis double-shift QR. Complex pairs come out of
/// the trailing 2×2 blocks.
pub fn eigenvalues(m: &Operator) -> Result<Vec<(f64, f64)>> {
    if !m.is_finite() {
        return Err(OfbmError::invalid("eigenvalues: non-finite entries"));
    }
    let n = m.dim();
    if n == 1 {
        return Ok(vec![(m.get(0, 0), 0.0)]);
    }
    let mut a = m.as_slice().to_vec();
    balance(&mut a, n);
    hessenberg(&mut a, n);
    hqr(&mut a, n)
}

fn balance(a: &mut [f64], n: usize) {
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[j * n + i].abs();
                    r += a[i * n + j].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        a[i * n + j] *= g;
                    }
                    for j in 0..n {
                        a[j * n + i] *= f;
                    }
                }
            }
        }
    }
}

// Gaussian elimination with pivoting; similarity transform to upper
// Hessenberg form.
fn hessenberg(a: &mut [f64], n: usize) {
    for m in 1..n.saturating_sub(1) {
        let mut x = 0.0f64;
        let mut piv = m;
        for j in m..n {
            if a[j * n + m - 1].abs() > x.abs() {
                x = a[j * n + m - 1];
                piv = j;
            }
        }
        if piv != m {
            for j in m - 1..n {
                a.swap(piv * n + j, m * n + j);
            }
            for j in 0..n {
                a.swap(j * n + piv, j * n + m);
            }
        }
        if x != 0.0 {
            for i in m + 1..n {
                let mut y = a[i * n + m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i * n + m - 1] = y;
                    for j in m..n {
                        a[i * n + j] -= y * a[m * n + j];
                    }
                    for j in 0..n {
                        a[j * n + m] += y * a[j * n + i];
                    }
                }
            }
        }
    }
    for i in 2..n {
        for j in 0..i - 1 {
            a[i * n + j] = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

fn hqr(a: &mut [f64], n: usize) -> Result<Vec<(f64, f64)>> {
    const MAX_ITS: usize = 60;
    let eps = f64::EPSILON;
    let at = |a: &[f64], i: usize, j: usize| a[i * n + j];

    let mut out = vec![(0.0, 0.0); n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[i * n + j].abs();
        }
    }

    let mut nn = n as isize - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let nu = nn as usize;
        let mut its = 0;
        loop {
            // Smallest l with a negligible subdiagonal entry at (l, l-1).
            let mut l = nu;
            while l >= 1 {
                let mut s = at(a, l - 1, l - 1).abs() + at(a, l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if at(a, l, l - 1).abs() <= eps * s {
                    a[l * n + l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = at(a, nu, nu);
            if l == nu {
                out[nu] = (x + t, 0.0);
                nn -= 1;
                break;
            }
            let mut y = at(a, nu - 1, nu - 1);
            let mut w = at(a, nu, nu - 1) * at(a, nu - 1, nu);
            if l == nu - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + sign(z, p);
                    let hi = x + z;
                    let lo = if z != 0.0 { x - w / z } else { hi };
                    out[nu - 1] = (hi, 0.0);
                    out[nu] = (lo, 0.0);
                } else {
                    out[nu - 1] = (x + p, -z);
                    out[nu] = (x + p, z);
                }
                nn -= 2;
                break;
            }
            if its == MAX_ITS {
                return Err(OfbmError::numerical(
                    "eigenvalue QR iteration did not converge",
                    at(a, nu, nu - 1).abs(),
                ));
            }
            if its == 10 || its == 20 || its == 40 {
                // Exceptional shift.
                t += x;
                for i in 0..=nu {
                    a[i * n + i] -= x;
                }
                let s = at(a, nu, nu - 1).abs() + at(a, nu - 1, nu - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;

            let (mut p, mut q, mut r);
            let mut m = nu - 2;
            loop {
                let z = at(a, m, m);
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / at(a, m + 1, m) + at(a, m, m + 1);
                q = at(a, m + 1, m + 1) - z - rr - ss;
                r = at(a, m + 2, m + 1);
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = at(a, m, m - 1).abs() * (q.abs() + r.abs());
                let v = p.abs() * (at(a, m - 1, m - 1).abs() + z.abs() + at(a, m + 1, m + 1).abs());
                if u <= eps * v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                a[i * n + i - 2] = 0.0;
                if i != m + 2 {
                    a[i * n + i - 3] = 0.0;
                }
            }

            let mut k = m;
            while k < nu {
                if k != m {
                    p = at(a, k, k - 1);
                    q = at(a, k + 1, k - 1);
                    r = if k + 1 != nu { at(a, k + 2, k - 1) } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k * n + k - 1] = -a[k * n + k - 1];
                        }
                    } else {
                        a[k * n + k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pp = a[k * n + j] + q * a[(k + 1) * n + j];
                        if k + 1 != nu {
                            pp += r * a[(k + 2) * n + j];
                            a[(k + 2) * n + j] -= pp * z;
                        }
                        a[(k + 1) * n + j] -= pp * y;
                        a[k * n + j] -= pp * x;
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for i in l..=mmin {
                        let mut pp = x * a[i * n + k] + y * a[i * n + k + 1];
                        if k + 1 != nu {
                            pp += z * a[i * n + k + 2];
                            a[i * n + k + 2] -= pp * r;
                        }
                        a[i * n + k + 1] -= pp * q;
                        a[i * n + k] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn op(rows: &[&[f64]]) -> Operator {
        Operator::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn bounds_examples() {
        let b = spectral_real_bounds(&Operator::diag(&[0.3, 0.9])).unwrap();
        assert_abs_diff_eq!(b.lambda_min, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(b.lambda_max, 0.9, epsilon = 1e-12);

        let b = spectral_real_bounds(&op(&[&[0.6, 0.3], &[0.0, 0.8]])).unwrap();
        assert_abs_diff_eq!(b.lambda_min, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(b.lambda_max, 0.8, epsilon = 1e-12);

        let b = spectral_real_bounds(&op(&[&[0.5, -1.0], &[1.0, 0.5]])).unwrap();
        assert_abs_diff_eq!(b.lambda_min, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(b.lambda_max, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn companion_matrix_roots() {
        // x^4 - 10x^3 + 35x^2 - 50x + 24 = (x-1)(x-2)(x-3)(x-4)
        let m = op(&[
            &[10.0, -35.0, 50.0, -24.0],
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, 0.0],
        ]);
        let mut ev: Vec<f64> = eigenvalues(&m).unwrap().iter().map(|e| e.0).collect();
        ev.sort_by(f64::total_cmp);
        for (got, want) in ev.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn complex_pairs_in_larger_matrix() {
        // Block diagonal with a rotation block and a real eigenvalue.
        let m = op(&[&[0.2, -2.0, 0.0], &[2.0, 0.2, 0.0], &[0.0, 0.0, 0.9]]);
        let ev = eigenvalues(&m).unwrap();
        let complex: Vec<_> = ev.iter().filter(|e| e.1 != 0.0).collect();
        assert_eq!(complex.len(), 2);
        for e in complex {
            assert_abs_diff_eq!(e.0, 0.2, epsilon = 1e-12);
            assert_abs_diff_eq!(e.1.abs(), 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_oversized() {
        assert!(spectral_real_bounds(&Operator::identity(17)).is_err());
    }
}
