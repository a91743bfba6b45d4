use super::{decomp, Operator};
use crate::error::{OfbmError, Result};

// [13/13] Padé coefficients and the matching scaling threshold.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a fixed [13/13] Padé
/// kernel.
pub fn mat_exp(m: &Operator) -> Result<Operator> {
    if !m.is_finite() {
        return Err(OfbmError::invalid("mat_exp: non-finite entries"));
    }
    let d = m.dim();
    if m.is_zero() {
        return Ok(Operator::identity(d));
    }
    if d == 1 {
        return Ok(Operator::from_raw(1, vec![m.get(0, 0).exp()]));
    }

    let norm = m.norm_one();
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = m.scale(0.5f64.powi(squarings));

    let b = &PADE13;
    let ident = Operator::identity(d);
    let a2 = a.matmul(&a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);

    let mut u_inner = a6.scale(b[13]);
    u_inner.axpy(b[11], &a4);
    u_inner.axpy(b[9], &a2);
    let mut u_outer = a6.matmul(&u_inner);
    u_outer.axpy(b[7], &a6);
    u_outer.axpy(b[5], &a4);
    u_outer.axpy(b[3], &a2);
    u_outer.axpy(b[1], &ident);
    let u = a.matmul(&u_outer);

    let mut v_inner = a6.scale(b[12]);
    v_inner.axpy(b[10], &a4);
    v_inner.axpy(b[8], &a2);
    let mut v = a6.matmul(&v_inner);
    v.axpy(b[6], &a6);
    v.axpy(b[4], &a4);
    v.axpy(b[2], &a2);
    v.axpy(b[0], &ident);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = decomp::solve(&q, &p)?;
    for _ in 0..squarings {
        r = r.matmul(&r);
    }
    if !r.is_finite() {
        return Err(OfbmError::numerical("mat_exp overflowed", f64::INFINITY));
    }
    Ok(r)
}

/// Real matrix power `c^D = exp((ln c) D)` for `c > 0`.
pub fn mat_power(c: f64, d: &Operator) -> Result<Operator> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(OfbmError::domain(format!(
            "matrix power base must be positive and finite, got {c}"
        )));
    }
    if c == 1.0 {
        return Ok(Operator::identity(d.dim()));
    }
    mat_exp(&d.scale(c.ln()))
}
