//! Poisson-telegraph approximation of an OFBM.
//!
//! `X_n(t) = ∫₀^X G1(x,t) θ_n(x) dx + ∫₀^X G2(x,t) θ̂_n(x) dx` where each
//! component of `θ_n`, `θ̂_n` is an independent telegraph signal
//! `√n (-1)^{N(x)}` driven by a rate-`n` Poisson process, and `X` is the
//! frequency truncation `x_max`.
//!
//! Sampling goes through a cumulative kernel table: `F(x,t) = ∫₀^x G(u,t) du`
//! is tabulated at cell edges together with `G` itself, so the integral of a
//! piecewise-constant signal reduces to cubic Hermite evaluations at the jump
//! times.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OfbmError, Result};
use crate::exact::{validate_grid, GridPath};
use crate::linalg::{mat_power, Operator};
use crate::model::{Kernel, OfbmSpec, TabulatedCovariance};
use crate::quadrature::{gl16, GaussLegendre, PanelLayout, QuadratureConfig};
use crate::rng::{StreamKey, StreamRole};

/// Jump times of one telegraph component on `(0, domain_end]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelegraphPath {
    pub intensity: f64,
    pub domain_end: f64,
    pub jump_times: Vec<f64>,
    pub initial_sign: f64,
}

impl TelegraphPath {
    pub fn amplitude(&self) -> f64 {
        self.intensity.sqrt()
    }

    /// Number of jumps in `(0, x]`.
    pub fn jumps_up_to(&self, x: f64) -> usize {
        self.jump_times.partition_point(|&u| u <= x)
    }
}

/// Points of a rate-`n` Poisson process on `(0, x_max]`.
pub fn sample_telegraph<R: Rng + ?Sized>(n: f64, x_max: f64, rng: &mut R) -> Result<TelegraphPath> {
    if !(n > 0.0) || !n.is_finite() {
        return Err(OfbmError::invalid(format!(
            "telegraph intensity must be positive, got {n}"
        )));
    }
    if !(x_max > 0.0) || !x_max.is_finite() {
        return Err(OfbmError::invalid(format!(
            "telegraph domain must be positive, got {x_max}"
        )));
    }
    let mut jumps = Vec::with_capacity((n * x_max * 1.1) as usize + 8);
    let mut x = 0.0;
    loop {
        let gap: f64 = rng.sample(Exp1);
        x += gap / n;
        if x > x_max {
            break;
        }
        jumps.push(x);
    }
    Ok(TelegraphPath {
        intensity: n,
        domain_end: x_max,
        jump_times: jumps,
        initial_sign: 1.0,
    })
}

/// `√n (-1)^{#jumps <= x}`.
pub fn telegraph_sign_at(p: &TelegraphPath, x: f64) -> Result<f64> {
    if !(x > 0.0 && x <= p.domain_end) {
        return Err(OfbmError::domain(format!(
            "telegraph evaluated at {x}, outside (0, {}]",
            p.domain_end
        )));
    }
    let parity = if p.jumps_up_to(x).is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok(p.initial_sign * parity * p.amplitude())
}

/// `∫₀^t θ(u) du`; tends to a Brownian motion as the intensity grows.
pub fn integrated_signal(p: &TelegraphPath, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t <= p.domain_end) {
        return Err(OfbmError::domain(format!(
            "integration limit {t} outside [0, {}]",
            p.domain_end
        )));
    }
    let mut sum = 0.0;
    let mut sign = p.initial_sign;
    let mut left = 0.0;
    for &u in p.jump_times.iter().take_while(|&&u| u <= t) {
        sum += sign * (u - left);
        sign = -sign;
        left = u;
    }
    sum += sign * (t - left);
    Ok(sum * p.amplitude())
}

/// The `2d` telegraph components driving one replicate of `X_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelegraphBundle {
    pub theta: Vec<TelegraphPath>,
    pub theta_hat: Vec<TelegraphPath>,
    pub seed: u64,
    pub replicate: u64,
}

impl TelegraphBundle {
    pub fn sample(n: f64, x_max: f64, d: usize, seed: u64, replicate: u64) -> Result<Self> {
        let draw = |j: usize, role: StreamRole| {
            let mut rng = StreamKey::new(seed, replicate, j as u32, role).rng();
            sample_telegraph(n, x_max, &mut rng)
        };
        Ok(TelegraphBundle {
            theta: (0..d).map(|j| draw(j, StreamRole::Theta)).collect::<Result<_>>()?,
            theta_hat: (0..d).map(|j| draw(j, StreamRole::ThetaHat)).collect::<Result<_>>()?,
            seed,
            replicate,
        })
    }
}

/// Per-frequency factors `x^{-(D-I/2)} A1` and `x^{-(D-I/2)} A2`, shared
/// by all times.
struct KernelBasis {
    pa1: Vec<f64>,
    pa2: Vec<f64>,
}

impl KernelBasis {
    fn new(x: f64, spec: &OfbmSpec, half_minus_d: &Operator) -> Result<Self> {
        let p = mat_power(x, half_minus_d)?;
        Ok(KernelBasis {
            pa1: p.matmul(&spec.a1).as_slice().to_vec(),
            pa2: p.matmul(&spec.a2).as_slice().to_vec(),
        })
    }

    /// Writes `G1(x,t)` and `G2(x,t)` (row-major) into the output slices.
    fn eval(&self, x: f64, t: f64, g1: &mut [f64], g2: &mut [f64]) {
        let s = (t * x).sin() / x;
        let v = 2.0 * (0.5 * t * x).sin().powi(2) / x;
        for k in 0..self.pa1.len() {
            g1[k] = s * self.pa1[k] - v * self.pa2[k];
            g2[k] = s * self.pa2[k] + v * self.pa1[k];
        }
    }
}

/// `∫ G(x,t) e_j θ(x) dx` over `(0, x_max]` by direct quadrature on every
/// sign-constant segment. Reference implementation; sampling uses
/// [`TelegraphScheme`].
pub fn integrate_kernel_column(
    which: Kernel,
    spec: &OfbmSpec,
    t: f64,
    column: usize,
    p: &TelegraphPath,
    q: &QuadratureConfig,
) -> Result<Vec<f64>> {
    q.validate()?;
    let d = spec.dim();
    if column >= d {
        return Err(OfbmError::invalid(format!("column {column} out of range for d = {d}")));
    }
    if (p.domain_end - q.x_max).abs() > 1e-12 * q.x_max {
        return Err(OfbmError::invalid(
            "telegraph domain must equal the quadrature truncation",
        ));
    }
    if t == 0.0 {
        return Ok(vec![0.0; d]);
    }
    let hm = spec.half_minus_exponent();
    let base = PanelLayout::from_config(PI / t.abs().max(1.0), q);
    let rule = gl16();

    let eval = |level: u32| -> Result<(Vec<f64>, f64)> {
        let layout = base.refined(level);
        let mut out = vec![0.0; d];
        let mut scale = 0.0;
        let mut g1 = vec![0.0; d * d];
        let mut g2 = vec![0.0; d * d];
        // The head interval (0, head] is negligible; only its jumps matter.
        let mut jump = p.jumps_up_to(layout.head);
        let mut sign = if jump.is_multiple_of(2) {
            p.initial_sign
        } else {
            -p.initial_sign
        };
        let mut piece = vec![0.0; d];
        let mut add_piece = |lo: f64, hi: f64, sign: f64, out: &mut [f64], scale: &mut f64| -> Result<()> {
            if hi - lo < 1e-12 {
                return Ok(());
            }
            piece.fill(0.0);
            for (x, w) in rule.on(lo, hi) {
                KernelBasis::new(x, spec, &hm)?.eval(x, t, &mut g1, &mut g2);
                let g = if which == Kernel::G1 { &g1 } else { &g2 };
                for i in 0..d {
                    piece[i] += w * g[i * d + column];
                }
            }
            for i in 0..d {
                out[i] += sign * piece[i];
                *scale += piece[i].abs();
            }
            Ok(())
        };
        for &(a, b) in &layout.panels {
            let mut left = a;
            while let Some(&u) = p.jump_times.get(jump) {
                if u > b {
                    break;
                }
                add_piece(left, u, sign, &mut out, &mut scale)?;
                sign = -sign;
                left = u;
                jump += 1;
            }
            add_piece(left, b, sign, &mut out, &mut scale)?;
        }
        let amp = p.amplitude();
        Ok((out.iter().map(|v| v * amp).collect(), scale * amp))
    };

    // Jumps inside the head interval (0, head] have probability ~n·head; the
    // head contributes only through the sign there.
    let (mut prev, _) = eval(0)?;
    for level in 1..=4 {
        let (cur, scale) = eval(level)?;
        let diff = cur.iter().zip(&prev).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let err = if scale > 0.0 { diff / scale } else { diff };
        if err <= q.rel_tol {
            return Ok(cur);
        }
        if level == 4 {
            return Err(OfbmError::numerical("segment quadrature did not converge", err));
        }
        prev = cur;
    }
    unreachable!()
}

/// Cumulative kernel tables `F(x,t)` and `G(x,t)` at cell edges for every
/// grid time, both kernels.
#[derive(Clone, Debug)]
pub struct KernelTable {
    dim: usize,
    times: Vec<f64>,
    edges: Vec<f64>,
    /// Index in `edges` where the uniform cells start.
    uniform_start: usize,
    width: f64,
    /// `[kernel][edge][time][d*d]`, flattened per kernel.
    f: [Vec<f64>; 2],
    g: [Vec<f64>; 2],
}

/// Uniform cell width for a table covering times up to `t_max`.
pub fn table_cell_width(t_max: f64) -> f64 {
    0.1 / t_max.abs().max(1.0)
}

impl KernelTable {
    pub fn new(spec: &OfbmSpec, times: &[f64], q: &QuadratureConfig) -> Result<Self> {
        q.validate()?;
        let d = spec.dim();
        let dd = d * d;
        let m = times.len();
        let t_max = times.iter().fold(0.0f64, |a, &t| a.max(t.abs()));
        let width = table_cell_width(t_max);
        let layout = PanelLayout::new(width, q.x_max, q.panels_near_zero, q.grading_ratio);
        let mut edges = vec![0.0, layout.head];
        edges.extend(layout.panels.iter().map(|p| p.1));
        let uniform_start = 1 + q.panels_near_zero;
        let hm = spec.half_minus_exponent();
        let rule = gl16();

        let n_edges = edges.len();
        let mut f = [vec![0.0; n_edges * m * dd], vec![0.0; n_edges * m * dd]];
        let mut g = [vec![0.0; n_edges * m * dd], vec![0.0; n_edges * m * dd]];
        let mut g1 = vec![0.0; dd];
        let mut g2 = vec![0.0; dd];

        // Kernel values at every edge except x = 0 (where they vanish in the
        // integrated sense and are never used for interpolation).
        for (k, &x) in edges.iter().enumerate().skip(1) {
            let basis = KernelBasis::new(x, spec, &hm)?;
            for (ti, &t) in times.iter().enumerate() {
                basis.eval(x, t, &mut g1, &mut g2);
                let off = (k * m + ti) * dd;
                g[0][off..off + dd].copy_from_slice(&g1);
                g[1][off..off + dd].copy_from_slice(&g2);
            }
        }
        // F(head) ≈ head · G(head): the head is ~1e-12 wide.
        let head = layout.head;
        for kern in 0..2 {
            for i in 0..m * dd {
                f[kern][m * dd + i] = head * g[kern][m * dd + i];
            }
        }
        let mut acc1 = vec![0.0; m * dd];
        let mut acc2 = vec![0.0; m * dd];
        for k in 1..n_edges - 1 {
            let (a, b) = (edges[k], edges[k + 1]);
            acc1.fill(0.0);
            acc2.fill(0.0);
            for (x, w) in rule.on(a, b) {
                let basis = KernelBasis::new(x, spec, &hm)?;
                for (ti, &t) in times.iter().enumerate() {
                    basis.eval(x, t, &mut g1, &mut g2);
                    for i in 0..dd {
                        acc1[ti * dd + i] += w * g1[i];
                        acc2[ti * dd + i] += w * g2[i];
                    }
                }
            }
            for i in 0..m * dd {
                f[0][(k + 1) * m * dd + i] = f[0][k * m * dd + i] + acc1[i];
                f[1][(k + 1) * m * dd + i] = f[1][k * m * dd + i] + acc2[i];
            }
        }
        Ok(KernelTable {
            dim: d,
            times: times.to_vec(),
            edges,
            uniform_start,
            width,
            f,
            g,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn domain_end(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    /// Cell index `k` with `edges[k] <= x <= edges[k+1]`.
    fn locate(&self, x: f64) -> usize {
        let last = self.edges.len() - 2;
        let start = self.edges[self.uniform_start];
        if x >= start {
            let k = self.uniform_start + ((x - start) / self.width) as usize;
            let mut k = k.min(last);
            // Guard against rounding at cell boundaries.
            while k > self.uniform_start && x < self.edges[k] {
                k -= 1;
            }
            while k < last && x > self.edges[k + 1] {
                k += 1;
            }
            k
        } else {
            self.edges.partition_point(|&e| e <= x).saturating_sub(1).min(last)
        }
    }

    /// Adds `weight · F(x, t_i) e_j` to `out[i*d..]` for every time `t_i`.
    fn add_column(&self, which: usize, j: usize, x: f64, weight: f64, out: &mut [f64]) {
        let d = self.dim;
        let dd = d * d;
        let m = self.times.len();
        let k = self.locate(x);
        let (a, b) = (self.edges[k], self.edges[k + 1]);
        let h = b - a;
        let f = &self.f[which];
        if k == 0 {
            // Linear on the head interval.
            let u = x / b;
            for ti in 0..m {
                let off = (m + ti) * dd;
                for i in 0..d {
                    out[ti * d + i] += weight * u * f[off + i * d + j];
                }
            }
            return;
        }
        let g = &self.g[which];
        let u = (x - a) / h;
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = (u3 - 2.0 * u2 + u) * h;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = (u3 - u2) * h;
        for ti in 0..m {
            let oa = (k * m + ti) * dd;
            let ob = ((k + 1) * m + ti) * dd;
            for i in 0..d {
                let c = i * d + j;
                let v = h00 * f[oa + c] + h10 * g[oa + c] + h01 * f[ob + c] + h11 * g[ob + c];
                out[ti * d + i] += weight * v;
            }
        }
    }

    /// `F(x_max, t_i)` column `j`.
    fn add_end_column(&self, which: usize, j: usize, weight: f64, out: &mut [f64]) {
        let d = self.dim;
        let dd = d * d;
        let m = self.times.len();
        let last = self.edges.len() - 1;
        for ti in 0..m {
            let off = (last * m + ti) * dd;
            for i in 0..d {
                out[ti * d + i] += weight * self.f[which][off + i * d + j];
            }
        }
    }

    /// `∫₀^X G(x, t_i) e_j θ(x) dx` for every table time, as `m` stacked
    /// d-vectors.
    pub fn integrate_path(&self, which: Kernel, j: usize, p: &TelegraphPath) -> Vec<f64> {
        let mut out = vec![0.0; self.times.len() * self.dim];
        self.accumulate_path(which, j, p, &mut out);
        out
    }

    fn accumulate_path(&self, which: Kernel, j: usize, p: &TelegraphPath, out: &mut [f64]) {
        let kern = if which == Kernel::G1 { 0 } else { 1 };
        let amp = p.amplitude() * p.initial_sign;
        // Σ_segments s (F(b) - F(a)) = s_last F(X) + Σ_k 2 s_{k-1} F(τ_k).
        let mut sign = amp;
        for &tau in &p.jump_times {
            self.add_column(kern, j, tau, 2.0 * sign, out);
            sign = -sign;
        }
        self.add_end_column(kern, j, sign, out);
    }
}

/// Telegraph sampler for a fixed spec, intensity and grid.
#[derive(Clone, Debug)]
pub struct TelegraphScheme {
    n: f64,
    grid: Vec<f64>,
    table: KernelTable,
}

impl TelegraphScheme {
    pub fn new(spec: &OfbmSpec, n: f64, grid: &[f64], q: &QuadratureConfig) -> Result<Self> {
        validate_grid(grid)?;
        if !(n > 0.0) || !n.is_finite() {
            return Err(OfbmError::invalid(format!(
                "telegraph intensity must be positive, got {n}"
            )));
        }
        let table = KernelTable::new(spec, grid, q)?;
        Ok(TelegraphScheme {
            n,
            grid: grid.to_vec(),
            table,
        })
    }

    pub fn intensity(&self) -> f64 {
        self.n
    }

    pub fn path_from_bundle(&self, bundle: &TelegraphBundle) -> GridPath {
        let d = self.table.dim;
        let mut out = vec![0.0; self.grid.len() * d];
        for j in 0..d {
            self.table.accumulate_path(Kernel::G1, j, &bundle.theta[j], &mut out);
            self.table
                .accumulate_path(Kernel::G2, j, &bundle.theta_hat[j], &mut out);
        }
        let mut values: Vec<Vec<f64>> = out.chunks(d).map(|c| c.to_vec()).collect();
        values[0].iter_mut().for_each(|v| *v = 0.0);
        GridPath {
            grid: self.grid.clone(),
            values,
            replicate_id: bundle.replicate,
            seed: bundle.seed,
        }
    }

    pub fn sample(&self, seed: u64, replicate: u64) -> Result<GridPath> {
        let bundle = TelegraphBundle::sample(self.n, self.table.domain_end(), self.table.dim, seed, replicate)?;
        Ok(self.path_from_bundle(&bundle))
    }

    pub fn sample_many(&self, seed: u64, count: usize) -> Result<Vec<GridPath>> {
        (0..count as u64)
            .into_par_iter()
            .map(|r| self.sample(seed, r))
            .collect()
    }
}

/// One replicate of `X_n` on `grid`, all grid points sharing one bundle.
pub fn sample_xn(
    spec: &OfbmSpec,
    n: f64,
    grid: &[f64],
    q: &QuadratureConfig,
    seed: u64,
    replicate: u64,
) -> Result<GridPath> {
    TelegraphScheme::new(spec, n, grid, q)?.sample(seed, replicate)
}

/// Weights for the exponential-kernel recursion on one cell width.
///
/// With `L(x) = ∫₀^x e^{-k(x-y)} G(y) dy` and `G` interpolated by the
/// Lagrange polynomial through the cell's Gauss nodes,
/// `L(x_i) = decay[i] L(a) + Σ_m inner[i][m] G(x_m)` and likewise for the
/// cell end.
struct ExpRecursion {
    decay: Vec<f64>,
    inner: Vec<Vec<f64>>,
    decay_end: f64,
    inner_end: Vec<f64>,
}

impl ExpRecursion {
    fn new(rule: &GaussLegendre, fine: &GaussLegendre, width: f64, k: f64) -> Self {
        let nodes: Vec<f64> = rule.nodes.iter().map(|xi| 0.5 * width * (1.0 + xi)).collect();
        let lagrange = |m: usize, y: f64| -> f64 {
            let mut v = 1.0;
            for (j, &xj) in nodes.iter().enumerate() {
                if j != m {
                    v *= (y - xj) / (nodes[m] - xj);
                }
            }
            v
        };
        // ∫_0^{z_end} e^{-k z} ℓ_m(x - z) dz, split where e^{-kz} varies.
        let weights_to = |x: f64| -> Vec<f64> {
            let mut out = vec![0.0; nodes.len()];
            if x <= 0.0 {
                return out;
            }
            let cap = if k > 0.0 { x.min(60.0 / k) } else { x };
            let mut cuts = vec![0.0];
            if k > 0.0 {
                for u in [0.5, 1.5, 3.5, 7.5, 15.0, 30.0] {
                    let z = u / k;
                    if z < cap {
                        cuts.push(z);
                    }
                }
            }
            cuts.push(cap);
            for w in cuts.windows(2) {
                for (z, wz) in fine.on(w[0], w[1]) {
                    let e = wz * (-k * z).exp();
                    for (m, o) in out.iter_mut().enumerate() {
                        *o += e * lagrange(m, x - z);
                    }
                }
            }
            out
        };
        ExpRecursion {
            decay: nodes.iter().map(|&x| (-k * x).exp()).collect(),
            inner: nodes.iter().map(|&x| weights_to(x)).collect(),
            decay_end: (-k * width).exp(),
            inner_end: weights_to(width),
        }
    }
}

/// `E[X_n(t) X_n(s)ᵀ]` from the telegraph correlation
/// `E[θ(x)θ(y)] = n e^{-2n|x-y|}`, with the same truncation `x_max` as the
/// sampler.
pub fn finite_n_covariance(spec: &OfbmSpec, n: f64, t: f64, s: f64, q: &QuadratureConfig) -> Result<Operator> {
    let tab = finite_n_covariance_grid(spec, n, &[t, s], q)?;
    Ok(tab.at(0, 1).clone())
}

/// [`finite_n_covariance`] on every pair of `times`.
pub fn finite_n_covariance_grid(
    spec: &OfbmSpec,
    n: f64,
    times: &[f64],
    q: &QuadratureConfig,
) -> Result<TabulatedCovariance> {
    q.validate()?;
    if !(n > 0.0) || !n.is_finite() {
        return Err(OfbmError::invalid(format!(
            "telegraph intensity must be positive, got {n}"
        )));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(OfbmError::invalid("covariance times must be finite"));
    }
    let t_max = times.iter().fold(1.0f64, |a, &t| a.max(t.abs()));
    let base = PanelLayout::from_config(0.5 * PI / t_max, q);
    let tol = 10.0 * q.rel_tol;

    let mut prev = finite_n_pass(spec, n, times, &base.refined(0))?;
    for level in 1..=4 {
        let cur = finite_n_pass(spec, n, times, &base.refined(level))?;
        let scale = cur.iter().fold(0.0f64, |m, v| m.max(v.max_abs()));
        let diff = cur.iter().zip(&prev).fold(0.0f64, |m, (a, b)| m.max((a - b).max_abs()));
        let err = if scale > 0.0 { diff / scale } else { diff };
        if err <= tol {
            return TabulatedCovariance::new(times.to_vec(), cur);
        }
        if level == 4 {
            return Err(OfbmError::numerical(
                "finite-n covariance quadrature did not converge",
                err,
            ));
        }
        prev = cur;
    }
    unreachable!()
}

fn finite_n_pass(spec: &OfbmSpec, n: f64, times: &[f64], layout: &PanelLayout) -> Result<Vec<Operator>> {
    let d = spec.dim();
    let dd = d * d;
    let m = times.len();
    let k = 2.0 * n;
    let rule = gl16();
    let fine = GaussLegendre::new(24);
    let hm = spec.half_minus_exponent();

    // L_t for each time and kernel at the current cell start.
    let mut l_start = vec![vec![0.0; m * dd]; 2];
    let mut acc = vec![0.0; m * m * dd];
    let mut cached: Option<(f64, ExpRecursion)> = None;

    let nodes = rule.nodes.len();
    let mut gvals = vec![vec![0.0; nodes * m * dd]; 2];
    let mut lvals = vec![vec![0.0; nodes * m * dd]; 2];
    let mut g1 = vec![0.0; dd];
    let mut g2 = vec![0.0; dd];

    for &(a, b) in &layout.panels {
        let width = b - a;
        let reuse = matches!(&cached, Some((w, _)) if (w - width).abs() <= 1e-14 * width);
        if !reuse {
            cached = Some((width, ExpRecursion::new(rule, &fine, width, k)));
        }
        let rec = &cached.as_ref().unwrap().1;

        let pts: Vec<(f64, f64)> = rule.on(a, b).collect();
        for (i, &(x, _)) in pts.iter().enumerate() {
            let basis = KernelBasis::new(x, spec, &hm)?;
            for (ti, &t) in times.iter().enumerate() {
                basis.eval(x, t, &mut g1, &mut g2);
                let off = (i * m + ti) * dd;
                gvals[0][off..off + dd].copy_from_slice(&g1);
                gvals[1][off..off + dd].copy_from_slice(&g2);
            }
        }
        for kern in 0..2 {
            let gv = &gvals[kern];
            let lv = &mut lvals[kern];
            for i in 0..nodes {
                for c in 0..m * dd {
                    let mut v = rec.decay[i] * l_start[kern][c];
                    for (mm, w) in rec.inner[i].iter().enumerate() {
                        v += w * gv[mm * m * dd + c];
                    }
                    lv[i * m * dd + c] = v;
                }
            }
            for c in 0..m * dd {
                let mut v = rec.decay_end * l_start[kern][c];
                for (mm, w) in rec.inner_end.iter().enumerate() {
                    v += w * gv[mm * m * dd + c];
                }
                l_start[kern][c] = v;
            }
            // n Σ w [G(x,t) L_s(x)ᵀ + L_t(x) G(x,s)ᵀ]
            for (i, &(_, w)) in pts.iter().enumerate() {
                let base = i * m * dd;
                for ti in 0..m {
                    let gt = &gv[base + ti * dd..base + (ti + 1) * dd];
                    let lt = &lv[base + ti * dd..base + (ti + 1) * dd];
                    for si in 0..m {
                        let gs = &gv[base + si * dd..base + (si + 1) * dd];
                        let ls = &lv[base + si * dd..base + (si + 1) * dd];
                        let out = &mut acc[(ti * m + si) * dd..(ti * m + si + 1) * dd];
                        for r in 0..d {
                            for c in 0..d {
                                let mut v = 0.0;
                                for q in 0..d {
                                    v += gt[r * d + q] * ls[c * d + q] + lt[r * d + q] * gs[c * d + q];
                                }
                                out[r * d + c] += n * w * v;
                            }
                        }
                    }
                }
            }
        }
    }

    let mut out = Vec::with_capacity(m * m);
    for ti in 0..m {
        for si in 0..m {
            let mut op = Operator::new(d, acc[(ti * m + si) * dd..(ti * m + si + 1) * dd].to_vec())?;
            if times[ti] == 0.0 || times[si] == 0.0 {
                op = Operator::zeros(d);
            } else if times[ti] == times[si] {
                op = op.symmetrized();
            }
            out.push(op);
        }
    }
    Ok(out)
}
