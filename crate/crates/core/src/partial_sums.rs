//! Stationary Gaussian sequences and their normalised partial sums
//! `Q_N(t) = d_N Σ_{i <= ⌊Nt⌋} Z_i`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{OfbmError, Result};
use crate::exact::GridPath;
use crate::linalg::{cholesky_psd, mat_power, operator_norm, solve, CholeskyFactor, Operator};
use crate::rng::{StreamKey, StreamRole};

/// Largest fGn length accepted by the generators.
pub const MAX_FGN_LENGTH: usize = 1 << 22;
/// Largest `length · d` for dense stationary sampling.
pub const MAX_DENSE_SIZE: usize = 1 << 14;
/// Relative tolerance on negative circulant eigenvalues.
const CIRCULANT_NEG_TOL: f64 = 1e-8;

fn check_hurst(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 1.0) {
        return Err(OfbmError::domain(format!("Hurst index must lie in (0, 1), got {h}")));
    }
    Ok(())
}

/// `γ_H(j) = ½(|j+1|^{2H} - 2j^{2H} + |j-1|^{2H})`, evaluated without
/// cancellation at large lags.
pub fn fgn_covariance(h: f64, j: u64) -> Result<f64> {
    check_hurst(h)?;
    Ok(fgn_cov_unchecked(h, j))
}

fn fgn_cov_unchecked(h: f64, j: u64) -> f64 {
    let p = 2.0 * h;
    match j {
        0 => 1.0,
        1 => 0.5 * (2f64.powf(p) - 2.0),
        _ => {
            let x = j as f64;
            let up = (p * (1.0 / x).ln_1p()).exp_m1();
            let down = (p * (-1.0 / x).ln_1p()).exp_m1();
            0.5 * x.powf(p) * (up + down)
        }
    }
}

/// Exact fGn sampler of fixed length via circulant embedding, with a dense
/// Toeplitz Cholesky fallback.
#[derive(Clone)]
pub struct FgnGenerator {
    hurst: f64,
    length: usize,
    method: FgnMethod,
}

#[derive(Clone)]
enum FgnMethod {
    Circulant { sqrt_eig: Vec<f64>, fft: Arc<dyn Fft<f64>> },
    Cholesky(CholeskyFactor),
}

impl std::fmt::Debug for FgnGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let method = match self.method {
            FgnMethod::Circulant { .. } => "circulant",
            FgnMethod::Cholesky(_) => "cholesky",
        };
        f.debug_struct("FgnGenerator")
            .field("hurst", &self.hurst)
            .field("length", &self.length)
            .field("method", &method)
            .finish()
    }
}

impl FgnGenerator {
    pub fn new(hurst: f64, length: usize) -> Result<Self> {
        check_hurst(hurst)?;
        if length == 0 || length > MAX_FGN_LENGTH {
            return Err(OfbmError::invalid(format!(
                "fGn length must lie in [1, {MAX_FGN_LENGTH}], got {length}"
            )));
        }
        let gamma: Vec<f64> = (0..=length as u64).map(|j| fgn_cov_unchecked(hurst, j)).collect();
        match circulant_sqrt_eigenvalues(&gamma, length) {
            Some((sqrt_eig, fft)) => Ok(FgnGenerator {
                hurst,
                length,
                method: FgnMethod::Circulant { sqrt_eig, fft },
            }),
            None => {
                if length > MAX_DENSE_SIZE {
                    return Err(OfbmError::numerical(
                        "circulant embedding is not nonnegative and the length is too large for Cholesky",
                        0.0,
                    ));
                }
                let toeplitz = toeplitz(&gamma[..length]);
                let factor = cholesky_psd(&toeplitz, 1e-10).map_err(|e| match e {
                    OfbmError::NotPositiveSemidefinite(m) => OfbmError::numerical(m, 0.0),
                    other => other,
                })?;
                Ok(FgnGenerator {
                    hurst,
                    length,
                    method: FgnMethod::Cholesky(factor),
                })
            }
        }
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn uses_circulant(&self) -> bool {
        matches!(self.method, FgnMethod::Circulant { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.method {
            FgnMethod::Circulant { sqrt_eig, fft } => {
                let mut buf: Vec<Complex<f64>> = sqrt_eig
                    .iter()
                    .map(|&s| {
                        let a: f64 = rng.sample(StandardNormal);
                        let b: f64 = rng.sample(StandardNormal);
                        Complex::new(s * a, s * b)
                    })
                    .collect();
                fft.process(&mut buf);
                buf[..self.length].iter().map(|c| c.re).collect()
            }
            FgnMethod::Cholesky(f) => {
                let z: Vec<f64> = (0..self.length).map(|_| rng.sample(StandardNormal)).collect();
                f.apply(&z)
            }
        }
    }
}

/// `√(λ_k / m)` for the circulant with first row
/// `γ(0), ..., γ(n), γ(n-1), ..., γ(1)` (size `m = 2n`), or `None` when an
/// eigenvalue is negative beyond rounding.
fn circulant_sqrt_eigenvalues(gamma: &[f64], n: usize) -> Option<(Vec<f64>, Arc<dyn Fft<f64>>)> {
    let m = 2 * n;
    let mut row: Vec<Complex<f64>> = Vec::with_capacity(m);
    row.extend(gamma[..=n].iter().map(|&g| Complex::new(g, 0.0)));
    row.extend(gamma[1..n].iter().rev().map(|&g| Complex::new(g, 0.0)));
    let fft = FftPlanner::new().plan_fft_forward(m);
    fft.process(&mut row);
    let max = row.iter().fold(0.0f64, |a, c| a.max(c.re));
    if row.iter().any(|c| c.re < -CIRCULANT_NEG_TOL * max) {
        return None;
    }
    let sqrt_eig = row.iter().map(|c| (c.re.max(0.0) / m as f64).sqrt()).collect();
    Some((sqrt_eig, fft))
}

fn toeplitz(c: &[f64]) -> Operator {
    let n = c.len();
    let mut t = Operator::zeros(n);
    for i in 0..n {
        for j in 0..n {
            t.set(i, j, c[i.abs_diff(j)]);
        }
    }
    t
}

/// One fGn sequence of the given length.
pub fn sample_fgn<R: Rng + ?Sized>(hurst: f64, length: usize, rng: &mut R) -> Result<Vec<f64>> {
    Ok(FgnGenerator::new(hurst, length)?.sample(rng))
}

/// Lag covariance `r(j) = E[Z_i Z_{i+j}ᵀ]` of a stationary vector sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StationaryCovSeq {
    /// Independent fGn components: `r(j) = diag(scale_k² γ_{H_k}(j))`.
    FgnDiagonal { hurst: Vec<f64>, scales: Vec<f64> },
    /// Table of lags `0..=L`; zero beyond.
    Explicit { table: Vec<Operator> },
}

impl StationaryCovSeq {
    pub fn fgn_diagonal(hurst: Vec<f64>, scales: Vec<f64>) -> Result<Self> {
        if hurst.is_empty() || hurst.len() != scales.len() {
            return Err(OfbmError::invalid(
                "hurst and scale vectors must be nonempty and of equal length",
            ));
        }
        for &h in &hurst {
            check_hurst(h)?;
        }
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(OfbmError::invalid("scales must be positive"));
        }
        Ok(StationaryCovSeq::FgnDiagonal { hurst, scales })
    }

    /// Validates that `r(0)` is symmetric and the block-Toeplitz matrix over
    /// the table lags admits a Cholesky factorisation.
    pub fn explicit(table: Vec<Operator>) -> Result<Self> {
        let Some(r0) = table.first() else {
            return Err(OfbmError::invalid("covariance table is empty"));
        };
        let d = r0.dim();
        if table.iter().any(|r| r.dim() != d) {
            return Err(OfbmError::invalid("covariance table entries differ in dimension"));
        }
        if !r0.is_symmetric(1e-10 * r0.max_abs().max(1.0)) {
            return Err(OfbmError::invalid("r(0) must be symmetric"));
        }
        if table.len() * d > MAX_DENSE_SIZE {
            return Err(OfbmError::invalid("covariance table too large for dense validation"));
        }
        let cov = StationaryCovSeq::Explicit { table };
        cholesky_psd(&cov.block_toeplitz(cov.horizon().unwrap() + 1), 0.0)?;
        Ok(cov)
    }

    pub fn dim(&self) -> usize {
        match self {
            StationaryCovSeq::FgnDiagonal { hurst, .. } => hurst.len(),
            StationaryCovSeq::Explicit { table } => table[0].dim(),
        }
    }

    /// Largest tabulated lag, if finite.
    pub fn horizon(&self) -> Option<usize> {
        match self {
            StationaryCovSeq::FgnDiagonal { .. } => None,
            StationaryCovSeq::Explicit { table } => Some(table.len() - 1),
        }
    }

    pub fn lag(&self, j: usize) -> Operator {
        match self {
            StationaryCovSeq::FgnDiagonal { hurst, scales } => Operator::diag(
                &hurst
                    .iter()
                    .zip(scales)
                    .map(|(&h, &s)| s * s * fgn_cov_unchecked(h, j as u64))
                    .collect::<Vec<_>>(),
            ),
            StationaryCovSeq::Explicit { table } => {
                table.get(j).cloned().unwrap_or_else(|| Operator::zeros(table[0].dim()))
            }
        }
    }

    /// Covariance of `(Z_1, ..., Z_len)` stacked: block `(i, j)` is
    /// `r(j - i)` above the diagonal and `r(i - j)ᵀ` below.
    pub fn block_toeplitz(&self, len: usize) -> Operator {
        let d = self.dim();
        let lags: Vec<Operator> = (0..len).map(|j| self.lag(j)).collect();
        let mut big = Operator::zeros(len * d);
        for i in 0..len {
            for j in 0..len {
                let block = if j >= i {
                    lags[j - i].clone()
                } else {
                    lags[i - j].transpose()
                };
                big.set_block(i, j, &block);
            }
        }
        big
    }
}

/// Dense sampler for `length` consecutive terms of a stationary sequence.
#[derive(Clone, Debug)]
pub struct StationarySampler {
    dim: usize,
    length: usize,
    factor: CholeskyFactor,
}

impl StationarySampler {
    pub fn new(cov: &StationaryCovSeq, length: usize) -> Result<Self> {
        let d = cov.dim();
        if length == 0 || length * d > MAX_DENSE_SIZE {
            return Err(OfbmError::invalid(format!(
                "length·d must lie in [1, {MAX_DENSE_SIZE}], got {}",
                length * d
            )));
        }
        let factor = cholesky_psd(&cov.block_toeplitz(length), 1e-10)?;
        Ok(StationarySampler { dim: d, length, factor })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        let z: Vec<f64> = (0..self.length * self.dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        self.factor.apply(&z).chunks(self.dim).map(|c| c.to_vec()).collect()
    }
}

pub fn sample_stationary_explicit<R: Rng + ?Sized>(
    cov: &StationaryCovSeq,
    length: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    Ok(StationarySampler::new(cov, length)?.sample(rng))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `d_N = N^{-D}`.
    AutoFgn,
    Explicit(Operator),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialSumConfig {
    pub n: usize,
    pub exponent: Operator,
    pub normalization: Normalization,
}

impl PartialSumConfig {
    pub fn new(n: usize, exponent: Operator, normalization: Normalization) -> Result<Self> {
        if n < 2 {
            return Err(OfbmError::invalid(format!("N must be at least 2, got {n}")));
        }
        if let Normalization::Explicit(m) = &normalization {
            if m.dim() != exponent.dim() {
                return Err(OfbmError::invalid("normalisation and exponent dimensions differ"));
            }
            solve(m, &Operator::identity(m.dim()))
                .map_err(|_| OfbmError::invalid("normalisation matrix is singular"))?;
        }
        Ok(PartialSumConfig {
            n,
            exponent,
            normalization,
        })
    }

    pub fn normalization_matrix(&self) -> Result<Operator> {
        match &self.normalization {
            Normalization::AutoFgn => mat_power(self.n as f64, &self.exponent.scale(-1.0)),
            Normalization::Explicit(m) => Ok(m.clone()),
        }
    }
}

/// `⌊N t⌋`, robust to `t = k/N` not being exactly representable.
pub fn terms_at(n: usize, t: f64) -> usize {
    let v = n as f64 * t;
    let r = v.round();
    if (v - r).abs() <= 1e-9 * v.abs().max(1.0) {
        r as usize
    } else {
        v.floor() as usize
    }
}

/// `Q_N(t) = d_N Σ_{i <= ⌊Nt⌋} Z_i` on the grid.
pub fn partial_sum_path(z: &[Vec<f64>], cfg: &PartialSumConfig, grid: &[f64]) -> Result<GridPath> {
    let dn = cfg.normalization_matrix()?;
    partial_sum_path_with(z, cfg.n, &dn, grid)
}

fn partial_sum_path_with(z: &[Vec<f64>], n: usize, dn: &Operator, grid: &[f64]) -> Result<GridPath> {
    let d = dn.dim();
    if z.len() < n {
        return Err(OfbmError::invalid(format!(
            "need at least N = {n} terms, got {}",
            z.len()
        )));
    }
    if z.iter().any(|v| v.len() != d) {
        return Err(OfbmError::invalid("sequence terms must be d-vectors"));
    }
    if grid.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
        return Err(OfbmError::invalid("partial-sum grid must lie in [0, 1]"));
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut sum = vec![0.0; d];
    let mut used = 0;
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    let mut out = vec![Vec::new(); grid.len()];
    for &gi in &order {
        let k = terms_at(n, grid[gi]);
        while used < k {
            for (s, v) in sum.iter_mut().zip(&z[used]) {
                *s += v;
            }
            used += 1;
        }
        out[gi] = dn.mat_vec(&sum);
    }
    values.extend(out);
    Ok(GridPath {
        grid: grid.to_vec(),
        values,
        replicate_id: 0,
        seed: 0,
    })
}

/// Partial-sum sampler for a fixed sequence law, level `N` and grid.
#[derive(Clone, Debug)]
pub struct PartialSumScheme {
    n: usize,
    grid: Vec<f64>,
    dn: Operator,
    noise: NoiseSource,
}

#[derive(Clone, Debug)]
enum NoiseSource {
    Fgn {
        generators: Vec<FgnGenerator>,
        scales: Vec<f64>,
    },
    Dense(StationarySampler),
}

impl PartialSumScheme {
    pub fn new(cov: &StationaryCovSeq, cfg: &PartialSumConfig, grid: &[f64]) -> Result<Self> {
        if cov.dim() != cfg.exponent.dim() {
            return Err(OfbmError::invalid("sequence and exponent dimensions differ"));
        }
        let noise = match cov {
            StationaryCovSeq::FgnDiagonal { hurst, scales } => NoiseSource::Fgn {
                generators: hurst
                    .iter()
                    .map(|&h| FgnGenerator::new(h, cfg.n))
                    .collect::<Result<_>>()?,
                scales: scales.clone(),
            },
            StationaryCovSeq::Explicit { .. } => NoiseSource::Dense(StationarySampler::new(cov, cfg.n)?),
        };
        Ok(PartialSumScheme {
            n: cfg.n,
            grid: grid.to_vec(),
            dn: cfg.normalization_matrix()?,
            noise,
        })
    }

    pub fn level(&self) -> usize {
        self.n
    }

    pub fn noise(&self, seed: u64, replicate: u64) -> Vec<Vec<f64>> {
        match &self.noise {
            NoiseSource::Fgn { generators, scales } => {
                let cols: Vec<Vec<f64>> = generators
                    .iter()
                    .zip(scales)
                    .enumerate()
                    .map(|(k, (g, &s))| {
                        let mut rng = StreamKey::new(seed, replicate, k as u32, StreamRole::Noise).rng();
                        g.sample(&mut rng).into_iter().map(|v| s * v).collect()
                    })
                    .collect();
                (0..self.n).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
            }
            NoiseSource::Dense(s) => {
                let mut rng = StreamKey::new(seed, replicate, 0, StreamRole::Noise).rng();
                s.sample(&mut rng)
            }
        }
    }

    pub fn sample(&self, seed: u64, replicate: u64) -> Result<GridPath> {
        let z = self.noise(seed, replicate);
        let mut path = partial_sum_path_with(&z, self.n, &self.dn, &self.grid)?;
        path.replicate_id = replicate;
        path.seed = seed;
        Ok(path)
    }

    pub fn sample_many(&self, seed: u64, count: usize) -> Result<Vec<GridPath>> {
        (0..count as u64)
            .into_par_iter()
            .map(|r| self.sample(seed, r))
            .collect()
    }
}

/// `‖r(0) + 2 Σ_{j=1}^{L} r(j)‖`, which tends to zero exactly when the
/// antipersistent zero-sum condition holds. For fGn components the sum
/// telescopes to `scale² ((L+1)^{2H} - L^{2H})`.
pub fn check_antipersistent_sum(cov: &StationaryCovSeq, horizon: usize) -> Result<f64> {
    let sum = match cov {
        StationaryCovSeq::FgnDiagonal { hurst, scales } => Operator::diag(
            &hurst
                .iter()
                .zip(scales)
                .map(|(&h, &s)| {
                    let p = 2.0 * h;
                    let l = horizon as f64;
                    if horizon == 0 {
                        return s * s;
                    }
                    // (L+1)^p - L^p without cancellation.
                    s * s * l.powf(p) * (p * (1.0 / l).ln_1p()).exp_m1()
                })
                .collect::<Vec<_>>(),
        ),
        StationaryCovSeq::Explicit { .. } => {
            let mut acc = cov.lag(0);
            for j in 1..=horizon {
                let r = cov.lag(j);
                acc.axpy(1.0, &r);
                acc.axpy(1.0, &r.transpose());
            }
            acc
        }
    };
    operator_norm(&sum)
}

/// `E_N = Σ_{i,j <= N} E[Z_i Z_jᵀ] = N r(0) + Σ_{j=1}^{N-1} (N-j)(r(j) + r(j)ᵀ)`.
pub fn en_asymptotics(cov: &StationaryCovSeq, n: usize) -> Result<Operator> {
    if n == 0 {
        return Err(OfbmError::invalid("N must be positive"));
    }
    let d = cov.dim();
    // Neumaier-compensated summation entrywise.
    let mut sum = vec![0.0; d * d];
    let mut comp = vec![0.0; d * d];
    let mut add = |k: usize, v: f64| {
        let t = sum[k] + v;
        if sum[k].abs() >= v.abs() {
            comp[k] += (sum[k] - t) + v;
        } else {
            comp[k] += (v - t) + sum[k];
        }
        sum[k] = t;
    };
    let r0 = cov.lag(0);
    for (k, v) in r0.as_slice().iter().enumerate() {
        add(k, n as f64 * v);
    }
    for j in 1..n {
        let r = cov.lag(j);
        let w = (n - j) as f64;
        for a in 0..d {
            for b in 0..d {
                add(a * d + b, w * (r.get(a, b) + r.get(b, a)));
            }
        }
    }
    Operator::new(d, sum.iter().zip(&comp).map(|(s, c)| s + c).collect())
}

/// Exact `E[Q_N(t) Q_N(s)]_{kk}` for fGn components under `d_N = N^{-D}`:
/// `½(a^{2H} + b^{2H} - |a-b|^{2H}) / N^{2H}` with `a = ⌊Nt⌋`, `b = ⌊Ns⌋`.
pub fn fgn_partial_sum_covariance(h: f64, scale: f64, n: usize, t: f64, s: f64) -> f64 {
    let p = 2.0 * h;
    let a = terms_at(n, t) as f64;
    let b = terms_at(n, s) as f64;
    let pw = |x: f64| if x == 0.0 { 0.0 } else { x.powf(p) };
    scale * scale * 0.5 * (pw(a) + pw(b) - pw((a - b).abs())) / (n as f64).powf(p)
}
