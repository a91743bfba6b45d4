//! OFBM parameterisation, spectral kernels and analytic covariances.
//!
//! The real spectral form writes the process as
//! `X(t) = ∫₀^∞ G1(x,t) W1(dx) + ∫₀^∞ G2(x,t) W2(dx)` with
//!
//! ```text
//! G1(x,t) = (sin tx / x) x^{-(D-I/2)} A1 + ((cos tx - 1)/x) x^{-(D-I/2)} A2
//! G2(x,t) = (sin tx / x) x^{-(D-I/2)} A2 + ((1 - cos tx)/x) x^{-(D-I/2)} A1
//! ```
//!
//! and the multiplicative constant of the representation fixed to one.
//! Multiplying out `G1(t)G1(s)ᵀ + G2(t)G2(s)ᵀ` gives
//! `x^{-(D+I/2)} [a Σ - b Q] x^{-(D+I/2)ᵀ}` with `Σ = A1A1ᵀ + A2A2ᵀ`,
//! `Q = A1A2ᵀ - A2A1ᵀ` and scalar trigonometric weights `a`, `b`; the
//! covariance integrals below are evaluated in that reduced form.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{OfbmError, Result};
use crate::linalg::{self, mat_power, solve_lyapunov, spectral_real_bounds, Operator};
use crate::quadrature::{gl16, PanelLayout, QuadratureConfig};

/// Full parameterisation of an OFBM: exponent `D` and spectral amplitude
/// `A = A1 + i A2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfbmSpec {
    pub exponent: Operator,
    pub a1: Operator,
    pub a2: Operator,
    #[serde(default)]
    pub label: String,
}

impl OfbmSpec {
    pub fn new(exponent: Operator, a1: Operator, a2: Operator, label: impl Into<String>) -> Result<Self> {
        let d = exponent.dim();
        if a1.dim() != d || a2.dim() != d {
            return Err(OfbmError::invalid(format!(
                "amplitudes must be {d}x{d} to match the exponent"
            )));
        }
        Ok(OfbmSpec {
            exponent,
            a1,
            a2,
            label: label.into(),
        })
    }

    /// `A = I`: the Mason–Xiao process.
    pub fn mason_xiao(exponent: Operator) -> Self {
        let d = exponent.dim();
        OfbmSpec {
            exponent,
            a1: Operator::identity(d),
            a2: Operator::zeros(d),
            label: "mason-xiao".into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.exponent.dim()
    }

    /// `Σ = A1A1ᵀ + A2A2ᵀ`.
    pub fn amplitude_gram(&self) -> Operator {
        &self.a1.matmul(&self.a1.transpose()) + &self.a2.matmul(&self.a2.transpose())
    }

    /// `Q = A1A2ᵀ - A2A1ᵀ`; zero exactly when the process is time reversible.
    pub fn amplitude_skew(&self) -> Operator {
        &self.a1.matmul(&self.a2.transpose()) - &self.a2.matmul(&self.a1.transpose())
    }

    pub(crate) fn half_minus_exponent(&self) -> Operator {
        let d = self.dim();
        &Operator::identity(d).scale(0.5) - &self.exponent
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kernel {
    G1,
    G2,
}

/// `x^{-(D - I/2)}`.
pub(crate) fn frequency_weight(x: f64, half_minus_d: &Operator) -> Result<Operator> {
    mat_power(x, half_minus_d)
}

/// Both kernels at once, sharing the matrix power.
pub(crate) fn kernel_pair_with(
    x: f64,
    t: f64,
    spec: &OfbmSpec,
    half_minus_d: &Operator,
) -> Result<(Operator, Operator)> {
    if !(x > 0.0) {
        return Err(OfbmError::domain(format!("kernel frequency must be positive, got {x}")));
    }
    let p = frequency_weight(x, half_minus_d)?;
    let sin_term = (t * x).sin() / x;
    // 1 - cos tx, computed without cancellation.
    let vers = 2.0 * (0.5 * t * x).sin().powi(2) / x;
    let pa1 = p.matmul(&spec.a1);
    let pa2 = p.matmul(&spec.a2);
    let mut g1 = pa1.scale(sin_term);
    g1.axpy(-vers, &pa2);
    let mut g2 = pa2.scale(sin_term);
    g2.axpy(vers, &pa1);
    Ok((g1, g2))
}

pub fn kernel_g1(x: f64, t: f64, spec: &OfbmSpec) -> Result<Operator> {
    kernel_pair_with(x, t, spec, &spec.half_minus_exponent()).map(|k| k.0)
}

pub fn kernel_g2(x: f64, t: f64, spec: &OfbmSpec) -> Result<Operator> {
    kernel_pair_with(x, t, spec, &spec.half_minus_exponent()).map(|k| k.1)
}

pub fn kernel(which: Kernel, x: f64, t: f64, spec: &OfbmSpec) -> Result<Operator> {
    match which {
        Kernel::G1 => kernel_g1(x, t, spec),
        Kernel::G2 => kernel_g2(x, t, spec),
    }
}

/// What to do with the frequency axis beyond `x_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tail {
    /// Add the closed-form non-oscillatory tail plus the leading
    /// oscillatory correction: approximates the integral over all of ℝ₊.
    Analytic,
    /// Stop at `x_max`; matches processes simulated on a truncated axis.
    Truncated,
}

/// Reduced-form integrand weights at frequency `x` for the pair `(t, s)`.
#[inline]
fn trig_weights(x: f64, t: f64, s: f64) -> (f64, f64) {
    let d = t - s;
    let h = |u: f64| 2.0 * (0.5 * u * x).sin().powi(2);
    let a = (h(t) + h(s)) - h(d);
    let b = ((t * x).sin() - (s * x).sin()) - (d * x).sin();
    (a, b)
}

/// Quadrature engine for covariance integrals of the form
/// `∫ x^{-(D+I/2)} [a(x) Σ - b(x) Q] x^{-(D+I/2)ᵀ} dx`.
pub(crate) struct SpectralIntegral<'a> {
    pub exponent: &'a Operator,
    pub gram: Operator,
    pub skew: Operator,
    pub cfg: &'a QuadratureConfig,
}

const MAX_REFINEMENT: u32 = 4;

impl SpectralIntegral<'_> {
    /// Evaluates the covariance at every `(t, s)` pair with shared nodes.
    pub fn pairs(&self, pairs: &[(f64, f64)], tail: Tail) -> Result<Vec<Operator>> {
        self.cfg.validate()?;
        let d = self.exponent.dim();
        let bounds = spectral_real_bounds(self.exponent)?;
        if !(bounds.lambda_min > 0.0 && bounds.lambda_max < 1.0) {
            return Err(OfbmError::InvalidModel(format!(
                "exponent eigenvalue real parts must lie in (0, 1), got [{}, {}]",
                bounds.lambda_min, bounds.lambda_max
            )));
        }

        // Canonical order t <= s; the swapped pair is the transpose.
        let mut work: Vec<(f64, f64)> = Vec::new();
        let mut index = Vec::with_capacity(pairs.len());
        for &(t, s) in pairs {
            if !t.is_finite() || !s.is_finite() {
                return Err(OfbmError::invalid("covariance times must be finite"));
            }
            if t == 0.0 || s == 0.0 {
                index.push(None);
                continue;
            }
            let (lo, hi, swapped) = if t <= s { (t, s, false) } else { (s, t, true) };
            let k = match work.iter().position(|&p| p == (lo, hi)) {
                Some(k) => k,
                None => {
                    work.push((lo, hi));
                    work.len() - 1
                }
            };
            index.push(Some((k, swapped)));
        }

        let mut values = vec![Operator::zeros(d); work.len()];
        if !work.is_empty() {
            let omega = work.iter().fold(1.0f64, |m, &(t, s)| m.max(t.abs()).max(s.abs()));
            let layout = PanelLayout::from_config(PI / omega, self.cfg);
            let has_skew = !self.skew.is_zero();

            let mut prev = self.panel_sums(&layout.refined(0), &work, has_skew)?;
            let mut level = 1;
            loop {
                let cur = self.panel_sums(&layout.refined(level), &work, has_skew)?;
                let scale = cur.iter().fold(0.0f64, |m, v| m.max(v.max_abs()));
                let diff = cur.iter().zip(&prev).fold(0.0f64, |m, (a, b)| m.max((a - b).max_abs()));
                let err = if scale > 0.0 { diff / scale } else { diff };
                if err <= self.cfg.rel_tol {
                    values = cur;
                    break;
                }
                if level == MAX_REFINEMENT {
                    return Err(OfbmError::numerical(
                        "spectral covariance quadrature did not converge",
                        err,
                    ));
                }
                prev = cur;
                level += 1;
            }

            let head = self.head_term(layout.head)?;
            let tail_parts = match tail {
                Tail::Analytic => Some(self.tail_terms(layout.end())?),
                Tail::Truncated => None,
            };
            for (v, &(t, s)) in values.iter_mut().zip(&work) {
                v.axpy(t * s, &head);
                if let Some((ref ytail, ref f, ref g)) = tail_parts {
                    let x = layout.end();
                    let dd = t - s;
                    let c0 = if dd == 0.0 { 2.0 } else { 1.0 };
                    let mut osc_a = (t * x).sin() / t + (s * x).sin() / s;
                    let mut osc_b = (t * x).cos() / t - (s * x).cos() / s;
                    if dd != 0.0 {
                        osc_a -= (dd * x).sin() / dd;
                        osc_b -= (dd * x).cos() / dd;
                    }
                    v.axpy(c0, ytail);
                    v.axpy(osc_a, f);
                    if has_skew {
                        v.axpy(-osc_b, g);
                    }
                }
                if t == s {
                    *v = v.symmetrized();
                }
            }
        }

        Ok(index
            .into_iter()
            .map(|slot| match slot {
                None => Operator::zeros(d),
                Some((k, false)) => values[k].clone(),
                Some((k, true)) => values[k].transpose(),
            })
            .collect())
    }

    fn panel_sums(&self, layout: &PanelLayout, work: &[(f64, f64)], has_skew: bool) -> Result<Vec<Operator>> {
        let d = self.exponent.dim();
        let shift = &self.exponent.scale(-1.0) - &Operator::identity(d).scale(0.5);
        let mut acc = vec![Operator::zeros(d); work.len()];
        let rule = gl16();
        for &(a, b) in &layout.panels {
            for (x, w) in rule.on(a, b) {
                // x^{-(D + I/2)}
                let wx = mat_power(x, &shift)?;
                let sx = wx.congruence(&self.gram);
                let qx = if has_skew {
                    Some(wx.congruence(&self.skew))
                } else {
                    None
                };
                for (out, &(t, s)) in acc.iter_mut().zip(work) {
                    let (ca, cb) = trig_weights(x, t, s);
                    out.axpy(w * ca, &sx);
                    if let Some(ref q) = qx {
                        out.axpy(-w * cb, q);
                    }
                }
            }
        }
        Ok(acc)
    }

    /// `∫₀^ε x·x^{-D} Σ x^{-Dᵀ} dx`; multiply by `ts` for the pair.
    fn head_term(&self, eps: f64) -> Result<Operator> {
        let d = self.exponent.dim();
        let e = &Operator::identity(d) - self.exponent;
        let rhs = mat_power(eps, &e)?.congruence(&self.gram);
        solve_lyapunov(&e, &rhs)
    }

    /// Closed-form tail pieces at `X`: the Lyapunov solution for
    /// `∫_X^∞ x^{-1} x^{-D} Σ x^{-Dᵀ} dx`, and the integrand factors
    /// `X^{-(D+I/2)} Σ X^{-(D+I/2)ᵀ}`, `X^{-(D+I/2)} Q X^{-(D+I/2)ᵀ}`.
    fn tail_terms(&self, x: f64) -> Result<(Operator, Operator, Operator)> {
        let d = self.exponent.dim();
        let xd = mat_power(x, &self.exponent.scale(-1.0))?;
        let y = solve_lyapunov(self.exponent, &xd.congruence(&self.gram))?;
        let shift = &self.exponent.scale(-1.0) - &Operator::identity(d).scale(0.5);
        let wx = mat_power(x, &shift)?;
        Ok((y, wx.congruence(&self.gram), wx.congruence(&self.skew)))
    }
}

/// `R(t,s) = ∫₀^∞ [G1(x,t)G1(x,s)ᵀ + G2(x,t)G2(x,s)ᵀ] dx`.
pub fn spectral_covariance(t: f64, s: f64, spec: &OfbmSpec, q: &QuadratureConfig) -> Result<Operator> {
    spectral_covariance_pairs(&[(t, s)], spec, q, Tail::Analytic).map(|mut v| v.remove(0))
}

/// Batch form of [`spectral_covariance`] sharing quadrature nodes.
pub fn spectral_covariance_pairs(
    pairs: &[(f64, f64)],
    spec: &OfbmSpec,
    q: &QuadratureConfig,
    tail: Tail,
) -> Result<Vec<Operator>> {
    SpectralIntegral {
        exponent: &spec.exponent,
        gram: spec.amplitude_gram(),
        skew: spec.amplitude_skew(),
        cfg: q,
    }
    .pairs(pairs, tail)
}

/// Spectral covariance tabulated on every pair of a time grid.
pub fn spectral_covariance_grid(
    grid: &[f64],
    spec: &OfbmSpec,
    q: &QuadratureConfig,
    tail: Tail,
) -> Result<TabulatedCovariance> {
    let pairs: Vec<(f64, f64)> = grid.iter().flat_map(|&t| grid.iter().map(move |&s| (t, s))).collect();
    let values = spectral_covariance_pairs(&pairs, spec, q, tail)?;
    TabulatedCovariance::new(grid.to_vec(), values)
}

/// `Γ̃ = E[Y(1)Y(1)ᵀ]` for the Mason–Xiao process:
/// `∫₀^∞ [(1 - cos x)² + sin² x] x^{-(D+I/2)} x^{-(D+I/2)ᵀ} dx`.
pub fn gamma_mason_xiao(exponent: &Operator, q: &QuadratureConfig) -> Result<Operator> {
    let d = exponent.dim();
    let v = SpectralIntegral {
        exponent,
        gram: Operator::identity(d),
        skew: Operator::zeros(d),
        cfg: q,
    }
    .pairs(&[(1.0, 1.0)], Tail::Analytic)?;
    Ok(v[0].symmetrized())
}

/// `∫_lo^hi ‖G_i(x,t)‖_F² dx` on graded panels (Frobenius norm).
pub fn kernel_square_integral(
    which: Kernel,
    t: f64,
    spec: &OfbmSpec,
    lo: f64,
    hi: f64,
    q: &QuadratureConfig,
    refinement: u32,
) -> Result<f64> {
    if !(0.0 <= lo && lo < hi) {
        return Err(OfbmError::invalid("integration bounds must satisfy 0 <= lo < hi"));
    }
    let width = PI / t.abs().max(1.0);
    let hm = spec.half_minus_exponent();
    let layout = if lo == 0.0 {
        PanelLayout::new(width, hi, q.panels_near_zero, q.grading_ratio)
    } else {
        let n = ((hi - lo) / width).ceil().max(1.0) as usize;
        let h = (hi - lo) / n as f64;
        PanelLayout {
            head: lo,
            panels: (0..n)
                .map(|k| (lo + k as f64 * h, if k + 1 == n { hi } else { lo + (k + 1) as f64 * h }))
                .collect(),
        }
    };
    let rule = gl16();
    let mut total = 0.0;
    for &(a, b) in &layout.refined(refinement).panels {
        for (x, w) in rule.on(a, b) {
            let (g1, g2) = kernel_pair_with(x, t, spec, &hm)?;
            let g = if which == Kernel::G1 { g1 } else { g2 };
            total += w * g.as_slice().iter().map(|v| v * v).sum::<f64>();
        }
    }
    Ok(total)
}

/// `|τ|^D Γ |τ|^{Dᵀ}`, with the `τ = 0` term defined as zero.
fn scaled_gamma(tau: f64, exponent: &Operator, gamma: &Operator) -> Result<Operator> {
    if tau == 0.0 {
        return Ok(Operator::zeros(gamma.dim()));
    }
    Ok(mat_power(tau.abs(), exponent)?.congruence(gamma))
}

/// Closed covariance of a time-reversible OFBM:
/// `½[|t|^D Γ |t|^{Dᵀ} + |s|^D Γ |s|^{Dᵀ} - |t-s|^D Γ |t-s|^{Dᵀ}]`.
pub fn reversible_covariance(t: f64, s: f64, exponent: &Operator, gamma: &Operator) -> Result<Operator> {
    if exponent.dim() != gamma.dim() {
        return Err(OfbmError::invalid("exponent and Γ dimensions differ"));
    }
    if !t.is_finite() || !s.is_finite() {
        return Err(OfbmError::invalid("covariance times must be finite"));
    }
    if t == 0.0 || s == 0.0 {
        return Ok(Operator::zeros(gamma.dim()));
    }
    let gt = scaled_gamma(t, exponent, gamma)?;
    if t == s {
        return Ok(gt.symmetrized());
    }
    let gs = scaled_gamma(s, exponent, gamma)?;
    let gd = scaled_gamma(t - s, exponent, gamma)?;
    Ok((&(&gt + &gs) - &gd).scale(0.5))
}

/// `‖A2 A1ᵀ - A1 A2ᵀ‖ <= tol` (operator norm).
pub fn is_time_reversible_params(spec: &OfbmSpec, tol: f64) -> bool {
    let skew = spec.amplitude_skew();
    match linalg::operator_norm(&skew) {
        Ok(n) => n <= tol,
        Err(_) => false,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ValidationCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(ValidationCheck {
            name: name.into(),
            passed,
            detail,
        });
    }
}

/// Checks finiteness, the eigenvalue window `0 < λ_D <= Λ_D < 1`, and
/// properness via positive definiteness of `R(1,1)`.
pub fn validate_spec(spec: &OfbmSpec, q: &QuadratureConfig) -> ValidationReport {
    let mut report = ValidationReport {
        checks: Vec::new(),
        lambda_min: None,
        lambda_max: None,
    };
    let finite = spec.exponent.is_finite() && spec.a1.is_finite() && spec.a2.is_finite();
    report.push(
        "finite",
        finite,
        if finite {
            "all entries finite".into()
        } else {
            "non-finite entries".into()
        },
    );

    let bounds_ok = match spectral_real_bounds(&spec.exponent) {
        Ok(b) => {
            report.lambda_min = Some(b.lambda_min);
            report.lambda_max = Some(b.lambda_max);
            let ok = b.lambda_min > 0.0 && b.lambda_max < 1.0;
            let detail = if ok {
                format!("0 < {:.6} <= {:.6} < 1", b.lambda_min, b.lambda_max)
            } else if b.lambda_max >= 1.0 {
                format!("Λ_D = {:.6} >= 1", b.lambda_max)
            } else {
                format!("λ_D = {:.6} <= 0", b.lambda_min)
            };
            report.push("eigenvalue_bounds", ok, detail);
            ok
        }
        Err(e) => {
            report.push("eigenvalue_bounds", false, e.to_string());
            false
        }
    };

    if !(finite && bounds_ok) {
        report.push(
            "proper",
            false,
            "skipped: exponent outside the admissible window".into(),
        );
        return report;
    }
    match spectral_covariance(1.0, 1.0, spec, q) {
        Ok(r11) => {
            let (ok, detail) = properness(&r11);
            report.push("proper", ok, detail);
        }
        Err(e) => report.push("proper", false, e.to_string()),
    }
    report
}

/// Smallest Cholesky pivot of `R(1,1)` must exceed `1e-10 · trace / d`.
fn properness(r11: &Operator) -> (bool, String) {
    let d = r11.dim();
    let threshold = 1e-10 * r11.trace() / d as f64;
    if !(threshold > 0.0) {
        return (false, "R(1,1) has zero trace".into());
    }
    match linalg::cholesky_psd(r11, 0.0) {
        Ok(f) => {
            let min_pivot = f.lower.diagonal().iter().map(|l| l * l).fold(f64::INFINITY, f64::min);
            (
                min_pivot > threshold,
                format!("smallest pivot {min_pivot:.3e}, threshold {threshold:.3e}"),
            )
        }
        Err(e) => (false, e.to_string()),
    }
}

/// Where a covariance function comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovSource {
    Analytic,
    Empirical,
}

/// Matrix-valued covariance rule `(t, s) ↦ E[X(t) X(s)ᵀ]`.
pub trait CovMatrixFn: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, s: f64) -> Result<Operator>;
    fn source(&self) -> CovSource {
        CovSource::Analytic
    }
}

/// Closed covariance of a time-reversible OFBM with parameters `(D, Γ)`.
#[derive(Clone, Debug)]
pub struct ReversibleCovariance {
    pub exponent: Operator,
    pub gamma: Operator,
}

impl CovMatrixFn for ReversibleCovariance {
    fn dim(&self) -> usize {
        self.exponent.dim()
    }

    fn eval(&self, t: f64, s: f64) -> Result<Operator> {
        reversible_covariance(t, s, &self.exponent, &self.gamma)
    }
}

/// Covariance known only on the pairs of a fixed grid.
#[derive(Clone, Debug)]
pub struct TabulatedCovariance {
    grid: Vec<f64>,
    values: Vec<Operator>,
    source: CovSource,
}

impl TabulatedCovariance {
    /// `values` is row-major over grid pairs: `values[i * m + j] = R(t_i, t_j)`.
    pub fn new(grid: Vec<f64>, values: Vec<Operator>) -> Result<Self> {
        let m = grid.len();
        if values.len() != m * m {
            return Err(OfbmError::invalid(
                "tabulated covariance needs one matrix per grid pair",
            ));
        }
        Ok(TabulatedCovariance {
            grid,
            values,
            source: CovSource::Analytic,
        })
    }

    pub fn with_source(mut self, source: CovSource) -> Self {
        self.source = source;
        self
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn at(&self, i: usize, j: usize) -> &Operator {
        &self.values[i * self.grid.len() + j]
    }

    pub fn values(&self) -> &[Operator] {
        &self.values
    }

    fn index_of(&self, t: f64) -> Option<usize> {
        self.grid.iter().position(|&g| g == t)
    }
}

impl CovMatrixFn for TabulatedCovariance {
    fn dim(&self) -> usize {
        self.values.first().map(|v| v.dim()).unwrap_or(1)
    }

    fn eval(&self, t: f64, s: f64) -> Result<Operator> {
        match (self.index_of(t), self.index_of(s)) {
            (Some(i), Some(j)) => Ok(self.at(i, j).clone()),
            _ => Err(OfbmError::invalid(format!("({t}, {s}) is not on the tabulated grid"))),
        }
    }

    fn source(&self) -> CovSource {
        self.source
    }
}

/// Independent fBm components: `diag(scale_k² · ½(t^{2H_k} + s^{2H_k} - |t-s|^{2H_k}))`.
#[derive(Clone, Debug)]
pub struct DiagonalFbmCovariance {
    pub hurst: Vec<f64>,
    pub scales: Vec<f64>,
}

pub fn fbm_covariance(h: f64, t: f64, s: f64) -> f64 {
    let p = 2.0 * h;
    0.5 * (t.abs().powf(p) + s.abs().powf(p) - (t - s).abs().powf(p))
}

impl CovMatrixFn for DiagonalFbmCovariance {
    fn dim(&self) -> usize {
        self.hurst.len()
    }

    fn eval(&self, t: f64, s: f64) -> Result<Operator> {
        Ok(Operator::diag(
            &self
                .hurst
                .iter()
                .zip(&self.scales)
                .map(|(&h, &c)| c * c * fbm_covariance(h, t, s))
                .collect::<Vec<_>>(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_spec(h: f64, a1: f64, a2: f64) -> OfbmSpec {
        OfbmSpec::new(
            Operator::diag(&[h]),
            Operator::diag(&[a1]),
            Operator::diag(&[a2]),
            "scalar",
        )
        .unwrap()
    }

    #[test]
    fn kernels_vanish_at_time_zero() {
        let spec = scalar_spec(0.7, 1.0, 0.4);
        assert!(kernel_g1(2.0, 0.0, &spec).unwrap().is_zero());
        assert!(kernel_g2(2.0, 0.0, &spec).unwrap().is_zero());
    }

    #[test]
    fn kernel_scalar_values() {
        let g = kernel_g1(PI, 1.0, &scalar_spec(0.5, 1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(g.get(0, 0), 0.0, epsilon = 1e-15);
        let g = kernel_g1(PI, 1.0, &scalar_spec(0.5, 0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(g.get(0, 0), -2.0 / PI, epsilon = 1e-15);
        let g = kernel_g2(PI, 1.0, &scalar_spec(0.5, 1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(g.get(0, 0), 2.0 / PI, epsilon = 1e-15);
    }

    #[test]
    fn kernel_swap_symmetry() {
        let d = Operator::from_rows(&[vec![0.6, 0.1], vec![-0.2, 0.7]]).unwrap();
        let s01 = OfbmSpec::new(d.clone(), Operator::zeros(2), Operator::identity(2), "").unwrap();
        let s10 = OfbmSpec::new(d, Operator::identity(2), Operator::zeros(2), "").unwrap();
        for &(x, t) in &[(0.3, 0.5), (2.0, 1.0), (17.0, 0.25)] {
            let a = kernel_g2(x, t, &s01).unwrap();
            let b = kernel_g1(x, t, &s10).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn kernel_rejects_nonpositive_frequency() {
        let spec = scalar_spec(0.5, 1.0, 0.0);
        assert!(matches!(kernel_g1(0.0, 1.0, &spec), Err(OfbmError::Domain(_))));
        assert!(matches!(kernel_g2(-1.0, 1.0, &spec), Err(OfbmError::Domain(_))));
    }

    #[test]
    fn reduced_integrand_matches_kernel_products() {
        let d = Operator::from_rows(&[vec![0.6, 0.1], vec![-0.2, 0.7]]).unwrap();
        let a1 = Operator::from_rows(&[vec![1.0, 0.3], vec![0.0, 0.8]]).unwrap();
        let a2 = Operator::from_rows(&[vec![0.2, 0.0], vec![0.5, -0.4]]).unwrap();
        let spec = OfbmSpec::new(d.clone(), a1, a2, "").unwrap();
        let shift = &d.scale(-1.0) - &Operator::identity(2).scale(0.5);
        for &(x, t, s) in &[(0.7, 0.3, 0.9), (5.0, 1.0, 0.25), (0.01, 0.5, 0.5)] {
            let (g1t, g2t) = kernel_pair_with(x, t, &spec, &spec.half_minus_exponent()).unwrap();
            let (g1s, g2s) = kernel_pair_with(x, s, &spec, &spec.half_minus_exponent()).unwrap();
            let direct = &g1t.matmul(&g1s.transpose()) + &g2t.matmul(&g2s.transpose());
            let w = mat_power(x, &shift).unwrap();
            let (a, b) = trig_weights(x, t, s);
            let mut reduced = w.congruence(&spec.amplitude_gram()).scale(a);
            reduced.axpy(-b, &w.congruence(&spec.amplitude_skew()));
            assert!((&direct - &reduced).max_abs() < 1e-12 * direct.max_abs().max(1.0));
        }
    }

    #[test]
    fn gamma_scalar_brownian_is_pi() {
        let g = gamma_mason_xiao(&Operator::diag(&[0.5]), &QuadratureConfig::default()).unwrap();
        assert_abs_diff_eq!(g.get(0, 0), PI, epsilon = 1e-7);
    }

    #[test]
    fn gamma_diagonal_has_no_cross_terms() {
        let g = gamma_mason_xiao(&Operator::diag(&[0.7, 0.6]), &QuadratureConfig::default()).unwrap();
        assert!(g.get(0, 1).abs() <= 1e-10);
        assert_eq!(g.get(0, 1), g.get(1, 0));
        assert!(g.get(0, 0) > 0.0 && g.get(1, 1) > 0.0);
    }

    #[test]
    fn spectral_scalar_matches_pi_and_vanishes_at_zero() {
        let spec = scalar_spec(0.5, 1.0, 0.0);
        let q = QuadratureConfig::default();
        assert_abs_diff_eq!(
            spectral_covariance(1.0, 1.0, &spec, &q).unwrap().get(0, 0),
            PI,
            epsilon = 1e-7
        );
        assert!(spectral_covariance(0.0, 0.7, &spec, &q).unwrap().is_zero());
        assert!(spectral_covariance(0.3, 0.0, &spec, &q).unwrap().is_zero());
    }

    #[test]
    fn spectral_fbm_shape() {
        let q = QuadratureConfig::default();
        let spec = scalar_spec(0.7, 1.0, 0.0);
        let v = spectral_covariance_pairs(&[(0.75, 0.5), (1.0, 1.0)], &spec, &q, Tail::Analytic).unwrap();
        let ratio = v[0].get(0, 0) / v[1].get(0, 0);
        assert_abs_diff_eq!(ratio, fbm_covariance(0.7, 0.75, 0.5), epsilon = 1e-6);
    }

    #[test]
    fn spectral_swap_is_exact_transpose() {
        let d = Operator::from_rows(&[vec![0.6, 0.1], vec![-0.2, 0.7]]).unwrap();
        let a1 = Operator::from_rows(&[vec![1.0, 0.3], vec![0.0, 0.8]]).unwrap();
        let a2 = Operator::from_rows(&[vec![0.2, 0.0], vec![0.5, -0.4]]).unwrap();
        let spec = OfbmSpec::new(d, a1, a2, "").unwrap();
        let q = QuadratureConfig::default().with_x_max(200.0);
        let v = spectral_covariance_pairs(&[(0.3, 0.8), (0.8, 0.3)], &spec, &q, Tail::Analytic).unwrap();
        assert_eq!(v[0], v[1].transpose());
        // Non-reversible amplitudes give a non-symmetric cross covariance.
        assert!((v[0].get(0, 1) - v[0].get(1, 0)).abs() > 1e-6);
    }

    #[test]
    fn reversible_examples() {
        let d = Operator::diag(&[0.7, 0.6]);
        let g = Operator::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        assert!(reversible_covariance(0.4, 0.0, &d, &g).unwrap().is_zero());
        let r11 = reversible_covariance(1.0, 1.0, &d, &g).unwrap();
        assert!((&r11 - &g).max_abs() < 1e-15);
        let r = reversible_covariance(0.3, 0.8, &Operator::diag(&[0.5]), &Operator::identity(1)).unwrap();
        assert_abs_diff_eq!(r.get(0, 0), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn time_reversibility_flags() {
        let d = Operator::diag(&[0.6, 0.7]);
        let i2 = Operator::identity(2);
        let z2 = Operator::zeros(2);
        assert!(is_time_reversible_params(
            &OfbmSpec::new(d.clone(), i2.clone(), z2, "").unwrap(),
            1e-12
        ));
        assert!(is_time_reversible_params(
            &OfbmSpec::new(d.clone(), i2.clone(), i2.clone(), "").unwrap(),
            1e-12
        ));
        let n = Operator::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(!is_time_reversible_params(&OfbmSpec::new(d, i2, n, "").unwrap(), 1e-12));
    }

    #[test]
    fn validation_examples() {
        let q = QuadratureConfig::default().with_x_max(1e3);
        let good = OfbmSpec::mason_xiao(Operator::diag(&[0.7, 0.6]));
        assert!(validate_spec(&good, &q).passed());

        let bad = OfbmSpec::mason_xiao(Operator::diag(&[1.2, 0.5]));
        let r = validate_spec(&bad, &q);
        assert!(!r.passed());
        assert!(r
            .failures()
            .any(|c| c.name == "eigenvalue_bounds" && c.detail.contains(">= 1")));

        let zero = OfbmSpec::new(Operator::diag(&[0.7, 0.6]), Operator::zeros(2), Operator::zeros(2), "").unwrap();
        let r = validate_spec(&zero, &q);
        assert!(r.failures().any(|c| c.name == "proper"));
        assert!(r.checks.iter().any(|c| c.name == "eigenvalue_bounds" && c.passed));
    }

    #[test]
    fn tabulated_lookup() {
        let tab = TabulatedCovariance::new(
            vec![0.0, 1.0],
            vec![
                Operator::zeros(1),
                Operator::zeros(1),
                Operator::zeros(1),
                Operator::identity(1),
            ],
        )
        .unwrap();
        assert_eq!(tab.eval(1.0, 1.0).unwrap(), Operator::identity(1));
        assert!(tab.eval(0.5, 1.0).is_err());
    }
}
