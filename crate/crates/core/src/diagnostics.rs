//! Empirical verification: covariance estimation, distances to analytic
//! targets, structural checks and convergence studies across levels.

use serde::{Deserialize, Serialize};

use crate::error::{OfbmError, Result};
use crate::exact::{ExactSampler, GridPath};
use crate::linalg::{mat_power, Operator};
use crate::model::{spectral_covariance_grid, CovMatrixFn, DiagonalFbmCovariance, OfbmSpec, Tail};
use crate::partial_sums::{
    fgn_partial_sum_covariance, Normalization, PartialSumConfig, PartialSumScheme, StationaryCovSeq,
};
use crate::quadrature::QuadratureConfig;
use crate::rng::derive_seed;
use crate::telegraph::{finite_n_covariance_grid, TelegraphScheme};

/// Floor applied to standard errors before forming z-scores.
pub const SE_FLOOR: f64 = 1e-12;
/// Default z-score threshold.
pub const DEFAULT_Z_THRESHOLD: f64 = 5.0;

/// Grid-pair cross moments `E[X(t_i) X(t_j)ᵀ]` with elementwise standard
/// errors. Pairs are stored row-major: index `i * m + j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCov {
    pub grid: Vec<f64>,
    pub dim: usize,
    pub replicates: usize,
    pub mean: Vec<Operator>,
    pub se: Vec<Operator>,
    /// Standard error of `X_k(t)X_l(s) - X_l(t)X_k(s)`, the per-replicate
    /// antisymmetric part.
    pub antisym_se: Vec<Operator>,
}

impl EmpiricalCov {
    pub fn at(&self, i: usize, j: usize) -> &Operator {
        &self.mean[i * self.grid.len() + j]
    }

    pub fn se_at(&self, i: usize, j: usize) -> &Operator {
        &self.se[i * self.grid.len() + j]
    }

    /// Tabulated view usable as a [`CovMatrixFn`].
    pub fn as_table(&self) -> crate::model::TabulatedCovariance {
        crate::model::TabulatedCovariance::new(self.grid.clone(), self.mean.clone())
            .expect("pair count matches grid")
            .with_source(crate::model::CovSource::Empirical)
    }
}

fn check_paths(paths: &[GridPath]) -> Result<(usize, usize)> {
    if paths.len() < 2 {
        return Err(OfbmError::invalid("at least two replicates are required"));
    }
    let grid = &paths[0].grid;
    let d = paths[0].dim();
    if d == 0 {
        return Err(OfbmError::invalid("paths carry no values"));
    }
    for p in paths {
        if p.grid != *grid {
            return Err(OfbmError::invalid("paths are not on a common grid"));
        }
        if p.values.len() != grid.len() || p.values.iter().any(|v| v.len() != d) {
            return Err(OfbmError::invalid("path values do not match the grid"));
        }
    }
    Ok((grid.len(), d))
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone, m: f64) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / m;
    let ss: f64 = values.map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (m - 1.0)).sqrt() / m.sqrt())
}

/// Mean of outer products (no centering) with elementwise standard errors.
pub fn empirical_covariance(paths: &[GridPath]) -> Result<EmpiricalCov> {
    let (m, d) = check_paths(paths)?;
    let reps = paths.len() as f64;
    let mut mean = Vec::with_capacity(m * m);
    let mut se = Vec::with_capacity(m * m);
    let mut antisym = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let mut mu = Operator::zeros(d);
            let mut s = Operator::zeros(d);
            let mut a = Operator::zeros(d);
            for k in 0..d {
                for l in 0..d {
                    let prod = paths.iter().map(|p| p.values[i][k] * p.values[j][l]);
                    let (mk, sk) = mean_and_se(prod, reps);
                    mu.set(k, l, mk);
                    s.set(k, l, sk);
                    let diff = paths
                        .iter()
                        .map(|p| p.values[i][k] * p.values[j][l] - p.values[i][l] * p.values[j][k]);
                    a.set(k, l, mean_and_se(diff, reps).1);
                }
            }
            mean.push(mu);
            se.push(s);
            antisym.push(a);
        }
    }
    Ok(EmpiricalCov {
        grid: paths[0].grid.clone(),
        dim: d,
        replicates: paths.len(),
        mean,
        se,
        antisym_se: antisym,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    pub max_abs_err: f64,
    pub max_se: f64,
    pub max_z: f64,
}

/// Entrywise distance between an estimate and tabulated target values.
pub fn distance_to_values(emp: &EmpiricalCov, target: &[Operator]) -> Result<Distance> {
    if target.len() != emp.mean.len() {
        return Err(OfbmError::invalid("target does not cover the grid pairs"));
    }
    let mut out = Distance {
        max_abs_err: 0.0,
        max_se: 0.0,
        max_z: 0.0,
    };
    for ((mu, se), tv) in emp.mean.iter().zip(&emp.se).zip(target) {
        if tv.dim() != emp.dim {
            return Err(OfbmError::invalid("target dimension differs from the estimate"));
        }
        for ((&a, &s), &b) in mu.as_slice().iter().zip(se.as_slice()).zip(tv.as_slice()) {
            let err = (a - b).abs();
            out.max_abs_err = out.max_abs_err.max(err);
            out.max_se = out.max_se.max(s);
            out.max_z = out.max_z.max(err / s.max(SE_FLOOR));
        }
    }
    Ok(out)
}

fn evaluate_on_grid(grid: &[f64], target: &dyn CovMatrixFn) -> Result<Vec<Operator>> {
    let mut out = Vec::with_capacity(grid.len() * grid.len());
    for &t in grid {
        for &s in grid {
            out.push(target.eval(t, s)?);
        }
    }
    Ok(out)
}

/// `(max_abs_err, max_z)` over grid pairs and entries (SE floored at 1e-12).
pub fn covariance_distance(emp: &EmpiricalCov, target: &dyn CovMatrixFn) -> Result<Distance> {
    distance_to_values(emp, &evaluate_on_grid(&emp.grid, target)?)
}

/// Max z between two independent estimates on the same grid.
pub fn two_sample_z(a: &EmpiricalCov, b: &EmpiricalCov) -> Result<f64> {
    if a.mean.len() != b.mean.len() || a.dim != b.dim {
        return Err(OfbmError::invalid("estimates have different shapes"));
    }
    let mut z = 0.0f64;
    for p in 0..a.mean.len() {
        let (ma, mb) = (a.mean[p].as_slice(), b.mean[p].as_slice());
        let (sa, sb) = (a.se[p].as_slice(), b.se[p].as_slice());
        for e in 0..ma.len() {
            let s = (sa[e] * sa[e] + sb[e] * sb[e]).sqrt().max(SE_FLOOR);
            z = z.max((ma[e] - mb[e]).abs() / s);
        }
    }
    Ok(z)
}

/// Compares the covariance of `c^{-D} X(c t)` (paths sampled on `c · grid`)
/// with an independent reference estimate of `X(t)` on `grid`.
pub fn self_similarity_check(
    scaled_paths: &[GridPath],
    c: f64,
    exponent: &Operator,
    reference: &EmpiricalCov,
) -> Result<f64> {
    if !(c > 0.0) {
        return Err(OfbmError::domain(format!("scaling factor must be positive, got {c}")));
    }
    let (m, _) = check_paths(scaled_paths)?;
    if m != reference.grid.len()
        || scaled_paths[0]
            .grid
            .iter()
            .zip(&reference.grid)
            .any(|(&u, &t)| (u - c * t).abs() > 1e-12 * (1.0 + u.abs()))
    {
        return Err(OfbmError::invalid("scaled grid is not c times the reference grid"));
    }
    let m_inv = mat_power(c, &exponent.scale(-1.0))?;
    let mut transformed: Vec<GridPath> = scaled_paths.iter().map(|p| p.transformed(&m_inv)).collect();
    for p in &mut transformed {
        p.grid = reference.grid.clone();
    }
    two_sample_z(&empirical_covariance(&transformed)?, reference)
}

/// Least-squares slope of `log E‖X(t+h) - X(t)‖^m` against `log h` over
/// dyadic lags `h = 2^k Δ` on a uniform grid with spacing `Δ`.
pub fn holder_moment_slope(paths: &[GridPath], moment_order: u32) -> Result<f64> {
    if !(moment_order == 2 || moment_order == 4) {
        return Err(OfbmError::invalid("moment order must be 2 or 4"));
    }
    if paths.is_empty() {
        return Err(OfbmError::invalid("no paths"));
    }
    let grid = &paths[0].grid;
    let m = grid.len();
    if m < 2 {
        return Err(OfbmError::invalid("grid too short"));
    }
    let delta = grid[1] - grid[0];
    if grid
        .windows(2)
        .any(|w| ((w[1] - w[0]) - delta).abs() > 1e-9 * delta.abs().max(1e-300))
    {
        return Err(OfbmError::invalid("moment scaling needs a uniform grid"));
    }
    let mut lags = Vec::new();
    let mut k = 1;
    while k <= (m - 1) / 2 {
        lags.push(k);
        k *= 2;
    }
    if lags.len() < 3 {
        return Err(OfbmError::invalid(format!(
            "need at least 3 dyadic lags, grid gives {}",
            lags.len()
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &lag in &lags {
        let mut total = 0.0;
        let mut count = 0usize;
        for p in paths {
            for i in 0..m - lag {
                let sq: f64 = p.values[i + lag]
                    .iter()
                    .zip(&p.values[i])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                total += sq.powf(moment_order as f64 / 2.0);
                count += 1;
            }
        }
        let moment = total / count as f64;
        if !(moment > 0.0) {
            return Err(OfbmError::numerical("zero increment moment", 0.0));
        }
        xs.push((lag as f64 * delta).ln());
        ys.push(moment.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Max z of the antisymmetric part `R̂(t,s) - R̂(t,s)ᵀ`; under time
/// reversibility `R(t,s) = R(s,t) = R(t,s)ᵀ`.
pub fn reversibility_check(emp: &EmpiricalCov) -> f64 {
    let d = emp.dim;
    let mut z = 0.0f64;
    for (mu, se) in emp.mean.iter().zip(&emp.antisym_se) {
        for k in 0..d {
            for l in 0..k {
                let diff = (mu.get(k, l) - mu.get(l, k)).abs();
                z = z.max(diff / se.get(k, l).max(SE_FLOOR));
            }
        }
    }
    z
}

/// Compares `Cov(X(t+b) - X(b), X(s+b) - X(b))` with `Cov(X(t), X(s))` on the
/// same replicates, using the paired per-replicate difference for the SE.
/// Both `t` and `t + b` must be grid points.
pub fn stationary_increments_check(paths: &[GridPath], b: f64) -> Result<f64> {
    let (m, d) = check_paths(paths)?;
    let grid = &paths[0].grid;
    let find = |x: f64| grid.iter().position(|&g| (g - x).abs() <= 1e-12 * (1.0 + x.abs()));
    let ib = find(b).ok_or_else(|| OfbmError::invalid("shift b is not a grid point"))?;
    let pairs: Vec<(usize, usize)> = (0..m).filter_map(|i| find(grid[i] + b).map(|j| (i, j))).collect();
    if pairs.len() < 2 {
        return Err(OfbmError::invalid("no shifted grid points available"));
    }
    let reps = paths.len() as f64;
    let mut z = 0.0f64;
    for &(i, ii) in &pairs {
        for &(j, jj) in &pairs {
            for k in 0..d {
                for l in 0..d {
                    let diff = paths.iter().map(|p| {
                        let shifted = (p.values[ii][k] - p.values[ib][k]) * (p.values[jj][l] - p.values[ib][l]);
                        let base = (p.values[i][k] - p.values[0][k]) * (p.values[j][l] - p.values[0][l]);
                        shifted - base
                    });
                    let (mu, se) = mean_and_se(diff, reps);
                    z = z.max(mu.abs() / se.max(SE_FLOOR));
                }
            }
        }
    }
    Ok(z)
}

/// Skewness and excess-kurtosis z-scores per component at grid index `i`,
/// using the large-sample standard errors `√(6/M)` and `√(24/M)`.
pub fn gaussianity_z(paths: &[GridPath], index: usize) -> Result<f64> {
    let (m, d) = check_paths(paths)?;
    if index >= m {
        return Err(OfbmError::invalid("grid index out of range"));
    }
    let reps = paths.len() as f64;
    let mut z = 0.0f64;
    for k in 0..d {
        let xs: Vec<f64> = paths.iter().map(|p| p.values[index][k]).collect();
        let mean = xs.iter().sum::<f64>() / reps;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / reps;
        if m2 == 0.0 {
            continue;
        }
        let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / reps;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / reps;
        let skew = m3 / m2.powf(1.5);
        let kurt = m4 / (m2 * m2) - 3.0;
        z = z.max(skew.abs() / (6.0 / reps).sqrt());
        z = z.max(kurt.abs() / (24.0 / reps).sqrt());
    }
    Ok(z)
}

/// Least-squares scalar `κ` minimising `Σ (emp - κ · target)²`.
pub fn fitted_scale(emp: &EmpiricalCov, target: &[Operator]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in emp.mean.iter().zip(target) {
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            num += x * y;
            den += y * y;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Exact,
    Telegraph,
    PartialSums,
}

/// Law being approximated in a convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StudyTarget {
    Telegraph {
        spec: OfbmSpec,
    },
    /// Diagonal fGn partial sums; `exponent = diag(hurst)`.
    PartialSums {
        hurst: Vec<f64>,
        scales: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub target: StudyTarget,
    pub levels: Vec<u64>,
    pub grid: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub quadrature: QuadratureConfig,
    pub z_threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub level: u64,
    pub seed: u64,
    pub replicates: usize,
    /// Distance of the estimate to the finite-level law.
    pub max_abs_err: f64,
    pub max_se: f64,
    pub max_z: f64,
    pub pass: bool,
    /// Deterministic distance between the finite-level law and the limit.
    pub law_distance: f64,
    /// Distance of the estimate to the limit.
    pub limit_abs_err: f64,
    pub limit_max_z: f64,
    /// Least-squares scalar between estimate and limit (partial sums).
    pub fitted_scale: Option<f64>,
    /// z against the fitted limit `κ · target` (partial sums).
    pub fitted_limit_max_z: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    /// Law distance at the top level is below the bottom level.
    pub decreasing: bool,
    pub strictly_decreasing: bool,
    pub law_distances: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StructuralChecks {
    pub self_similarity_z: Option<f64>,
    pub reversibility_z: Option<f64>,
    pub holder_slope: Option<f64>,
    pub gaussianity_z: Option<f64>,
    pub stationary_increments_z: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub scheme: SchemeKind,
    pub target: String,
    pub z_threshold: f64,
    pub levels: Vec<LevelResult>,
    pub trend: Option<Trend>,
    pub structural: StructuralChecks,
    pub pass: bool,
}

fn uniform_dyadic(grid: &[f64]) -> bool {
    grid.len() >= 7 && {
        let delta = grid[1] - grid[0];
        grid.windows(2).all(|w| ((w[1] - w[0]) - delta).abs() <= 1e-9 * delta)
    }
}

fn structural_for(paths: &[GridPath], emp: &EmpiricalCov) -> Result<StructuralChecks> {
    let last = emp.grid.len() - 1;
    Ok(StructuralChecks {
        self_similarity_z: None,
        reversibility_z: Some(reversibility_check(emp)),
        holder_slope: if uniform_dyadic(&emp.grid) {
            Some(holder_moment_slope(paths, 2)?)
        } else {
            None
        },
        gaussianity_z: Some(gaussianity_z(paths, last)?),
        stationary_increments_z: None,
    })
}

/// Samples every level, compares each against its own finite-level law and
/// tracks the distance of those laws to the limit.
pub fn run_convergence_study(cfg: &StudyConfig) -> Result<ConvergenceReport> {
    if cfg.levels.is_empty() {
        return Err(OfbmError::invalid("at least one level is required"));
    }
    if cfg.levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(OfbmError::invalid("levels must be strictly increasing"));
    }
    if cfg.replicates < 2 {
        return Err(OfbmError::invalid("at least two replicates are required"));
    }
    crate::exact::validate_grid(&cfg.grid)?;
    let grid = &cfg.grid;

    let (scheme, description, limit): (SchemeKind, String, Vec<Operator>) = match &cfg.target {
        StudyTarget::Telegraph { spec } => (
            SchemeKind::Telegraph,
            format!(
                "spectral covariance truncated at x_max = {} ({})",
                cfg.quadrature.x_max,
                if spec.label.is_empty() {
                    "unlabelled spec"
                } else {
                    &spec.label
                }
            ),
            spectral_covariance_grid(grid, spec, &cfg.quadrature, Tail::Truncated)?
                .values()
                .to_vec(),
        ),
        StudyTarget::PartialSums { hurst, scales } => {
            let fbm = DiagonalFbmCovariance {
                hurst: hurst.clone(),
                scales: scales.clone(),
            };
            (
                SchemeKind::PartialSums,
                format!("component fBm covariance, H = {hurst:?}"),
                evaluate_on_grid(grid, &fbm)?,
            )
        }
    };

    let mut levels = Vec::with_capacity(cfg.levels.len());
    let mut top: Option<(Vec<GridPath>, EmpiricalCov)> = None;
    for (li, &level) in cfg.levels.iter().enumerate() {
        let seed = derive_seed(cfg.seed, li as u64);
        let (paths, oracle) = match &cfg.target {
            StudyTarget::Telegraph { spec } => {
                let n = level as f64;
                let scheme = TelegraphScheme::new(spec, n, grid, &cfg.quadrature)?;
                let paths = scheme.sample_many(seed, cfg.replicates)?;
                let oracle = finite_n_covariance_grid(spec, n, grid, &cfg.quadrature)?
                    .values()
                    .to_vec();
                (paths, oracle)
            }
            StudyTarget::PartialSums { hurst, scales } => {
                let n = level as usize;
                let cov = StationaryCovSeq::fgn_diagonal(hurst.clone(), scales.clone())?;
                let ps = PartialSumConfig::new(n, Operator::diag(hurst), Normalization::AutoFgn)?;
                let scheme = PartialSumScheme::new(&cov, &ps, grid)?;
                let paths = scheme.sample_many(seed, cfg.replicates)?;
                let oracle = grid
                    .iter()
                    .flat_map(|&t| grid.iter().map(move |&s| (t, s)))
                    .map(|(t, s)| {
                        Operator::diag(
                            &hurst
                                .iter()
                                .zip(scales)
                                .map(|(&h, &c)| fgn_partial_sum_covariance(h, c, n, t, s))
                                .collect::<Vec<_>>(),
                        )
                    })
                    .collect();
                (paths, oracle)
            }
        };
        let emp = empirical_covariance(&paths)?;
        let own = distance_to_values(&emp, &oracle)?;
        let to_limit = distance_to_values(&emp, &limit)?;
        let law_distance = oracle
            .iter()
            .zip(&limit)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).max_abs()));
        let (fitted, fitted_z) = if scheme == SchemeKind::PartialSums {
            let k = fitted_scale(&emp, &limit);
            let scaled: Vec<Operator> = limit.iter().map(|o| o.scale(k)).collect();
            (Some(k), Some(distance_to_values(&emp, &scaled)?.max_z))
        } else {
            (None, None)
        };
        levels.push(LevelResult {
            level,
            seed,
            replicates: cfg.replicates,
            max_abs_err: own.max_abs_err,
            max_se: own.max_se,
            max_z: own.max_z,
            pass: own.max_z <= cfg.z_threshold,
            law_distance,
            limit_abs_err: to_limit.max_abs_err,
            limit_max_z: to_limit.max_z,
            fitted_scale: fitted,
            fitted_limit_max_z: fitted_z,
        });
        top = Some((paths, emp));
    }

    let trend = (levels.len() > 1).then(|| {
        let law: Vec<f64> = levels.iter().map(|l| l.law_distance).collect();
        Trend {
            decreasing: law.last() < law.first(),
            strictly_decreasing: law.windows(2).all(|w| w[1] < w[0]),
            law_distances: law,
        }
    });
    let (paths, emp) = top.expect("at least one level");
    let structural = structural_for(&paths, &emp)?;
    let pass = levels.iter().all(|l| l.pass) && trend.as_ref().map(|t| t.strictly_decreasing).unwrap_or(true);
    Ok(ConvergenceReport {
        scheme,
        target: description,
        z_threshold: cfg.z_threshold,
        levels,
        trend,
        structural,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactStudyConfig {
    pub exponent: Operator,
    pub gamma: Operator,
    pub grid: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    /// Scaling factor for the self-similarity check.
    pub scale: f64,
    /// Shift for the stationary-increments check; must be a grid point.
    pub shift: Option<f64>,
    pub z_threshold: f64,
}

/// Exact-sampler verification: covariance against the closed form plus all
/// structural checks.
pub fn run_exact_study(cfg: &ExactStudyConfig) -> Result<ConvergenceReport> {
    let sampler = ExactSampler::new(&cfg.grid, &cfg.exponent, &cfg.gamma)?;
    let seed = derive_seed(cfg.seed, 0);
    let paths = sampler.sample_many(seed, cfg.replicates);
    let emp = empirical_covariance(&paths)?;
    let target = crate::model::ReversibleCovariance {
        exponent: cfg.exponent.clone(),
        gamma: cfg.gamma.clone(),
    };
    let dist = covariance_distance(&emp, &target)?;

    // Independent reference on grid / c; its scaled image is the main grid.
    let ref_grid: Vec<f64> = cfg.grid.iter().map(|t| t / cfg.scale).collect();
    let ref_seed = derive_seed(cfg.seed, 1);
    let reference = empirical_covariance(
        &ExactSampler::new(&ref_grid, &cfg.exponent, &cfg.gamma)?.sample_many(ref_seed, cfg.replicates),
    )?;
    let self_sim = self_similarity_check(&paths, cfg.scale, &cfg.exponent, &reference)?;

    let mut structural = structural_for(&paths, &emp)?;
    structural.self_similarity_z = Some(self_sim);
    structural.stationary_increments_z = match cfg.shift {
        Some(b) => Some(stationary_increments_check(&paths, b)?),
        None => None,
    };
    let checks_pass = [
        structural.self_similarity_z,
        structural.reversibility_z,
        structural.gaussianity_z,
        structural.stationary_increments_z,
    ]
    .iter()
    .flatten()
    .all(|&z| z <= cfg.z_threshold);
    let level = LevelResult {
        level: 0,
        seed,
        replicates: cfg.replicates,
        max_abs_err: dist.max_abs_err,
        max_se: dist.max_se,
        max_z: dist.max_z,
        pass: dist.max_z <= cfg.z_threshold,
        law_distance: 0.0,
        limit_abs_err: dist.max_abs_err,
        limit_max_z: dist.max_z,
        fitted_scale: None,
        fitted_limit_max_z: None,
    };
    Ok(ConvergenceReport {
        scheme: SchemeKind::Exact,
        target: "closed-form reversible covariance".into(),
        z_threshold: cfg.z_threshold,
        pass: level.pass && checks_pass,
        levels: vec![level],
        trend: None,
        structural,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ReversibleCovariance;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn path(grid: &[f64], values: Vec<Vec<f64>>, r: u64) -> GridPath {
        GridPath {
            grid: grid.to_vec(),
            values,
            replicate_id: r,
            seed: 0,
        }
    }

    #[test]
    fn zero_paths_give_zero() {
        let paths: Vec<GridPath> = (0..5).map(|r| path(&[0.0, 1.0], vec![vec![0.0; 2]; 2], r)).collect();
        let emp = empirical_covariance(&paths).unwrap();
        assert!(emp.mean.iter().all(|m| m.is_zero()));
        assert!(emp.se.iter().all(|m| m.is_zero()));
    }

    #[test]
    fn opposite_pair_gives_outer_product() {
        let v = vec![1.5, -2.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let emp = empirical_covariance(&[path(&[1.0], vec![v.clone()], 0), path(&[1.0], vec![neg], 1)]).unwrap();
        let outer = Operator::from_rows(&[vec![2.25, -3.0], vec![-3.0, 4.0]]).unwrap();
        assert_eq!(emp.at(0, 0), &outer);
    }

    #[test]
    fn iid_normals_estimate_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let paths: Vec<GridPath> = (0..10000)
            .map(|r| {
                path(
                    &[1.0],
                    vec![vec![rng.sample(StandardNormal), rng.sample(StandardNormal)]],
                    r,
                )
            })
            .collect();
        let emp = empirical_covariance(&paths).unwrap();
        let d = distance_to_values(&emp, &[Operator::identity(2)]).unwrap();
        assert!(d.max_z <= 5.0);
        assert!(empirical_covariance(&paths[..1]).is_err());
        let mut odd = paths[..3].to_vec();
        odd[2].grid = vec![0.5];
        assert!(empirical_covariance(&odd).is_err());
    }

    fn hand_emp(mean: Operator, se: Operator) -> EmpiricalCov {
        EmpiricalCov {
            grid: vec![1.0],
            dim: mean.dim(),
            replicates: 100,
            antisym_se: vec![se.clone()],
            mean: vec![mean],
            se: vec![se],
        }
    }

    #[test]
    fn distance_examples() {
        let g = Operator::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let target = ReversibleCovariance {
            exponent: Operator::diag(&[0.7, 0.6]),
            gamma: g.clone(),
        };
        let se = Operator::from_rows(&[vec![0.01, 0.02], vec![0.02, 0.01]]).unwrap();
        let exact = hand_emp(g.clone(), se.clone());
        let d = covariance_distance(&exact, &target).unwrap();
        assert_eq!((d.max_abs_err, d.max_z), (0.0, 0.0));
        let mut bumped = g.clone();
        bumped.set(0, 1, g.get(0, 1) + 3.0 * 0.02);
        let d = covariance_distance(&hand_emp(bumped, se), &target).unwrap();
        assert_abs_diff_eq!(d.max_z, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn reversibility_examples() {
        let se = Operator::from_rows(&[vec![0.1, 0.1], vec![0.1, 0.1]]).unwrap();
        let sym = Operator::from_rows(&[vec![1.0, 0.2], vec![0.2, 1.0]]).unwrap();
        assert_eq!(reversibility_check(&hand_emp(sym, se.clone())), 0.0);
        let skew = Operator::from_rows(&[vec![1.0, 0.5], vec![0.2, 1.0]]).unwrap();
        assert_abs_diff_eq!(reversibility_check(&hand_emp(skew, se)), 3.0, epsilon = 1e-9);
    }

    #[test]
    fn holder_examples() {
        let grid: Vec<f64> = (0..=16).map(|k| k as f64 / 16.0).collect();
        let lin = path(&grid, grid.iter().map(|&t| vec![2.0 * t, -t]).collect(), 0);
        assert_abs_diff_eq!(
            holder_moment_slope(std::slice::from_ref(&lin), 2).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(holder_moment_slope(&[lin], 4).unwrap(), 4.0, epsilon = 1e-12);
        let short = path(&[0.0, 0.5, 1.0], vec![vec![0.0]; 3], 0);
        assert!(holder_moment_slope(&[short], 2).is_err());

        for (h, seed) in [(0.5, 3), (0.7, 4)] {
            let paths =
                crate::exact::sample_exact(&grid, &Operator::diag(&[h]), &Operator::identity(1), 4000, seed).unwrap();
            let slope = holder_moment_slope(&paths, 2).unwrap();
            assert!((slope - 2.0 * h).abs() <= 0.1, "H={h}: {slope}");
        }
    }

    #[test]
    fn self_similarity_examples() {
        let d = Operator::diag(&[0.7]);
        let g = Operator::identity(1);
        let grid = [0.0, 0.25, 0.5];
        let paths = crate::exact::sample_exact(&grid, &d, &g, 2000, 1).unwrap();
        let emp = empirical_covariance(&paths).unwrap();
        assert_eq!(self_similarity_check(&paths, 1.0, &d, &emp).unwrap(), 0.0);

        let big: Vec<f64> = grid.iter().map(|t| 2.0 * t).collect();
        let scaled = crate::exact::sample_exact(&big, &d, &g, 20000, 2).unwrap();
        let reference = empirical_covariance(&crate::exact::sample_exact(&grid, &d, &g, 20000, 3).unwrap()).unwrap();
        assert!(self_similarity_check(&scaled, 2.0, &d, &reference).unwrap() <= 5.0);
        let wrong = Operator::diag(&[0.5]);
        assert!(self_similarity_check(&scaled, 2.0, &wrong, &reference).unwrap() > 5.0);
    }

    #[test]
    fn study_is_deterministic_and_single_level_has_no_trend() {
        let cfg = StudyConfig {
            target: StudyTarget::PartialSums {
                hurst: vec![0.7],
                scales: vec![1.0],
            },
            levels: vec![64],
            grid: vec![0.0, 0.3, 0.5, 1.0],
            replicates: 200,
            seed: 5,
            quadrature: QuadratureConfig::default(),
            z_threshold: DEFAULT_Z_THRESHOLD,
        };
        let a = run_convergence_study(&cfg).unwrap();
        let b = run_convergence_study(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.trend.is_none());
        assert_eq!(a.levels.len(), 1);
    }
}
