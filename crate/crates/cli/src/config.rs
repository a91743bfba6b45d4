//! Run configuration: a single JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use ofbm_core::diagnostics::SchemeKind;
use ofbm_core::model::is_time_reversible_params;
use ofbm_core::{OfbmSpec, Operator, QuadratureConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Frequency cutoff used by the telegraph scheme when the config does not
/// set one. Path cost grows linearly with `n · x_max`.
pub const TELEGRAPH_X_MAX: f64 = 64.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Exact,
    Telegraph,
    PartialSums,
}

impl Scheme {
    pub fn kind(self) -> SchemeKind {
        match self {
            Scheme::Exact => SchemeKind::Exact,
            Scheme::Telegraph => SchemeKind::Telegraph,
            Scheme::PartialSums => SchemeKind::PartialSums,
        }
    }
}

/// Time grid: `{0} ∪ {k · t_max / points : k = 1..=points}` unless explicit
/// `times` are given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub t_max: f64,
    pub points: usize,
    /// Require `points` to be a power of two.
    pub dyadic: bool,
    pub times: Option<Vec<f64>>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            t_max: 1.0,
            points: 5,
            dyadic: false,
            times: None,
        }
    }
}

impl GridSpec {
    pub fn times(&self) -> Result<Vec<f64>, CliError> {
        let grid = match &self.times {
            Some(ts) => {
                let mut g = ts.clone();
                if g.first() != Some(&0.0) {
                    g.insert(0, 0.0);
                }
                g
            }
            None => {
                if self.points == 0 || !(self.t_max.is_finite() && self.t_max > 0.0) {
                    return Err(CliError::Config("grid needs points >= 1 and a positive t_max".into()));
                }
                if self.dyadic && !self.points.is_power_of_two() {
                    return Err(CliError::Config(format!(
                        "dyadic grid needs a power-of-two point count, got {}",
                        self.points
                    )));
                }
                (0..=self.points)
                    .map(|k| k as f64 * self.t_max / self.points as f64)
                    .collect()
            }
        };
        ofbm_core::exact::validate_grid(&grid).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(grid)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub paths: String,
    pub report: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: PathBuf::from("out"),
            paths: "paths.csv".into(),
            report: "report.json".into(),
        }
    }
}

impl OutputSpec {
    pub fn paths_file(&self) -> PathBuf {
        self.dir.join(&self.paths)
    }

    pub fn report_file(&self) -> PathBuf {
        self.dir.join(&self.report)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<Operator>,
    #[serde(rename = "A1", default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<Operator>,
    #[serde(rename = "A2", default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<Operator>,
    /// Covariance at time 1 for the exact sampler; derived from the spectral
    /// amplitudes when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Operator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hurst: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureConfig>,
    #[serde(default = "default_z")]
    pub z_threshold: f64,
    /// Where files go; not echoed into reports so that identical runs
    /// written to different places produce identical reports.
    #[serde(default, skip_serializing)]
    pub output: OutputSpec,
}

fn default_seed() -> u64 {
    1
}

fn default_z() -> f64 {
    ofbm_core::diagnostics::DEFAULT_Z_THRESHOLD
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

fn check_dim(name: &str, op: &Operator, d: usize) -> Result<(), CliError> {
    if op.dim() != d {
        return Err(CliError::Config(format!(
            "{name} must be {d}x{d}, got {0}x{0}",
            op.dim()
        )));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_json(&text)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme.unwrap_or(Scheme::PartialSums)
    }

    /// Process dimension; defaults to 2.
    pub fn dim(&self) -> Result<usize, CliError> {
        let from_fields = self
            .exponent
            .as_ref()
            .map(|m| m.dim())
            .or_else(|| self.hurst.as_ref().map(|h| h.len()))
            .or_else(|| self.a1.as_ref().map(|m| m.dim()));
        match (self.d, from_fields) {
            (Some(0), _) | (None, Some(0)) => Err(CliError::Config("d must be at least 1".into())),
            (Some(d), Some(f)) if d != f => Err(CliError::Config(format!("d = {d} but matrices are {f}x{f}"))),
            (Some(d), _) => Ok(d),
            (None, Some(f)) => Ok(f),
            (None, None) => Ok(2),
        }
    }

    /// `D`, falling back to `diag(hurst)` and then to `diag(0.7, 0.6)` in
    /// two dimensions.
    pub fn exponent(&self) -> Result<Operator, CliError> {
        let d = self.dim()?;
        let op = match (&self.exponent, &self.hurst) {
            (Some(m), _) => m.clone(),
            (None, Some(h)) => Operator::diag(h),
            (None, None) if d == 2 => Operator::diag(&[0.7, 0.6]),
            (None, None) => return Err(CliError::Config("D is required when d != 2".into())),
        };
        check_dim("D", &op, d)?;
        Ok(op)
    }

    /// Spectral parameters; `A = I` when no amplitudes are given.
    pub fn spec(&self) -> Result<OfbmSpec, CliError> {
        if self.hurst.is_some() || self.scales.is_some() {
            return Err(CliError::Config(
                "hurst/scales describe partial-sum noise; use A1/A2 for spectral schemes".into(),
            ));
        }
        let exponent = self.exponent()?;
        let d = exponent.dim();
        if self.a1.is_none() && self.a2.is_none() {
            return Ok(OfbmSpec::mason_xiao(exponent));
        }
        let a1 = self.a1.clone().unwrap_or_else(|| Operator::zeros(d));
        let a2 = self.a2.clone().unwrap_or_else(|| Operator::zeros(d));
        check_dim("A1", &a1, d)?;
        check_dim("A2", &a2, d)?;
        Ok(OfbmSpec::new(exponent, a1, a2, "config")?)
    }

    /// Component Hurst indices and scales for the partial-sums scheme.
    pub fn hurst_scales(&self) -> Result<(Vec<f64>, Vec<f64>), CliError> {
        if self.a1.is_some() || self.a2.is_some() {
            return Err(CliError::Config(
                "partial sums take hurst/scales, not spectral amplitudes".into(),
            ));
        }
        let d = self.dim()?;
        let hurst = match (&self.hurst, &self.exponent) {
            (Some(h), Some(m)) if m.diagonal() != *h => {
                return Err(CliError::Config("hurst disagrees with the diagonal of D".into()))
            }
            (Some(h), _) => h.clone(),
            (None, _) => {
                let m = self.exponent()?;
                if (0..d).any(|i| (0..d).any(|j| i != j && m.get(i, j) != 0.0)) {
                    return Err(CliError::Config(
                        "partial sums need a diagonal D or a hurst vector".into(),
                    ));
                }
                m.diagonal()
            }
        };
        let scales = self.scales.clone().unwrap_or_else(|| vec![1.0; d]);
        if hurst.len() != d || scales.len() != d {
            return Err(CliError::Config(format!("hurst and scales need {d} entries")));
        }
        Ok((hurst, scales))
    }

    /// `Γ` for the exact sampler. Requires a time-reversible spec when it
    /// has to be derived.
    pub fn gamma(&self, q: &QuadratureConfig) -> Result<Operator, CliError> {
        if let Some(g) = &self.gamma {
            check_dim("gamma", g, self.dim()?)?;
            return Ok(g.clone());
        }
        let spec = self.spec()?;
        if !is_time_reversible_params(&spec, 1e-12) {
            return Err(CliError::Core(ofbm_core::OfbmError::InvalidModel(
                "exact sampling needs a time-reversible spec".into(),
            )));
        }
        Ok(ofbm_core::model::spectral_covariance(1.0, 1.0, &spec, q)?)
    }

    pub fn quadrature(&self, scheme: Scheme) -> Result<QuadratureConfig, CliError> {
        let q = match (self.quadrature, scheme) {
            (Some(q), _) => q,
            (None, Scheme::Telegraph) => QuadratureConfig::default().with_x_max(TELEGRAPH_X_MAX),
            (None, _) => QuadratureConfig::default(),
        };
        q.validate()?;
        Ok(q)
    }

    pub fn levels(&self, scheme: Scheme) -> Vec<u64> {
        self.levels.clone().unwrap_or_else(|| match scheme {
            Scheme::Exact => vec![0],
            Scheme::Telegraph => vec![10, 100, 1000],
            Scheme::PartialSums => vec![256, 1024, 4096],
        })
    }

    pub fn replicates(&self, scheme: Scheme) -> usize {
        self.replicates.unwrap_or(match scheme {
            Scheme::Exact => 20000,
            Scheme::Telegraph => 2000,
            Scheme::PartialSums => 5000,
        })
    }

    /// Copy with every scheme-dependent default filled in.
    pub fn effective(&self, scheme: Scheme) -> Result<RunConfig, CliError> {
        let mut out = self.clone();
        out.scheme = Some(scheme);
        out.d = Some(self.dim()?);
        out.levels = Some(self.levels(scheme));
        out.replicates = Some(self.replicates(scheme));
        out.quadrature = Some(self.quadrature(scheme)?);
        out.grid.times = Some(self.grid.times()?);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.dim().unwrap(), 2);
        assert_eq!(c.exponent().unwrap(), Operator::diag(&[0.7, 0.6]));
        assert_eq!(c.hurst_scales().unwrap(), (vec![0.7, 0.6], vec![1.0, 1.0]));
        assert_eq!(c.grid.times().unwrap(), vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        assert_eq!(c.quadrature(Scheme::Telegraph).unwrap().x_max, TELEGRAPH_X_MAX);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"seeed": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"grid": {"tmax": 3}}"#).is_err());
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let c = RunConfig::from_json(r#"{"d": 1, "D": [[0.7, 0], [0, 0.6]]}"#).unwrap();
        assert!(c.dim().is_err());
        let c = RunConfig::from_json(r#"{"D": [[0.5]], "A1": [[1, 0], [0, 1]]}"#).unwrap();
        assert!(c.spec().is_err());
    }

    #[test]
    fn amplitude_and_hurst_are_exclusive() {
        let c = RunConfig::from_json(r#"{"hurst": [0.7], "A1": [[1]]}"#).unwrap();
        assert!(c.spec().is_err());
        assert!(c.hurst_scales().is_err());
    }

    #[test]
    fn dyadic_grid_needs_power_of_two() {
        let c = RunConfig::from_json(r#"{"grid": {"points": 6, "dyadic": true}}"#).unwrap();
        assert!(c.grid.times().is_err());
        let c = RunConfig::from_json(r#"{"grid": {"points": 8, "dyadic": true}}"#).unwrap();
        assert_eq!(c.grid.times().unwrap().len(), 9);
    }

    #[test]
    fn explicit_times_gain_origin() {
        let c = RunConfig::from_json(r#"{"grid": {"times": [0.3, 0.5, 1.0]}}"#).unwrap();
        assert_eq!(c.grid.times().unwrap(), vec![0.0, 0.3, 0.5, 1.0]);
    }
}
