//! Gauss–Legendre panel quadrature on the positive half-line.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{OfbmError, Result};

/// Controls every frequency-axis integral in the crate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    /// Truncation point of the frequency axis.
    pub x_max: f64,
    pub rel_tol: f64,
    /// Number of geometrically graded panels between the first regular
    /// panel and the origin.
    pub panels_near_zero: usize,
    pub grading_ratio: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            x_max: 1e4,
            rel_tol: 1e-8,
            panels_near_zero: 40,
            grading_ratio: 0.5,
        }
    }
}

impl QuadratureConfig {
    pub fn with_x_max(mut self, x_max: f64) -> Self {
        self.x_max = x_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_max >= 1.0) || !self.x_max.is_finite() {
            return Err(OfbmError::invalid(format!("x_max must be >= 1, got {}", self.x_max)));
        }
        if !(1e-12..=1e-2).contains(&self.rel_tol) {
            return Err(OfbmError::invalid(format!(
                "rel_tol must lie in [1e-12, 1e-2], got {}",
                self.rel_tol
            )));
        }
        if self.panels_near_zero == 0 {
            return Err(OfbmError::invalid("panels_near_zero must be positive"));
        }
        if !(self.grading_ratio > 0.0 && self.grading_ratio < 1.0) {
            return Err(OfbmError::invalid("grading_ratio must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Nodes and weights of an n-point Gauss–Legendre rule on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Maps the rule onto `[a, b]`, yielding `(x, w)` pairs.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Shared 16-point rule.
pub fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

/// Panel layout on `(0, x_max]`: geometrically graded panels towards the
/// origin followed by uniform panels of width `width`.
#[derive(Clone, Debug)]
pub struct PanelLayout {
    /// Left end of the first graded panel; `(0, head]` is left to the caller.
    pub head: f64,
    pub panels: Vec<(f64, f64)>,
}

impl PanelLayout {
    pub fn new(width: f64, x_max: f64, graded: usize, ratio: f64) -> Self {
        let first = width.min(x_max);
        let mut edges = Vec::with_capacity(graded + 1);
        let mut e = first;
        for _ in 0..graded {
            e *= ratio;
            edges.push(e);
        }
        edges.reverse();
        let head = edges.first().copied().unwrap_or(first);
        let mut panels: Vec<(f64, f64)> = edges.windows(2).map(|w| (w[0], w[1])).collect();
        if let Some(&last) = edges.last() {
            panels.push((last, first));
        }
        let n_uniform = ((x_max - first) / width).ceil().max(0.0) as usize;
        for k in 0..n_uniform {
            let a = first + k as f64 * width;
            let b = (first + (k + 1) as f64 * width).min(x_max);
            if b > a {
                panels.push((a, b));
            }
        }
        PanelLayout { head, panels }
    }

    pub fn from_config(width: f64, cfg: &QuadratureConfig) -> Self {
        PanelLayout::new(width, cfg.x_max, cfg.panels_near_zero, cfg.grading_ratio)
    }

    /// Splits every panel into `2^level` equal pieces.
    pub fn refined(&self, level: u32) -> PanelLayout {
        let pieces = 1usize << level;
        let panels = self
            .panels
            .iter()
            .flat_map(|&(a, b)| {
                let h = (b - a) / pieces as f64;
                (0..pieces).map(move |k| {
                    let lo = a + k as f64 * h;
                    let hi = if k + 1 == pieces { b } else { a + (k + 1) as f64 * h };
                    (lo, hi)
                })
            })
            .collect();
        PanelLayout {
            head: self.head,
            panels,
        }
    }

    pub fn end(&self) -> f64 {
        self.panels.last().map(|p| p.1).unwrap_or(self.head)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gl16_integrates_polynomials_exactly() {
        let rule = gl16();
        assert_relative_eq!(rule.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        let v = rule.integrate(0.0, 2.0, |x| x.powi(31));
        assert_relative_eq!(v, 2f64.powi(32) / 32.0, max_relative = 1e-13);
    }

    #[test]
    fn odd_rule_has_center_node() {
        let r = GaussLegendre::new(5);
        assert!(r.nodes[2].abs() < 1e-15);
        assert_relative_eq!(r.weights[2], 128.0 / 225.0, epsilon = 1e-14);
    }

    #[test]
    fn layout_covers_interval() {
        let l = PanelLayout::new(std::f64::consts::PI, 100.0, 40, 0.5);
        assert_relative_eq!(l.head, std::f64::consts::PI * 0.5f64.powi(40), max_relative = 1e-14);
        assert_eq!(l.panels.first().unwrap().0, l.head);
        assert_eq!(l.end(), 100.0);
        for w in l.panels.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        let r = l.refined(1);
        assert_eq!(r.panels.len(), 2 * l.panels.len());
        assert_eq!(r.end(), 100.0);
    }

    #[test]
    fn config_bounds() {
        assert!(QuadratureConfig::default().validate().is_ok());
        let loose = QuadratureConfig {
            rel_tol: 0.5,
            ..Default::default()
        };
        assert!(loose.validate().is_err());
        assert!(QuadratureConfig::default().with_x_max(0.5).validate().is_err());
    }
}
