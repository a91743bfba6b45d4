//! Static SVG line charts.

use std::fmt::Write;

use ofbm_core::diagnostics::ConvergenceReport;
use ofbm_core::GridPath;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub name: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
}

pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LineChart {
    fn transform(&self, (x, y): (f64, f64)) -> Option<(f64, f64)> {
        let x = if self.log_x { (x > 0.0).then(|| x.log10())? } else { x };
        let y = if self.log_y { (y > 0.0).then(|| y.log10())? } else { y };
        (x.is_finite() && y.is_finite()).then_some((x, y))
    }

    pub fn to_svg(&self) -> String {
        let data: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|s| s.points.iter().filter_map(|&p| self.transform(p)).collect())
            .collect();
        let all = data.iter().flatten();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 < 1e-12 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pw = WIDTH - 2.0 * MARGIN;
        let ph = HEIGHT - 2.0 * MARGIN;
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph;
        let label = |v: f64, log: bool| {
            if log {
                format!("{:.3e}", 10f64.powf(v))
            } else {
                format!("{v:.3}")
            }
        };

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            svg,
            r#"<path d="M{m} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
            m = MARGIN,
            t = MARGIN,
            b = HEIGHT - MARGIN,
            r = WIDTH - MARGIN
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                sx(xv),
                HEIGHT - MARGIN + 18.0,
                label(xv, self.log_x)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                MARGIN - 6.0,
                sy(yv) + 4.0,
                label(yv, self.log_y)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
        for (s, pts) in self.series.iter().zip(&data) {
            if pts.is_empty() {
                continue;
            }
            let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.2"/>"#,
                coords.join(" "),
                s.color
            );
        }
        for (row, s) in self.series.iter().filter(|s| !s.name.is_empty()).enumerate() {
            let y = MARGIN + 14.0 * row as f64;
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" fill="{}">{}</text>"#,
                WIDTH - MARGIN - 150.0,
                y,
                s.color,
                escape(&s.name)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Sample paths, one colour per component; at most `max_paths` replicates.
pub fn paths_chart(paths: &[GridPath], max_paths: usize) -> LineChart {
    let d = paths.first().map(|p| p.dim()).unwrap_or(0);
    let mut series = Vec::new();
    for (r, p) in paths.iter().take(max_paths).enumerate() {
        for k in 0..d {
            series.push(Series {
                name: if r == 0 { format!("x_{}", k + 1) } else { String::new() },
                color: PALETTE[k % PALETTE.len()],
                points: p.grid.iter().zip(&p.values).map(|(&t, v)| (t, v[k])).collect(),
            });
        }
    }
    LineChart {
        title: format!("Sample paths ({} of {})", paths.len().min(max_paths), paths.len()),
        x_label: "t".into(),
        y_label: "X(t)".into(),
        log_x: false,
        log_y: false,
        series,
    }
}

/// Error against the limit and against each level's own law, log-log.
pub fn error_chart(report: &ConvergenceReport) -> LineChart {
    let pick = |f: fn(&ofbm_core::diagnostics::LevelResult) -> f64| {
        report.levels.iter().map(|l| (l.level as f64, f(l))).collect::<Vec<_>>()
    };
    LineChart {
        title: format!("Convergence: {}", report.target),
        x_label: "level".into(),
        y_label: "max abs error".into(),
        log_x: true,
        log_y: true,
        series: vec![
            Series {
                name: "estimate vs level law".into(),
                color: PALETTE[0],
                points: pick(|l| l.max_abs_err),
            },
            Series {
                name: "estimate vs limit".into(),
                color: PALETTE[1],
                points: pick(|l| l.limit_abs_err),
            },
            Series {
                name: "level law vs limit".into(),
                color: PALETTE[2],
                points: pick(|l| l.law_distance),
            },
        ],
    }
}
