//! Minimal SVG line and scatter charts.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Scatter,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str, log_y: bool) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_y,
            series: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, points: Vec<(f64, f64)>, style: Style) {
        self.series.push(Series {
            name: name.into(),
            points,
            style,
        });
    }

    fn ty(&self, y: f64) -> Option<f64> {
        if self.log_y {
            (y > 0.0).then(|| y.log10())
        } else {
            y.is_finite().then_some(y)
        }
    }

    pub fn render(&self) -> String {
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter_map(|&(x, y)| Some((x, self.ty(y)?)))
            .filter(|p| p.0.is_finite())
            .collect();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if pts.is_empty() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 <= 0.0 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 <= 0.0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, esc(&self.title));
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(out, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="black" fill="none"/>"#);
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let ylab = if self.log_y { format!("1e{yv:.1}") } else { format!("{yv:.3}") };
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.3}</text>"#, sx(xv), b + 18.0);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{ylab}</text>"#, l - 6.0, sy(yv) + 4.0);
        }
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 15.0, esc(&self.x_label));
        let _ = writeln!(
            out,
            r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            esc(&self.y_label)
        );
        for (i, s) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let mapped: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter_map(|&(x, y)| Some((sx(x), sy(self.ty(y)?))))
                .collect();
            match s.style {
                Style::Line if mapped.len() > 1 => {
                    let d: Vec<String> = mapped.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    let _ = writeln!(out, r#"<polyline points="{}" stroke="{color}" fill="none"/>"#, d.join(" "));
                }
                _ => {
                    for (x, y) in &mapped {
                        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#);
                    }
                }
            }
            let ly = MARGIN + 16.0 * i as f64;
            let _ = writeln!(out, r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#, r - 120.0, ly - 9.0);
            let _ = writeln!(out, r#"<text x="{}" y="{ly}">{}</text>"#, r - 105.0, esc(&s.name));
        }
        out.push_str("</svg>\n");
        out
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_series_and_skips_non_positive_on_log_axis() {
        let mut p = Plot::new("g vs n", "n", "g", true);
        p.add("renyi", vec![(1.0, 0.5), (2.0, 0.25), (3.0, 0.0)], Style::Line);
        p.add("a<b", vec![(1.0, 0.1)], Style::Scatter);
        let svg = p.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.contains("a&lt;b"));
    }

    #[test]
    fn empty_plot_still_renders() {
        let svg = Plot::new("t", "x", "y", false).render();
        assert!(svg.contains("</svg>"));
    }
}
