//! Learning-curve plots as standalone SVG 1.1: one panel per metric, with
//! percentile bands for individual-level metrics, a horizontal line per rule
//! threshold and a vertical marker at each stop point.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::sequential::{LearningCurve, Metric};

#[derive(Debug, Clone, PartialEq)]
pub struct SvgOptions {
    pub metrics: Vec<Metric>,
    pub width: f64,
    pub panel_height: f64,
    pub title: Option<String>,
    /// Embedded verbatim (escaped) in `<metadata>`, e.g. the run config.
    pub provenance: Option<String>,
}

impl Default for SvgOptions {
    fn default() -> Self {
        Self {
            metrics: Metric::ALL.to_vec(),
            width: 720.0,
            panel_height: 240.0,
            title: None,
            provenance: None,
        }
    }
}

impl SvgOptions {
    /// Metrics named by the curve's rules, in rule order, or every metric
    /// when there are no rules.
    pub fn for_rules(curve: &LearningCurve) -> Self {
        let mut metrics: Vec<Metric> = Vec::new();
        for rule in &curve.rules {
            if !metrics.contains(&rule.metric) {
                metrics.push(rule.metric);
            }
        }
        if metrics.is_empty() {
            metrics = Metric::ALL.to_vec();
        }
        Self {
            metrics,
            ..Self::default()
        }
    }
}

const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const PANEL_TOP: f64 = 30.0;
const PANEL_BOTTOM: f64 = 36.0;
const HEADER: f64 = 34.0;
const Y_TICKS: usize = 5;
const MAX_X_TICKS: usize = 10;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Tick label with up to four significant digits.
fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let digits = (3 - v.abs().log10().floor() as i32).clamp(0, 8) as usize;
    let s = format!("{v:.digits$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

struct Scale {
    d0: f64,
    d1: f64,
    r0: f64,
    r1: f64,
}

impl Scale {
    fn map(&self, v: f64) -> f64 {
        self.r0 + (v - self.d0) / (self.d1 - self.d0) * (self.r1 - self.r0)
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    if span <= 1e-12 * lo.abs().max(1.0) {
        let pad = (0.1 * lo.abs()).max(0.05);
        return (lo - pad, hi + pad);
    }
    (lo - 0.05 * span, hi + 0.05 * span)
}

/// Points of `values` against `ns`, split at non-finite values.
fn segments(ns: &[usize], values: &[f64], x: &Scale, y: &Scale) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for (&n, &v) in ns.iter().zip(values) {
        if v.is_finite() {
            if !current.is_empty() {
                current.push(' ');
            }
            let _ = write!(current, "{:.2},{:.2}", x.map(n as f64), y.map(v));
        } else if !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

pub fn render_learning_curve_svg(curve: &LearningCurve, options: &SvgOptions) -> Result<String> {
    let points = curve.records.len();
    if points < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            found: points,
        });
    }
    if options.metrics.is_empty() {
        return Err(Error::InvalidInput(
            "no metrics selected for plotting".into(),
        ));
    }
    let width = options.width;
    let panel_h = options.panel_height;
    let height = HEADER + panel_h * options.metrics.len() as f64;
    let ns = curve.sample_sizes();
    let x = Scale {
        d0: ns[0] as f64,
        d1: ns[points - 1] as f64,
        r0: MARGIN_LEFT,
        r1: width - MARGIN_RIGHT,
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    if let Some(p) = &options.provenance {
        let _ = writeln!(s, "<metadata>{}</metadata>", escape(p));
    }
    s.push_str(
        "<style>\
         text{font-family:sans-serif;font-size:11px;fill:#333}\
         .panel-title{font-size:13px;font-weight:bold}\
         .axis{stroke:#333;stroke-width:1}\
         .grid{stroke:#ddd;stroke-width:0.5}\
         .metric{fill:none;stroke:#1f5fa8;stroke-width:2}\
         .band{fill:none;stroke:#1f5fa8;stroke-width:1;stroke-dasharray:4 3}\
         .threshold{stroke:#c0392b;stroke-width:1;stroke-dasharray:6 4}\
         .n-stop{stroke:#2e8b57;stroke-width:1.5}\
         .n-stop-overall{stroke:#000;stroke-width:1;stroke-dasharray:2 2}\
         </style>\n",
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="white"/>"#
    );
    let title = options
        .title
        .clone()
        .unwrap_or_else(|| "Learning curves".into());
    let _ = writeln!(
        s,
        r#"<text class="panel-title" x="{:.2}" y="20">{}</text>"#,
        MARGIN_LEFT,
        escape(&title)
    );

    for (i, &metric) in options.metrics.iter().enumerate() {
        let top = HEADER + panel_h * i as f64;
        let plot_top = top + PANEL_TOP;
        let plot_bottom = top + panel_h - PANEL_BOTTOM;
        let values: Vec<f64> = curve.records.iter().map(|r| metric.value(r)).collect();
        let bands: Vec<(f64, f64)> = curve
            .records
            .iter()
            .filter_map(|r| metric.band(r))
            .collect();
        let rules: Vec<usize> = (0..curve.rules.len())
            .filter(|&j| curve.rules[j].metric == metric)
            .collect();
        let (y0, y1) = padded_range(
            values
                .iter()
                .copied()
                .chain(bands.iter().flat_map(|&(lo, hi)| [lo, hi]))
                .chain(rules.iter().map(|&j| curve.rules[j].threshold)),
        );
        let y = Scale {
            d0: y0,
            d1: y1,
            r0: plot_bottom,
            r1: plot_top,
        };

        let _ = writeln!(s, r#"<g class="panel" data-metric="{metric}">"#);
        let _ = writeln!(
            s,
            r#"<text class="panel-title" x="{:.2}" y="{:.2}">{metric}</text>"#,
            MARGIN_LEFT,
            plot_top - 8.0
        );
        for t in 0..Y_TICKS {
            let v = y0 + (y1 - y0) * t as f64 / (Y_TICKS - 1) as f64;
            let py = y.map(v);
            let _ = writeln!(
                s,
                r#"<line class="grid" x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                x.r0,
                x.r1,
                x.r0 - 6.0,
                py + 4.0,
                tick_label(v)
            );
        }
        let stride = points.div_ceil(MAX_X_TICKS);
        for &n in ns.iter().step_by(stride) {
            let px = x.map(n as f64);
            let _ = writeln!(
                s,
                r#"<line class="axis" x1="{px:.2}" y1="{plot_bottom:.2}" x2="{px:.2}" y2="{:.2}"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{n}</text>"#,
                plot_bottom + 4.0,
                plot_bottom + 16.0
            );
        }
        let _ = writeln!(
            s,
            r#"<line class="axis" x1="{:.2}" y1="{plot_bottom:.2}" x2="{:.2}" y2="{plot_bottom:.2}"/><line class="axis" x1="{:.2}" y1="{plot_top:.2}" x2="{:.2}" y2="{plot_bottom:.2}"/>"#,
            x.r0, x.r1, x.r0, x.r0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">sample size</text>"#,
            0.5 * (x.r0 + x.r1),
            plot_bottom + 30.0
        );

        if bands.len() == points {
            let lower: Vec<f64> = bands.iter().map(|b| b.0).collect();
            let upper: Vec<f64> = bands.iter().map(|b| b.1).collect();
            for (name, series) in [("p2_5", &lower), ("p97_5", &upper)] {
                for seg in segments(&ns, series, &x, &y) {
                    let _ = writeln!(
                        s,
                        r#"<polyline class="band" data-percentile="{name}" points="{seg}"/>"#
                    );
                }
            }
        }
        for seg in segments(&ns, &values, &x, &y) {
            let _ = writeln!(s, r#"<polyline class="metric" points="{seg}"/>"#);
        }
        for &j in &rules {
            let rule = &curve.rules[j];
            let py = y.map(rule.threshold);
            let _ = writeln!(
                s,
                r#"<line class="threshold" data-threshold="{}" x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}"/>"#,
                rule.threshold, x.r0, x.r1
            );
            if let Some(n) = curve.n_stop_per_rule[j] {
                let px = x.map(n as f64);
                let _ = writeln!(
                    s,
                    r#"<line class="n-stop" data-rule="{}" data-n="{n}" x1="{px:.2}" y1="{plot_top:.2}" x2="{px:.2}" y2="{plot_bottom:.2}"/><text x="{:.2}" y="{:.2}">N_stop={n}</text>"#,
                    escape(&rule.label()),
                    px + 3.0,
                    plot_top + 12.0
                );
            }
        }
        if let Some(n) = curve.n_stop_overall {
            let px = x.map(n as f64);
            let _ = writeln!(
                s,
                r#"<line class="n-stop-overall" data-n="{n}" x1="{px:.2}" y1="{plot_top:.2}" x2="{px:.2}" y2="{plot_bottom:.2}"/>"#
            );
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequential::IncrementRecord;

    fn curve(slopes: &[f64], rules: &[&str]) -> LearningCurve {
        let records = slopes
            .iter()
            .enumerate()
            .map(|(i, &s)| IncrementRecord {
                usable: true,
                corrected_slope: s,
                mean_ui_width: 0.3 / (i + 1) as f64,
                ui_width_p2_5: 0.1 / (i + 1) as f64,
                ui_width_p97_5: 0.5 / (i + 1) as f64,
                ..IncrementRecord::unusable(100 * (i + 1))
            })
            .collect();
        LearningCurve::new(rules.iter().map(|r| r.parse().unwrap()).collect(), records)
    }

    fn options(metrics: &[Metric]) -> SvgOptions {
        SvgOptions {
            metrics: metrics.to_vec(),
            ..SvgOptions::default()
        }
    }

    #[test]
    fn two_points_one_polyline_per_metric() {
        let c = curve(&[0.8, 0.95], &[]);
        let svg =
            render_learning_curve_svg(&c, &options(&[Metric::CorrectedSlope, Metric::MeanUiWidth]))
                .unwrap();
        assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("class=\"metric\"").count(), 2);
        assert_eq!(svg.matches("class=\"band\"").count(), 2);
    }

    #[test]
    fn threshold_line_sits_at_its_value() {
        let c = curve(&[0.7, 0.8, 0.92, 0.95], &["corrected_slope >= 0.9 k=2"]);
        let svg = render_learning_curve_svg(&c, &options(&[Metric::CorrectedSlope])).unwrap();
        let line = svg
            .lines()
            .find(|l| l.contains("class=\"threshold\""))
            .unwrap();
        assert!(line.contains("data-threshold=\"0.9\""));
        // Recompute the expected pixel row from the panel's value range.
        let (y0, y1) = padded_range([0.7, 0.8, 0.92, 0.95, 0.9].into_iter());
        let top = HEADER + PANEL_TOP;
        let bottom = HEADER + 240.0 - PANEL_BOTTOM;
        let py = bottom + (0.9 - y0) / (y1 - y0) * (top - bottom);
        assert!(line.contains(&format!("y1=\"{py:.2}\"")), "{line}");
        assert!(
            svg.contains("class=\"n-stop\" data-rule=\"corrected_slope_ge_0.9_k2\" data-n=\"300\"")
        );
    }

    #[test]
    fn identical_input_gives_identical_bytes() {
        let c = curve(&[0.7, 0.8, 0.92], &["corrected_slope >= 0.9 k=1"]);
        let o = SvgOptions {
            provenance: Some("{\"seed\": 1} <&>".into()),
            ..SvgOptions::for_rules(&c)
        };
        let a = render_learning_curve_svg(&c, &o).unwrap();
        assert_eq!(a, render_learning_curve_svg(&c, &o).unwrap());
        assert!(a.contains("<metadata>{&quot;seed&quot;: 1} &lt;&amp;&gt;</metadata>"));
    }

    #[test]
    fn gaps_split_the_line() {
        let mut c = curve(&[0.7, 0.8, 0.9, 0.95], &[]);
        c.records[1] = IncrementRecord::unusable(200);
        let svg = render_learning_curve_svg(&c, &options(&[Metric::CorrectedSlope])).unwrap();
        assert_eq!(svg.matches("class=\"metric\"").count(), 2);
    }

    #[test]
    fn single_point_rejected() {
        let c = curve(&[0.7], &[]);
        assert!(matches!(
            render_learning_curve_svg(&c, &SvgOptions::default()),
            Err(Error::InsufficientPoints {
                needed: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn tick_labels_are_compact() {
        assert_eq!(tick_label(0.9), "0.9");
        assert_eq!(tick_label(0.0123456), "0.01235");
        assert_eq!(tick_label(1500.0), "1500");
        assert_eq!(tick_label(0.0), "0");
    }
}
