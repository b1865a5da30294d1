//! Minimal standalone SVG line charts for run reports.

use std::fmt::Write as _;

use crate::eval::{EntityMetrics, RocPoint};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#555555"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Draw markers instead of a line.
    pub markers: bool,
}

pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub series: Vec<Series>,
    pub diagonal: bool,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LineChart {
    pub fn to_svg(&self) -> String {
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0).max(f64::EPSILON) * (WIDTH - 2.0 * MARGIN);
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0).max(f64::EPSILON) * (HEIGHT - 2.0 * MARGIN);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            esc(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            WIDTH - 2.0 * MARGIN,
            HEIGHT - 2.0 * MARGIN
        );
        for k in 0..=4 {
            let f = f64::from(k) / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                sx(xv),
                HEIGHT - MARGIN + 16.0,
                tick(xv)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                MARGIN - 6.0,
                sy(yv) + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 12.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            esc(&self.y_label)
        );
        if self.diagonal {
            let _ = writeln!(
                s,
                r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#999" stroke-dasharray="4 4"/>"##,
                sx(x0),
                sy(y0),
                sx(x1),
                sy(y1)
            );
        }
        for (i, series) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            if series.markers {
                for &(x, y) in &series.points {
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{:.1}" cy="{:.1}" r="2" fill="{color}"/>"#,
                        sx(x),
                        sy(y)
                    );
                }
            } else {
                let pts: Vec<String> = series
                    .points
                    .iter()
                    .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
                    .collect();
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    pts.join(" ")
                );
            }
            let ly = MARGIN + 14.0 + 16.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{ly:.1}" fill="{color}">{}</text>"#,
                MARGIN + 8.0,
                esc(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

pub fn roc_chart(curves: &[(String, Vec<RocPoint>, f64)]) -> LineChart {
    LineChart {
        title: "ROC".into(),
        x_label: "false positive rate".into(),
        y_label: "true positive rate".into(),
        x_range: (0.0, 1.0),
        y_range: (0.0, 1.0),
        series: curves
            .iter()
            .map(|(name, pts, auc)| Series {
                name: format!("{name} (AUC {auc:.3})"),
                points: pts.iter().map(|p| (p.fpr, p.tpr)).collect(),
                markers: false,
            })
            .collect(),
        diagonal: true,
    }
}

/// Regional fraction series against fractional years.
pub fn fraction_chart(title: &str, years: &[f64], truth: &[f64], predicted: &[f64]) -> LineChart {
    let range = (
        years.first().copied().unwrap_or(0.0),
        years.last().copied().unwrap_or(1.0),
    );
    let ymax = truth.iter().chain(predicted).fold(0.0f64, |a, &b| a.max(b));
    LineChart {
        title: title.into(),
        x_label: "year".into(),
        y_label: "fraction of playas wet".into(),
        x_range: range,
        y_range: (0.0, if ymax > 0.0 { ymax * 1.1 } else { 1.0 }),
        series: vec![
            Series {
                name: "observed".into(),
                points: years.iter().copied().zip(truth.iter().copied()).collect(),
                markers: false,
            },
            Series {
                name: "predicted".into(),
                points: years.iter().copied().zip(predicted.iter().copied()).collect(),
                markers: false,
            },
        ],
        diagonal: false,
    }
}

/// Probability line plus observed labels as markers for one playa.
pub fn timeline_chart(title: &str, years: &[f64], labels: &[u8], probs: &[f64]) -> LineChart {
    LineChart {
        title: title.into(),
        x_label: "year".into(),
        y_label: "probability of inundation".into(),
        x_range: (
            years.first().copied().unwrap_or(0.0),
            years.last().copied().unwrap_or(1.0),
        ),
        y_range: (0.0, 1.0),
        series: vec![
            Series {
                name: "predicted".into(),
                points: years.iter().copied().zip(probs.iter().copied()).collect(),
                markers: false,
            },
            Series {
                name: "observed".into(),
                points: years
                    .iter()
                    .copied()
                    .zip(labels.iter().map(|&l| f64::from(l)))
                    .collect(),
                markers: true,
            },
        ],
        diagonal: false,
    }
}

/// Indices of the lowest-, median- and highest-loss playas.
pub fn best_median_worst(metrics: &[EntityMetrics]) -> Option<[usize; 3]> {
    if metrics.is_empty() {
        return None;
    }
    let mut idx: Vec<usize> = (0..metrics.len()).collect();
    idx.sort_by(|&a, &b| metrics[a].bce_loss.total_cmp(&metrics[b].bce_loss).then(a.cmp(&b)));
    Some([idx[0], idx[idx.len() / 2], idx[idx.len() - 1]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_well_formed_enough() {
        let pts = vec![
            RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY },
            RocPoint { fpr: 0.5, tpr: 1.0, threshold: 0.4 },
            RocPoint { fpr: 1.0, tpr: 1.0, threshold: 0.1 },
        ];
        let svg = roc_chart(&[("test <a&b>".into(), pts, 0.75)]).to_svg();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("test &lt;a&amp;b&gt; (AUC 0.750)"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn picks_best_median_worst() {
        let m = |loss| EntityMetrics {
            playa_id: "x".into(),
            months: 1,
            bce_loss: loss,
            f1: None,
        };
        let metrics = vec![m(0.3), m(0.1), m(0.9), m(0.5), m(0.2)];
        assert_eq!(best_median_worst(&metrics), Some([1, 0, 2]));
        assert_eq!(best_median_worst(&[]), None);
    }
}
