//! Minimal SVG rendering of estimate-vs-reference scatter and Bland–Altman
//! panels.

use std::fmt::Write as _;

use crate::pipeline::EvalSummary;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 360.0;
const MARGIN: f64 = 50.0;

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    left: f64,
}

impl Axes {
    fn new(xs: &[f64], ys: &[f64], extra_y: &[f64], left: f64) -> Self {
        let span = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            let pad = ((hi - lo) * 0.08).max(1.0);
            (lo - pad, hi + pad)
        };
        let (x0, x1) = span(&mut xs.iter().copied());
        let (y0, y1) = span(&mut ys.iter().chain(extra_y).copied());
        Axes { x0, x1, y0, y1, left }
    }

    fn px(&self, x: f64) -> f64 {
        self.left + MARGIN + (x - self.x0) / (self.x1 - self.x0) * (PANEL_W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        PANEL_H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (PANEL_H - 2.0 * MARGIN)
    }

    fn frame(&self, out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (l, r) = (self.left + MARGIN, self.left + PANEL_W - MARGIN);
        let (t, b) = (MARGIN, PANEL_H - MARGIN);
        let _ = writeln!(
            out,
            r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            r - l,
            b - t
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="30" text-anchor="middle" font-size="14">{title}</text>"#,
            (l + r) / 2.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{xlabel}</text>"#,
            (l + r) / 2.0,
            PANEL_H - 12.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 {} {})">{ylabel}</text>"#,
            l - 32.0,
            (t + b) / 2.0,
            l - 32.0,
            (t + b) / 2.0
        );
        for (v, anchor) in [(self.x0, "start"), (self.x1, "end")] {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="{anchor}" font-size="10">{v:.1}</text>"#,
                self.px(v),
                b + 14.0
            );
        }
        for v in [self.y0, self.y1] {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{v:.1}</text>"#,
                l - 4.0,
                self.py(v) + 4.0
            );
        }
    }

    fn hline(&self, out: &mut String, y: f64, dash: bool, label: &str) {
        let style = if dash { r#" stroke-dasharray="5,4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{y1}" x2="{}" y2="{y1}" stroke="gray"{style}/>"#,
            self.px(self.x0),
            self.px(self.x1),
            y1 = self.py(y)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="10" fill="gray">{label} {y:.2}</text>"#,
            self.px(self.x1) - 4.0,
            self.py(y) - 4.0
        );
    }
}

/// Two panels: estimate against reference (with identity line) and
/// difference against mean with bias and limits of agreement.
pub fn agreement_plot(
    estimates: &[f64],
    references: &[f64],
    summary: &EvalSummary,
    unit: &str,
) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{PANEL_H}" font-family="sans-serif">"#,
        2.0 * PANEL_W
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let all: Vec<f64> = estimates.iter().chain(references).copied().collect();
    let scatter = Axes::new(&all, &all, &[], 0.0);
    scatter.frame(&mut out, "Estimate vs reference", &format!("reference ({unit})"), &format!("estimate ({unit})"));
    let _ = writeln!(
        out,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="5,4"/>"#,
        scatter.px(scatter.x0),
        scatter.py(scatter.x0),
        scatter.px(scatter.x1),
        scatter.py(scatter.x1)
    );
    for (e, r) in estimates.iter().zip(references) {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue" fill-opacity="0.7"/>"#,
            scatter.px(*r),
            scatter.py(*e)
        );
    }

    let means: Vec<f64> = estimates.iter().zip(references).map(|(e, r)| 0.5 * (e + r)).collect();
    let diffs: Vec<f64> = estimates.iter().zip(references).map(|(e, r)| e - r).collect();
    let ba = Axes::new(&means, &diffs, &[summary.loa_low, summary.loa_high], PANEL_W);
    ba.frame(&mut out, "Bland-Altman", &format!("mean ({unit})"), &format!("difference ({unit})"));
    ba.hline(&mut out, summary.mean_bias, false, "bias");
    ba.hline(&mut out, summary.loa_low, true, "-1.96 SD");
    ba.hline(&mut out, summary.loa_high, true, "+1.96 SD");
    for (m, d) in means.iter().zip(&diffs) {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="darkorange" fill-opacity="0.7"/>"#,
            ba.px(*m),
            ba.py(*d)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::evaluate;

    #[test]
    fn renders_one_marker_per_point() {
        let e = [72.0, 75.5, 80.0];
        let r = [71.0, 76.0, 79.0];
        let s = evaluate(&e, &r).unwrap();
        let svg = agreement_plot(&e, &r, &s, "BPM");
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 6);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn identical_values_stay_finite() {
        let e = [70.0; 4];
        let s = evaluate(&e, &e).unwrap();
        let svg = agreement_plot(&e, &e, &s, "BPM");
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
