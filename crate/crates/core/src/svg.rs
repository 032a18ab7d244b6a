//! Minimal native SVG line plots for diagnostics (reliability diagrams,
//! Qini curves). Data CSVs remain the primary artifact; these are optional
//! visual companions.

use std::fmt::Write as _;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 480.0;
const H: f64 = 360.0;
const MARGIN: f64 = 48.0;

/// Plot series on [x_lo, x_hi] x [y_lo, y_hi] with an optional y = x
/// reference diagonal.
pub fn line_plot(
    title: &str,
    bounds: ((f64, f64), (f64, f64)),
    diagonal: bool,
    series: &[Series<'_>],
) -> String {
    let ((x_lo, x_hi), (y_lo, y_hi)) = bounds;
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y_lo) / (y_hi - y_lo) * (H - 2.0 * MARGIN);
    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = write!(
        svg,
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>",
        W / 2.0
    );
    // axes
    let _ = write!(
        svg,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>",
        m = MARGIN,
        r = W - MARGIN,
        t = MARGIN,
        b = H - MARGIN
    );
    for (v, label) in [(x_lo, format!("{x_lo}")), (x_hi, format!("{x_hi}"))] {
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{label}</text>",
            sx(v),
            H - MARGIN + 14.0
        );
    }
    for (v, label) in [(y_lo, format!("{y_lo}")), (y_hi, format!("{y_hi}"))] {
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{label}</text>",
            MARGIN - 6.0,
            sy(v) + 3.0
        );
    }
    if diagonal {
        let _ = write!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>",
            sx(x_lo),
            sy(y_lo.max(x_lo)),
            sx(x_hi.min(y_hi)),
            sy(x_hi.min(y_hi))
        );
    }
    for (si, s) in series.iter().enumerate() {
        let mut path = String::new();
        for (i, &(x, y)) in s.points.iter().enumerate() {
            let _ = write!(path, "{}{},{}", if i == 0 { "M" } else { " L" }, sx(x), sy(y));
        }
        let _ = write!(
            svg,
            "<path d=\"{path}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            s.color
        );
        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">{}</text>",
            W - MARGIN - 120.0,
            MARGIN + 16.0 * (si as f64 + 1.0),
            s.color,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_is_deterministic_and_wellformed() {
        let series = [Series {
            label: "coverage",
            color: "#1f77b4",
            points: vec![(0.05, 0.1), (0.5, 0.55), (0.95, 0.9)],
        }];
        let a = line_plot("reliability", ((0.0, 1.0), (0.0, 1.0)), true, &series);
        let b = line_plot("reliability", ((0.0, 1.0), (0.0, 1.0)), true, &series);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
    }
}
