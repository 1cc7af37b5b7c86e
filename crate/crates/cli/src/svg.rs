//! Minimal SVG scatter plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// One plotted point. Held-out points are drawn hollow.
pub struct Point {
    pub xy: [f64; 2],
    pub label: i64,
    pub held_out: bool,
}

/// Scatter plot with one `<g class="class-LABEL">` group per label, in
/// ascending label order, and a legend.
pub fn scatter(points: &[Point], title: &str) -> String {
    let (lo, hi) = bounds(points);
    let span = [(hi[0] - lo[0]).max(1e-12), (hi[1] - lo[1]).max(1e-12)];
    let inner = SIZE - 2.0 * MARGIN;
    let px = |p: [f64; 2]| {
        [
            MARGIN + (p[0] - lo[0]) / span[0] * inner,
            SIZE - MARGIN - (p[1] - lo[1]) / span[1] * inner,
        ]
    };

    let mut groups: BTreeMap<i64, Vec<&Point>> = BTreeMap::new();
    for p in points {
        groups.entry(p.label).or_default().push(p);
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{inner}" height="{inner}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        SIZE / 2.0,
        MARGIN / 2.0 + 5.0,
        escape(title)
    );
    for (k, (label, members)) in groups.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(s, r#"<g class="class-{label}" fill="{color}" stroke="{color}">"#);
        for p in members {
            let [x, y] = px(p.xy);
            let fill = if p.held_out { r#" fill="none""# } else { "" };
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5"{fill}/>"#);
        }
        let ly = MARGIN + 16.0 + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{ly:.2}" r="4"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" stroke="none">class {label}</text>"#,
            SIZE - MARGIN - 70.0,
            SIZE - MARGIN - 60.0,
            ly + 4.0
        );
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(points: &[Point]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p.xy[k]);
            hi[k] = hi[k].max(p.xy[k]);
        }
    }
    if points.is_empty() {
        return ([0.0; 2], [1.0; 2]);
    }
    // 5% padding so edge markers stay inside the frame
    for k in 0..2 {
        let pad = 0.05 * (hi[k] - lo[k]).max(1e-12);
        lo[k] -= pad;
        hi[k] += pad;
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts() -> Vec<Point> {
        vec![
            Point { xy: [0.0, 0.0], label: 1, held_out: false },
            Point { xy: [1.0, 2.0], label: 0, held_out: true },
            Point { xy: [0.5, 1.0], label: 1, held_out: true },
        ]
    }

    #[test]
    fn groups_follow_label_order() {
        let svg = scatter(&pts(), "a <b>");
        let g0 = svg.find(r#"class="class-0""#).unwrap();
        let g1 = svg.find(r#"class="class-1""#).unwrap();
        assert!(g0 < g1);
        assert_eq!(svg.matches("<g ").count(), 2);
        assert!(svg.contains("a &lt;b&gt;"));
        assert_eq!(svg.matches(r#"r="3.5""#).count(), 3);
        assert_eq!(svg.matches(r#"fill="none"/>"#).count(), 2);
    }

    #[test]
    fn points_stay_inside_frame() {
        let svg = scatter(&pts(), "");
        for cap in svg.split("cx=\"").skip(1) {
            let x: f64 = cap.split('"').next().unwrap().parse().unwrap();
            assert!((MARGIN..=SIZE - MARGIN).contains(&x));
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(scatter(&pts(), "t"), scatter(&pts(), "t"));
    }
}
