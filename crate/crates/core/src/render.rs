//! Deterministic SVG rendering of scenes and traced ray paths.

use crate::geometry::Point;
use crate::tracer::MirrorScene;
use std::fmt::Write as _;

const PATH_COLORS: [&str; 6] = ["#c0392b", "#2980b9", "#27ae60", "#8e44ad", "#d35400", "#16a085"];

/// Render mirrors, guard walls, the reflecting line and optional ray
/// polylines into an SVG document.
pub fn render_svg(scene: &MirrorScene, paths: &[Vec<Point>]) -> String {
    let ((mut x0, mut y0), (mut x1, mut y1)) = scene.bounding_box();
    for p in paths.iter().flatten() {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    y1 = y1.max(0.0);
    let w = (x1 - x0).max(1e-9);
    let h = (y1 - y0).max(1e-9);
    let margin = 0.05 * w.max(h);
    let (x0, y0, x1, y1) = (x0 - margin, y0 - margin, x1 + margin, y1 + margin);
    let scale = 1000.0 / (x1 - x0).max(y1 - y0);
    let width = (x1 - x0) * scale;
    let height = (y1 - y0) * scale;
    // SVG y grows downward
    let tx = |x: f64| (x - x0) * scale;
    let ty = |y: f64| (y1 - y) * scale;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    let _ = writeln!(
        s,
        r##"<rect width="{width:.1}" height="{height:.1}" fill="white"/>"##
    );
    // the reflecting line
    let _ = writeln!(
        s,
        r##"<line x1="0" y1="{0:.2}" x2="{width:.1}" y2="{0:.2}" stroke="#888" stroke-width="1" stroke-dasharray="6 4"/>"##,
        ty(0.0)
    );
    if let Some(g) = &scene.guard {
        let _ = writeln!(
            s,
            r##"<line x1="0" y1="{0:.2}" x2="{width:.1}" y2="{0:.2}" stroke="#b5651d" stroke-width="1.2"/>"##,
            ty(-g.floor_depth)
        );
        for &wx in &g.wall_xs {
            let _ = writeln!(
                s,
                r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="#b5651d" stroke-width="1.2"/>"##,
                tx(wx),
                ty(0.0),
                ty(-g.floor_depth)
            );
        }
    }
    for seg in &scene.segments {
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="1.4"/>"##,
            tx(seg.a.x),
            ty(seg.a.y),
            tx(seg.b.x),
            ty(seg.b.y)
        );
    }
    for arc in &scene.arcs {
        let pts = arc.sample_points(65);
        let mut d = String::new();
        for (i, p) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, tx(p.x), ty(p.y));
        }
        let _ = writeln!(
            s,
            r##"<path d="{}" fill="none" stroke="black" stroke-width="1.4"/>"##,
            d.trim_end()
        );
    }
    for (k, path) in paths.iter().enumerate() {
        if path.len() < 2 {
            continue;
        }
        let color = PATH_COLORS[k % PATH_COLORS.len()];
        let mut d = String::new();
        for (i, p) in path.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, tx(p.x), ty(p.y));
        }
        let _ = writeln!(
            s,
            r##"<path d="{}" fill="none" stroke="{color}" stroke-width="0.8" opacity="0.85"/>"##,
            d.trim_end()
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::circle_arc;

    #[test]
    fn svg_contains_primitives_and_is_deterministic() {
        let arc = circle_arc(Point::new(0.0, 0.0), 1.0, -2.6, -0.6).unwrap();
        let scene = MirrorScene {
            arcs: vec![arc],
            segments: vec![],
            guard: Some(crate::tracer::Guard {
                floor_depth: 1.5,
                wall_xs: vec![-2.0, 2.0],
            }),
        };
        let path = vec![Point::new(0.0, 0.0), Point::new(0.1, -0.9), Point::new(0.2, 0.0)];
        let a = render_svg(&scene, &[path.clone()]);
        let b = render_svg(&scene, &[path]);
        assert_eq!(a, b);
        assert!(a.contains("<path"));
        assert!(a.contains("</svg>"));
        assert_eq!(a.matches("<line").count(), 4, "axis, floor, two walls");
    }
}
