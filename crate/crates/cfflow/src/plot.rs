//! Static SVG scatter plots of generated samples over training data.

use std::fmt::Write as _;

/// Two point clouds in a shared frame: `background` in grey, `foreground`
/// in red. Coordinates are printed with fixed precision so identical
/// inputs give identical files.
pub fn scatter_svg(title: &str, background: &[(f64, f64)], foreground: &[(f64, f64)]) -> String {
    const SIZE: f64 = 480.0;
    const PAD: f64 = 24.0;
    let all = background.iter().chain(foreground).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 || x1.is_nan() {
        (x0, x1) = (x0 - 1.0, x0 + 1.0);
    }
    if y1 <= y0 || y1.is_nan() {
        (y0, y1) = (y0 - 1.0, y0 + 1.0);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    let span = SIZE - 2.0 * PAD;
    let px = |x: f64| PAD + (x - x0) / (x1 - x0) * span;
    let py = |y: f64| SIZE - PAD - (y - y0) / (y1 - y0) * span;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{PAD}" y="16" font-family="sans-serif" font-size="12">{}</text>"#, escape(title));
    for (pts, colour) in [(background, "#9a9a9a"), (foreground, "#d62728")] {
        let _ = writeln!(s, r#"<g fill="{colour}" fill-opacity="0.5">"#);
        for &(x, y) in pts.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="1.2"/>"#, px(x), py(y));
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, "</svg>");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
