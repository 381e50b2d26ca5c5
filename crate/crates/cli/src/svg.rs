//! Minimal hand-rolled SVG scatter plots of 2-D ball features.

use hypack::BallPoint;

const SIZE: f64 = 560.0;
const CENTER: f64 = 280.0;
const SCALE: f64 = 260.0;

/// Renders features inside the unit-ball outline: one circle per feature,
/// congealed/flagged instances filled red, the rest cyan. `guide_radius`
/// draws an optional dashed circle (the packing radius, typically). The
/// timestamp comment is the only line that varies between identical runs.
pub fn scatter_svg(
    features: &[BallPoint],
    flags: &[bool],
    guide_radius: Option<f64>,
    timestamp_secs: u64,
) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!("<!-- generated unix:{timestamp_secs} -->\n"));
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" \
         viewBox=\"0 0 {SIZE} {SIZE}\">\n"
    ));
    out.push_str(&format!(
        "  <rect width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "  <circle cx=\"{CENTER}\" cy=\"{CENTER}\" r=\"{SCALE}\" fill=\"none\" \
         stroke=\"#222222\" stroke-width=\"1.5\"/>\n"
    ));
    if let Some(r) = guide_radius {
        out.push_str(&format!(
            "  <circle cx=\"{CENTER}\" cy=\"{CENTER}\" r=\"{:.3}\" fill=\"none\" \
             stroke=\"#999999\" stroke-width=\"1\" stroke-dasharray=\"6 4\"/>\n",
            r * SCALE
        ));
    }
    for (i, p) in features.iter().enumerate() {
        let c = p.coords();
        let cx = CENTER + c[0] * SCALE;
        let cy = CENTER - c[1] * SCALE;
        let color = if flags.get(i).copied().unwrap_or(false) {
            "#d62728" // congealed: red
        } else {
            "#17becf" // original: cyan
        };
        out.push_str(&format!(
            "  <circle cx=\"{cx:.3}\" cy=\"{cy:.3}\" r=\"3\" fill=\"{color}\" \
             fill-opacity=\"0.85\"/>\n"
        ));
    }
    out.push_str("</svg>\n");
    out
}
