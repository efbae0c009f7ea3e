//! SVG pictures of a placement stream.

use std::fmt::Write;

use crate::geometry::Placement;
use crate::numerics::Scalar;

/// Width and height of the SVG viewport in user units.
pub const VIEWPORT: f64 = 1000.0;

/// Draws the placements in a `side x side` square scaled to the viewport,
/// y axis pointing up. One `<rect>` per placement; the container outline is
/// a `<path>` so rectangle counts stay exact.
pub fn render_svg<S: Scalar>(placements: &[Placement<S>], side: f64) -> String {
    let k = VIEWPORT / side;
    let mut out = String::with_capacity(96 * placements.len() + 512);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{v}" height="{v}" viewBox="0 0 {v} {v}">"#,
        v = VIEWPORT
    );
    let _ = writeln!(out, r##"<path d="M0 0H{v}V{v}H0Z" fill="#ffffff" stroke="#000000" stroke-width="1"/>"##, v = VIEWPORT);
    let _ = writeln!(out, r##"<g fill="#9ec5e8" stroke="#1f4e79" stroke-width="0.2">"##);
    for p in placements {
        let x = p.x.to_f64() * k;
        let w = p.w.to_f64() * k;
        let h = p.h.to_f64() * k;
        let y = VIEWPORT - p.y.to_f64() * k - h;
        let _ = writeln!(
            out,
            r#"<rect data-i="{}" x="{x:.4}" y="{y:.4}" width="{w:.4}" height="{h:.4}"/>"#,
            p.index
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Float;

    #[test]
    fn first_rectangle_fills_the_bottom_half() {
        let p = Placement {
            index: 1,
            x: Float(0.0),
            y: Float(0.0),
            w: Float(1.0),
            h: Float(0.5),
            rotated: false,
        };
        let svg = render_svg(&[p], 1.0);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains(r#"x="0.0000" y="500.0000" width="1000.0000" height="500.0000""#));
        assert_eq!(svg.matches("<rect").count(), 1);
    }
}
