//! Flattening of arbitrary SVG documents into single-fill silhouettes inside
//! a padded unit square.

use std::fmt::Write as _;

use tiny_skia::{FillRule, Path, PathBuilder, PathSegment, Rect, Transform};

/// Side of the normalized viewbox.
pub const UNIT_VIEWBOX: [f64; 4] = [0.0, 0.0, 1.0, 1.0];
/// Margin between the glyph's tight bounds and the viewbox edge.
pub const PADDING: f32 = 0.05;

const SPAN: f32 = 1.0 - 2.0 * PADDING;
// Documents already within this distance of the target layout are left
// untouched so normalization is a fixed point.
const LAYOUT_TOLERANCE: f32 = 1e-4;
const DECIMALS: usize = 5;

/// One filled outline of a glyph.
#[derive(Debug, Clone)]
pub struct Outline {
    pub path: Path,
    pub rule: FillRule,
}

/// Parses a document and returns every visible fill and stroke as a filled
/// outline in canvas coordinates. Paint, opacity, clipping and text are
/// discarded.
pub fn parse_outlines(bytes: &[u8]) -> Result<Vec<Outline>, String> {
    let tree = usvg::Tree::from_data(bytes, &usvg::Options::default()).map_err(|e| e.to_string())?;
    let extent = tree.size().width().max(tree.size().height()).max(f32::EPSILON);
    let mut out = Vec::new();
    collect(tree.root(), extent, &mut out);
    if out.is_empty() {
        return Err("document has no drawable geometry".into());
    }
    Ok(out)
}

fn collect(group: &usvg::Group, extent: f32, out: &mut Vec<Outline>) {
    for node in group.children() {
        match node {
            usvg::Node::Group(g) => collect(g, extent, out),
            usvg::Node::Path(p) if p.is_visible() => {
                let ts = p.abs_transform();
                // Two-point paths (lines) enclose no area when filled.
                let fillable = p.data().points().len() > 2;
                if let Some(fill) = p.fill().filter(|_| fillable) {
                    let rule = match fill.rule() {
                        usvg::FillRule::NonZero => FillRule::Winding,
                        usvg::FillRule::EvenOdd => FillRule::EvenOdd,
                    };
                    if let Some(path) = p.data().clone().transform(ts) {
                        out.push(Outline { path, rule });
                    }
                }
                if let Some(stroke) = p.stroke() {
                    let (sx, sy) = ts.get_scale();
                    let res_scale = sx.max(sy).max(f32::EPSILON) * 1000.0 / extent;
                    let outline = p
                        .data()
                        .stroke(&stroke.to_tiny_skia(), res_scale)
                        .and_then(|s| s.transform(ts));
                    if let Some(path) = outline {
                        out.push(Outline {
                            path,
                            rule: FillRule::Winding,
                        });
                    }
                }
            }
            _ => {}
        }
    }
}

fn union_bounds(outlines: &[Outline]) -> Option<Rect> {
    let mut acc: Option<(f32, f32, f32, f32)> = None;
    for o in outlines {
        let b = o.path.compute_tight_bounds()?;
        acc = Some(match acc {
            None => (b.left(), b.top(), b.right(), b.bottom()),
            Some((l, t, r, bt)) => (l.min(b.left()), t.min(b.top()), r.max(b.right()), bt.max(b.bottom())),
        });
    }
    let (l, t, r, b) = acc?;
    Rect::from_ltrb(l, t, r, b)
}

/// Transform that centers `bounds` in the unit square with the longer side
/// spanning `1 - 2 * PADDING`, or identity if it already does.
fn layout_transform(bounds: Rect) -> Option<Transform> {
    let side = bounds.width().max(bounds.height());
    if !side.is_finite() || side <= f32::EPSILON {
        return None;
    }
    let cx = (bounds.left() + bounds.right()) / 2.0;
    let cy = (bounds.top() + bounds.bottom()) / 2.0;
    if (side - SPAN).abs() < LAYOUT_TOLERANCE
        && (cx - 0.5).abs() < LAYOUT_TOLERANCE
        && (cy - 0.5).abs() < LAYOUT_TOLERANCE
    {
        return Some(Transform::identity());
    }
    let k = SPAN / side;
    Some(
        Transform::from_translate(-cx, -cy)
            .post_scale(k, k)
            .post_translate(0.5, 0.5),
    )
}

fn push_number(buf: &mut String, v: f32) {
    let mut v = f64::from(v);
    if v.abs() < 0.5e-5 {
        v = 0.0;
    }
    let _ = write!(buf, "{v:.DECIMALS$}");
}

fn push_point(buf: &mut String, p: tiny_skia::Point) {
    push_number(buf, p.x);
    buf.push(' ');
    push_number(buf, p.y);
}

fn path_data(path: &Path) -> String {
    let mut d = String::new();
    for seg in path.segments() {
        if !d.is_empty() {
            d.push(' ');
        }
        match seg {
            PathSegment::MoveTo(p) => {
                d.push_str("M ");
                push_point(&mut d, p);
            }
            PathSegment::LineTo(p) => {
                d.push_str("L ");
                push_point(&mut d, p);
            }
            PathSegment::QuadTo(c, p) => {
                d.push_str("Q ");
                push_point(&mut d, c);
                d.push(' ');
                push_point(&mut d, p);
            }
            PathSegment::CubicTo(c1, c2, p) => {
                d.push_str("C ");
                push_point(&mut d, c1);
                d.push(' ');
                push_point(&mut d, c2);
                d.push(' ');
                push_point(&mut d, p);
            }
            PathSegment::Close => d.push('Z'),
        }
    }
    d
}

/// Normalizes a vector document into a black silhouette centered in the unit
/// square. Idempotent: a normalized document maps to identical bytes.
pub fn normalize_svg(bytes: &[u8]) -> Result<Vec<u8>, String> {
    let outlines = parse_outlines(bytes)?;
    let bounds = union_bounds(&outlines).ok_or("glyph has empty bounds")?;
    let ts = layout_transform(bounds).ok_or("glyph is degenerate (zero width and height)")?;

    let mut svg =
        String::from("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1\" height=\"1\" viewBox=\"0 0 1 1\">\n");
    for o in outlines {
        let path = if ts.is_identity() {
            o.path
        } else {
            o.path.transform(ts).ok_or("transform produced invalid geometry")?
        };
        let rule = match o.rule {
            FillRule::Winding => "nonzero",
            FillRule::EvenOdd => "evenodd",
        };
        let _ = writeln!(
            svg,
            "<path fill=\"#000\" fill-rule=\"{rule}\" d=\"{}\"/>",
            path_data(&path)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg.into_bytes())
}

/// Largest distance from the unit-square center to any path point (control
/// points included, so it bounds the filled area).
pub fn glyph_radius(outlines: &[Outline]) -> f32 {
    outlines
        .iter()
        .flat_map(|o| o.path.points().iter())
        .map(|p| (p.x - 0.5).hypot(p.y - 0.5))
        .fold(0.0, f32::max)
}

/// Builds a closed polygon path. Used by fixtures and tests.
pub fn polygon(points: &[(f32, f32)]) -> Option<Path> {
    let (first, rest) = points.split_first()?;
    let mut pb = PathBuilder::new();
    pb.move_to(first.0, first.1);
    for p in rest {
        pb.line_to(p.0, p.1);
    }
    pb.close();
    pb.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE_24: &str = r##"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 24 24">
        <rect x="4" y="8" width="16" height="8" fill="#ff0000"/>
        <circle cx="12" cy="12" r="2" fill="#00ff00"/>
    </svg>"##;

    #[test]
    fn centers_and_pads() {
        let doc = normalize_svg(SQUARE_24.as_bytes()).unwrap();
        let outlines = parse_outlines(&doc).unwrap();
        let b = union_bounds(&outlines).unwrap();
        assert!(
            (b.left() - 0.05).abs() < 1e-4 && (b.right() - 0.95).abs() < 1e-4,
            "{b:?}"
        );
        assert!(
            (b.top() - 0.275).abs() < 1e-4 && (b.bottom() - 0.725).abs() < 1e-4,
            "{b:?}"
        );
        let text = String::from_utf8(doc).unwrap();
        assert!(text.contains("viewBox=\"0 0 1 1\""));
        assert!(!text.contains("#ff0000") && !text.contains("#00ff00"));
    }

    #[test]
    fn normalization_is_idempotent() {
        let once = normalize_svg(SQUARE_24.as_bytes()).unwrap();
        let twice = normalize_svg(&once).unwrap();
        assert_eq!(String::from_utf8_lossy(&once), String::from_utf8_lossy(&twice));
    }

    #[test]
    fn strokes_become_outlines() {
        let doc = r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 10 10">
            <line x1="1" y1="1" x2="9" y2="9" stroke="black" stroke-width="1"/></svg>"#;
        let outlines = parse_outlines(doc.as_bytes()).unwrap();
        assert_eq!(outlines.len(), 1);
        assert!(normalize_svg(doc.as_bytes()).is_ok());
    }

    #[test]
    fn rejects_garbage_and_empty_documents() {
        assert!(normalize_svg(b"not xml at all").is_err());
        let empty = r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 10 10"></svg>"#;
        assert!(normalize_svg(empty.as_bytes()).is_err());
    }
}
