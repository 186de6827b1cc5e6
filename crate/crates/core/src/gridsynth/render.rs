use image::RgbImage;
use tiny_skia::{Mask, Transform};

use super::{GenError, GridSpec, StimulusRecord, BACKGROUND};
use crate::icon_store::{IconAsset, Outline};
use crate::perturb::{PerturbationSpec, ENLARGE_RANGE, OFFSET_RANGE};

/// Share of the cell side given to the glyph's unit square at nominal scale.
pub const NOMINAL_FILL: f32 = 0.8;
const PIVOT_RASTER: u32 = 512;
// Pixels kept free between the worst-case transformed glyph and the cell edge.
const EDGE_GUARD_PX: f32 = 1.0;

/// An icon prepared for rendering.
#[derive(Debug, Clone)]
pub struct Glyph {
    outlines: Vec<Outline>,
    /// Area centroid in unit-square coordinates; scaling and rotation pivot.
    pub pivot: (f32, f32),
    reach: f32,
    pivot_offset: f32,
}

impl Glyph {
    pub fn new(icon: &IconAsset) -> Result<Self, GenError> {
        let outlines = icon.outlines().map_err(GenError::RenderFailure)?;
        Self::from_outlines(outlines)
    }

    pub fn from_outlines(outlines: Vec<Outline>) -> Result<Self, GenError> {
        let mut mask =
            Mask::new(PIVOT_RASTER, PIVOT_RASTER).ok_or_else(|| GenError::RenderFailure("mask allocation".into()))?;
        let k = PIVOT_RASTER as f32;
        for o in &outlines {
            mask.fill_path(&o.path, o.rule, true, Transform::from_scale(k, k));
        }
        let (mut sum, mut sx, mut sy) = (0f64, 0f64, 0f64);
        for (i, &c) in mask.data().iter().enumerate() {
            if c > 0 {
                let c = f64::from(c);
                sum += c;
                sx += c * ((i as u32 % PIVOT_RASTER) as f64 + 0.5);
                sy += c * ((i as u32 / PIVOT_RASTER) as f64 + 0.5);
            }
        }
        if sum == 0.0 {
            return Err(GenError::RenderFailure("glyph covers no pixels".into()));
        }
        let pivot = ((sx / sum / f64::from(k)) as f32, (sy / sum / f64::from(k)) as f32);
        let reach = outlines
            .iter()
            .flat_map(|o| o.path.points().iter())
            .map(|p| (p.x - pivot.0).hypot(p.y - pivot.1))
            .fold(0.0, f32::max);
        let pivot_offset = (pivot.0 - 0.5).abs().max((pivot.1 - 0.5).abs());
        Ok(Self {
            outlines,
            pivot,
            reach,
            pivot_offset,
        })
    }

    /// Side in pixels of the glyph's unit square at nominal scale. Capped so
    /// that the largest enlargement combined with any rotation and the
    /// largest offset still stays inside the cell.
    pub fn side_px(&self, block_px: u32) -> f32 {
        let block = block_px as f32;
        let room = (0.5 - OFFSET_RANGE.1 as f32) * block - EDGE_GUARD_PX;
        let fit = room / (self.pivot_offset + ENLARGE_RANGE.1 as f32 * self.reach);
        (NOMINAL_FILL * block).min(fit)
    }

    fn transform(&self, block_px: u32, spec: Option<&PerturbationSpec>) -> Transform {
        let block = block_px as f32;
        let side = self.side_px(block_px);
        let scale = spec.and_then(|s| s.scale).unwrap_or(1.0) as f32;
        let angle = spec.and_then(|s| s.angle_deg).unwrap_or(0.0) as f32;
        let dx = spec.and_then(|s| s.dx_frac).unwrap_or(0.0) as f32;
        let dy = spec.and_then(|s| s.dy_frac).unwrap_or(0.0) as f32;
        let px = block / 2.0 + (self.pivot.0 - 0.5) * side + dx * block;
        let py = block / 2.0 + (self.pivot.1 - 0.5) * side + dy * block;
        Transform::from_translate(-self.pivot.0, -self.pivot.1)
            .post_scale(side * scale, side * scale)
            .post_rotate(angle)
            .post_translate(px, py)
    }
}

/// Anti-aliased coverage of one cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    pub size: u32,
    pub coverage: Vec<u8>,
}

/// Rasterizes the glyph into a `block_px` square. `spec` applies the size,
/// rotation and position of an odd item; `None` renders a distractor.
pub fn render_tile(glyph: &Glyph, block_px: u32, spec: Option<&PerturbationSpec>) -> Result<Tile, GenError> {
    let mut mask = Mask::new(block_px, block_px)
        .ok_or_else(|| GenError::RenderFailure(format!("cannot allocate a {block_px} px tile")))?;
    let ts = glyph.transform(block_px, spec);
    for o in &glyph.outlines {
        mask.fill_path(&o.path, o.rule, true, ts);
    }
    Ok(Tile {
        size: block_px,
        coverage: mask.take(),
    })
}

fn shade(coverage: u8, fill: [u8; 3]) -> [u8; 3] {
    let c = u32::from(coverage);
    let mut out = [0u8; 3];
    for i in 0..3 {
        let v = u32::from(fill[i]) * c + u32::from(BACKGROUND[i]) * (255 - c);
        out[i] = ((v + 127) / 255) as u8;
    }
    out
}

fn paint(img: &mut RgbImage, tile: &Tile, fill: [u8; 3], x0: u32, y0: u32) {
    let mut lut = [[0u8; 3]; 256];
    for (c, entry) in lut.iter_mut().enumerate() {
        *entry = shade(c as u8, fill);
    }
    for ty in 0..tile.size {
        for tx in 0..tile.size {
            let c = tile.coverage[(ty * tile.size + tx) as usize];
            if c > 0 {
                img.put_pixel(x0 + tx, y0 + ty, image::Rgb(lut[c as usize]));
            }
        }
    }
}

/// Renders a grid whose cell `odd` (1-based row, column) carries `spec`.
pub fn render_grid(
    glyph: &Glyph,
    grid: &GridSpec,
    odd: (usize, usize),
    spec: &PerturbationSpec,
) -> Result<RgbImage, GenError> {
    grid.validate()?;
    let base = render_tile(glyph, grid.block_px, None)?;
    let odd_tile = render_tile(glyph, grid.block_px, Some(spec))?;
    let (base_fill, odd_fill) = spec.display_fills();
    let mut img = RgbImage::from_pixel(grid.width(), grid.height(), image::Rgb(grid.background));
    for r in 1..=grid.rows {
        for c in 1..=grid.cols {
            let x0 = grid.margin_px + (c as u32 - 1) * grid.block_px;
            let y0 = grid.margin_px + (r as u32 - 1) * grid.block_px;
            if (r, c) == odd {
                paint(&mut img, &odd_tile, odd_fill, x0, y0);
            } else {
                paint(&mut img, &base, base_fill, x0, y0);
            }
        }
    }
    Ok(img)
}

/// Renders a record from its metadata alone, with index labels when the
/// record is marked labeled.
pub fn render_record(record: &StimulusRecord, glyph: &Glyph) -> Result<RgbImage, GenError> {
    let grid = render_grid(glyph, &record.grid(), record.odd_cell(), &record.spec())?;
    if record.labeled {
        Ok(super::labels::render_labeled(
            &grid,
            record.rows,
            record.cols,
            record.block_px,
        ))
    } else {
        Ok(grid)
    }
}

/// Renders a single standalone cell.
pub fn render_cell(
    glyph: &Glyph,
    block_px: u32,
    fill: [u8; 3],
    spec: Option<&PerturbationSpec>,
) -> Result<RgbImage, GenError> {
    let tile = render_tile(glyph, block_px, spec)?;
    let mut img = RgbImage::from_pixel(block_px, block_px, image::Rgb(BACKGROUND));
    paint(&mut img, &tile, fill, 0, 0);
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icon_store::{normalize_svg, parse_outlines, polygon};

    fn square_glyph() -> Glyph {
        let path = polygon(&[(0.05, 0.05), (0.95, 0.05), (0.95, 0.95), (0.05, 0.95)]).unwrap();
        Glyph::from_outlines(vec![Outline {
            path,
            rule: tiny_skia::FillRule::Winding,
        }])
        .unwrap()
    }

    #[test]
    fn shade_endpoints() {
        assert_eq!(shade(0, [10, 20, 30]), BACKGROUND);
        assert_eq!(shade(255, [10, 20, 30]), [10, 20, 30]);
    }

    #[test]
    fn square_pivot_is_center() {
        let g = square_glyph();
        assert!((g.pivot.0 - 0.5).abs() < 1e-3 && (g.pivot.1 - 0.5).abs() < 1e-3);
    }

    #[test]
    fn worst_case_odd_tile_does_not_touch_edges() {
        let doc = normalize_svg(crate::icon_store::synthetic::icon_svg(11).as_bytes()).unwrap();
        let g = Glyph::from_outlines(parse_outlines(&doc).unwrap()).unwrap();
        for block in [50u32, 60, 80, 150] {
            for angle in [-25.0, 25.0] {
                let spec = PerturbationSpec {
                    attributes: Default::default(),
                    delta_e: None,
                    base_lab: None,
                    odd_lab: None,
                    scale: Some(1.15),
                    angle_deg: Some(angle),
                    dx_frac: Some(0.12),
                    dy_frac: Some(-0.12),
                };
                let t = render_tile(&g, block, Some(&spec)).unwrap();
                let n = block as usize;
                for i in 0..n {
                    for edge in [i, (n - 1) * n + i, i * n, i * n + n - 1] {
                        assert_eq!(t.coverage[edge], 0, "block {block} angle {angle}");
                    }
                }
            }
        }
    }
}
