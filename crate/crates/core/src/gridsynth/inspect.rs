//! Measurements taken from rendered pixels alone.
//!
//! Nothing here consults the renderer's transforms; the checks work on raster
//! output plus the display fills recorded in metadata.

use std::collections::HashMap;

use image::RgbImage;

use super::labels::{digit_bitmap, DIGIT_HEIGHT, DIGIT_SCALE, DIGIT_WIDTH};
use super::{GridSpec, BACKGROUND};

/// Crop of cell (`row`, `col`), 1-based, of a grid drawn at `origin`.
pub fn cell_crop(img: &RgbImage, grid: &GridSpec, row: usize, col: usize, origin: (u32, u32)) -> RgbImage {
    let x = origin.0 + grid.margin_px + (col as u32 - 1) * grid.block_px;
    let y = origin.1 + grid.margin_px + (row as u32 - 1) * grid.block_px;
    image::imageops::crop_imm(img, x, y, grid.block_px, grid.block_px).to_image()
}

/// Cells whose pixels differ from the most common cell crop.
pub fn outlier_cells(img: &RgbImage, grid: &GridSpec, origin: (u32, u32)) -> Vec<(usize, usize)> {
    let mut groups: HashMap<Vec<u8>, Vec<(usize, usize)>> = HashMap::new();
    for r in 1..=grid.rows {
        for c in 1..=grid.cols {
            groups
                .entry(cell_crop(img, grid, r, c, origin).into_raw())
                .or_default()
                .push((r, c));
        }
    }
    let majority = groups.values().map(Vec::len).max().unwrap_or(0);
    let mut out: Vec<(usize, usize)> = groups
        .into_values()
        .filter(|cells| cells.len() != majority)
        .flatten()
        .collect();
    out.sort_unstable();
    out
}

/// Per-pixel coverage in [0, 1] recovered by unmixing `fill` from the
/// background on the channel where they differ most.
pub fn coverage(crop: &RgbImage, fill: [u8; 3]) -> Vec<f64> {
    let ch = (0..3)
        .max_by_key(|&i| BACKGROUND[i].abs_diff(fill[i]))
        .expect("three channels");
    let span = f64::from(BACKGROUND[ch]) - f64::from(fill[ch]);
    crop.pixels()
        .map(|p| {
            if span == 0.0 {
                0.0
            } else {
                ((f64::from(BACKGROUND[ch]) - f64::from(p[ch])) / span).clamp(0.0, 1.0)
            }
        })
        .collect()
}

/// Coverage-weighted area (px²) and centroid (px, pixel centers at +0.5).
pub fn area_centroid(cov: &[f64], size: u32) -> (f64, (f64, f64)) {
    let (mut a, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (i, &c) in cov.iter().enumerate() {
        let x = (i as u32 % size) as f64 + 0.5;
        let y = (i as u32 / size) as f64 + 0.5;
        a += c;
        sx += c * x;
        sy += c * y;
    }
    if a == 0.0 {
        return (0.0, (0.0, 0.0));
    }
    (a, (sx / a, sy / a))
}

/// Most frequent non-background color of a crop.
pub fn modal_fill(crop: &RgbImage) -> Option<[u8; 3]> {
    let mut counts: HashMap<[u8; 3], usize> = HashMap::new();
    for p in crop.pixels() {
        if p.0 != BACKGROUND {
            *counts.entry(p.0).or_default() += 1;
        }
    }
    counts.into_iter().max_by_key(|&(c, n)| (n, c)).map(|(c, _)| c)
}

fn bilinear(map: &[f64], size: u32, x: f64, y: f64) -> f64 {
    let (u, v) = (x - 0.5, y - 0.5);
    let (x0, y0) = (u.floor(), v.floor());
    let (fx, fy) = (u - x0, v - y0);
    let at = |xi: f64, yi: f64| {
        if xi < 0.0 || yi < 0.0 || xi >= size as f64 || yi >= size as f64 {
            0.0
        } else {
            map[yi as usize * size as usize + xi as usize]
        }
    };
    at(x0, y0) * (1.0 - fx) * (1.0 - fy)
        + at(x0 + 1.0, y0) * fx * (1.0 - fy)
        + at(x0, y0 + 1.0) * (1.0 - fx) * fy
        + at(x0 + 1.0, y0 + 1.0) * fx * fy
}

fn misfit(base: &[f64], odd: &[f64], size: u32, scale: f64, degrees: f64) -> f64 {
    let (_, cb) = area_centroid(base, size);
    let (_, co) = area_centroid(odd, size);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let mut sum = 0.0;
    for (i, &o) in odd.iter().enumerate() {
        let x = (i as u32 % size) as f64 + 0.5 - co.0;
        let y = (i as u32 / size) as f64 + 0.5 - co.1;
        let bx = cb.0 + (cos * x + sin * y) / scale;
        let by = cb.1 + (-sin * x + cos * y) / scale;
        let d = o - bilinear(base, size, bx, by);
        sum += d * d;
    }
    sum
}

/// On-screen clockwise angle in degrees that best maps the base coverage onto
/// the odd coverage after scaling by `scale` about the centroids. Searches
/// `[-limit, limit]`.
pub fn register_rotation(base: &[f64], odd: &[f64], size: u32, scale: f64, limit: f64) -> f64 {
    let search = |lo: f64, hi: f64, step: f64| {
        let mut best = (f64::INFINITY, lo);
        let mut t = lo;
        while t <= hi + 1e-9 {
            let m = misfit(base, odd, size, scale, t);
            if m < best.0 {
                best = (m, t);
            }
            t += step;
        }
        best.1
    };
    let coarse = search(-limit, limit, 0.5);
    search(coarse - 0.5, coarse + 0.5, 0.02)
}

/// Reads a number printed with the label font inside the given region.
/// Returns `None` unless every ink pixel belongs to a recognized digit.
pub fn read_number(img: &RgbImage, x0: u32, y0: u32, w: u32, h: u32) -> Option<usize> {
    let (dw, dh) = (DIGIT_WIDTH * DIGIT_SCALE, DIGIT_HEIGHT * DIGIT_SCALE);
    let ink = |x: u32, y: u32| img.get_pixel(x, y).0 != BACKGROUND;
    let templates: Vec<[[bool; 5]; 7]> = (0..10).map(digit_bitmap).collect();
    let matches = |x: u32, y: u32, t: &[[bool; 5]; 7]| {
        (0..dh).all(|py| {
            (0..dw).all(|px| ink(x + px, y + py) == t[(py / DIGIT_SCALE) as usize][(px / DIGIT_SCALE) as usize])
        })
    };
    let mut digits = Vec::new();
    let mut claimed = 0usize;
    let mut x = x0;
    while x + dw <= x0 + w {
        let mut hit = None;
        'scan: for y in y0..=(y0 + h).saturating_sub(dh) {
            for (d, t) in templates.iter().enumerate() {
                let inked = t.iter().flatten().any(|&b| b);
                if inked && matches(x, y, t) {
                    hit = Some((d, t));
                    break 'scan;
                }
            }
        }
        match hit {
            Some((d, t)) => {
                digits.push(d);
                claimed += t.iter().flatten().filter(|&&b| b).count() * (DIGIT_SCALE * DIGIT_SCALE) as usize;
                x += dw;
            }
            None => x += 1,
        }
    }
    let total_ink = (y0..y0 + h)
        .flat_map(|y| (x0..x0 + w).map(move |x| (x, y)))
        .filter(|&(x, y)| ink(x, y))
        .count();
    if digits.is_empty() || claimed != total_ink {
        return None;
    }
    Some(digits.into_iter().fold(0, |n, d| n * 10 + d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridsynth::labels::render_labeled;
    use crate::gridsynth::GUTTER_PX;

    #[test]
    fn coverage_inverts_blending() {
        let fill = [40, 90, 200];
        let mut crop = RgbImage::from_pixel(2, 1, image::Rgb(BACKGROUND));
        crop.put_pixel(1, 0, image::Rgb(fill));
        assert_eq!(coverage(&crop, fill), vec![0.0, 1.0]);
        let (a, c) = area_centroid(&coverage(&crop, fill), 2);
        assert_eq!((a, c), (1.0, (1.5, 0.5)));
    }

    #[test]
    fn rotation_of_a_bar_is_recovered() {
        let size = 64u32;
        let bar = |deg: f64| {
            let (s, c) = deg.to_radians().sin_cos();
            (0..size * size)
                .map(|i| {
                    let x = (i % size) as f64 + 0.5 - 32.0;
                    let y = (i / size) as f64 + 0.5 - 32.0;
                    let (u, v) = (c * x + s * y, -s * x + c * y);
                    f64::from(u8::from(u.abs() < 20.0 && v.abs() < 4.0 && u > -12.0))
                })
                .collect::<Vec<_>>()
        };
        let got = register_rotation(&bar(0.0), &bar(12.0), size, 1.0, 30.0);
        assert!((got - 12.0).abs() < 0.5, "{got}");
    }

    #[test]
    fn labels_read_back() {
        let grid = RgbImage::from_pixel(60 * 9, 60 * 9, image::Rgb(BACKGROUND));
        let img = render_labeled(&grid, 9, 9, 60);
        for i in 1..=9u32 {
            let x = GUTTER_PX + (i - 1) * 60;
            assert_eq!(read_number(&img, x, 0, 60, GUTTER_PX), Some(i as usize));
            assert_eq!(read_number(&img, 0, x, GUTTER_PX, 60), Some(i as usize));
        }
        assert_eq!(read_number(&img, GUTTER_PX, GUTTER_PX, 60, 60), None);
    }
}
