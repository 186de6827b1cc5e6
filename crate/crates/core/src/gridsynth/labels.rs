use image::RgbImage;

use super::BACKGROUND;

/// Width of the label strips added above and left of the grid.
pub const GUTTER_PX: u32 = 24;
pub const DIGIT_WIDTH: u32 = 5;
pub const DIGIT_HEIGHT: u32 = 7;
/// Each font pixel becomes a `DIGIT_SCALE`×`DIGIT_SCALE` block.
pub const DIGIT_SCALE: u32 = 2;
const DIGIT_SPACING: u32 = 2;
const INK: [u8; 3] = [0, 0, 0];

// 5×7 digits, one row per byte, most significant of the low five bits on the left.
const FONT: [[u8; 7]; 10] = [
    [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
    [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
    [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
    [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
    [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
    [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
    [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
    [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
    [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
    [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
];

/// Row-major on/off pixels of a digit in the unscaled font.
pub fn digit_bitmap(digit: u8) -> [[bool; 5]; 7] {
    let mut out = [[false; 5]; 7];
    for (y, bits) in FONT[usize::from(digit % 10)].iter().enumerate() {
        for (x, px) in out[y].iter_mut().enumerate() {
            *px = bits & (0x10 >> x) != 0;
        }
    }
    out
}

fn text_width(text: &str) -> u32 {
    let n = text.len() as u32;
    n * DIGIT_WIDTH * DIGIT_SCALE + n.saturating_sub(1) * DIGIT_SPACING
}

fn draw_number(img: &mut RgbImage, value: usize, cx: u32, cy: u32) {
    let text = value.to_string();
    let h = DIGIT_HEIGHT * DIGIT_SCALE;
    let mut x = cx - text_width(&text) / 2;
    let y = cy - h / 2;
    for ch in text.bytes() {
        let bitmap = digit_bitmap(ch - b'0');
        for (fy, row) in bitmap.iter().enumerate() {
            for (fx, &on) in row.iter().enumerate() {
                if !on {
                    continue;
                }
                for sy in 0..DIGIT_SCALE {
                    for sx in 0..DIGIT_SCALE {
                        img.put_pixel(
                            x + fx as u32 * DIGIT_SCALE + sx,
                            y + fy as u32 * DIGIT_SCALE + sy,
                            image::Rgb(INK),
                        );
                    }
                }
            }
        }
        x += DIGIT_WIDTH * DIGIT_SCALE + DIGIT_SPACING;
    }
}

/// Adds a top strip with column numbers and a left strip with row numbers.
/// The grid itself is copied unchanged at offset (`GUTTER_PX`, `GUTTER_PX`).
pub fn render_labeled(grid: &RgbImage, rows: usize, cols: usize, block_px: u32) -> RgbImage {
    let mut out = RgbImage::from_pixel(
        grid.width() + GUTTER_PX,
        grid.height() + GUTTER_PX,
        image::Rgb(BACKGROUND),
    );
    image::imageops::replace(&mut out, grid, i64::from(GUTTER_PX), i64::from(GUTTER_PX));
    let mid = GUTTER_PX / 2;
    for c in 1..=cols {
        let cx = GUTTER_PX + (c as u32 - 1) * block_px + block_px / 2;
        draw_number(&mut out, c, cx, mid);
    }
    for r in 1..=rows {
        let cy = GUTTER_PX + (r as u32 - 1) * block_px + block_px / 2;
        draw_number(&mut out, r, mid, cy);
    }
    out
}
