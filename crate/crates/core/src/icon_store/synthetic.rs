//! Procedural icon documents for fixtures and offline demos.
//!
//! Every glyph is an asymmetric polygon so rotation and flips are visible.
//! Documents deliberately vary viewbox, paint, holes and strokes to exercise
//! normalization.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rayon::prelude::*;

use super::{Category, IconAsset, IconManifest, IconSource};

const PALETTE: [&str; 5] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd"];

fn star_points(rng: &mut ChaCha8Rng, cx: f64, cy: f64, radius: f64) -> Vec<(f64, f64)> {
    let n = rng.random_range(5..=9);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    (0..n)
        .map(|i| {
            let t = phase + std::f64::consts::TAU * i as f64 / n as f64;
            let r = radius * rng.random_range(0.45..1.0);
            (cx + r * t.cos(), cy + r * t.sin())
        })
        .collect()
}

fn points_attr(points: &[(f64, f64)]) -> String {
    let mut s = String::new();
    for (i, (x, y)) in points.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x:.3},{y:.3}");
    }
    s
}

/// A deterministic icon document for `seed`.
pub fn icon_svg(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extent = [16.0, 24.0, 48.0, 100.0, 512.0][rng.random_range(0..5)];
    let mut svg = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {extent} {extent}\">\n");
    let main = star_points(&mut rng, extent * 0.5, extent * 0.5, extent * 0.4);
    let fill = PALETTE[rng.random_range(0..PALETTE.len())];
    let _ = writeln!(svg, "  <polygon points=\"{}\" fill=\"{fill}\"/>", points_attr(&main));
    match rng.random_range(0..3) {
        0 => {
            let hole = star_points(&mut rng, extent * 0.5, extent * 0.5, extent * 0.12);
            let outer = points_attr(&main).replace(' ', " L ");
            let inner = points_attr(&hole).replace(' ', " L ");
            let _ = writeln!(
                svg,
                "  <path fill-rule=\"evenodd\" fill=\"{fill}\" d=\"M {outer} Z M {inner} Z\"/>"
            );
        }
        1 => {
            let accent = PALETTE[rng.random_range(0..PALETTE.len())];
            let r = extent * rng.random_range(0.05..0.12);
            let cx = extent * rng.random_range(0.6..0.85);
            let _ = writeln!(
                svg,
                "  <circle cx=\"{cx:.3}\" cy=\"{:.3}\" r=\"{r:.3}\" fill=\"{accent}\"/>",
                extent * 0.2
            );
        }
        _ => {
            let w = extent * 0.04;
            let _ = writeln!(
                svg,
                "  <line x1=\"{:.3}\" y1=\"{:.3}\" x2=\"{:.3}\" y2=\"{:.3}\" stroke=\"#000\" stroke-width=\"{w:.3}\"/>",
                extent * 0.1,
                extent * 0.9,
                extent * 0.45,
                extent * 0.6
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Category of the `index`-th curated fixture icon.
pub fn curated_category(index: usize) -> Category {
    Category::CURATED[index % Category::CURATED.len()]
}

/// Writes `count` icon documents named `{prefix}{i:05}.svg` into `dir` and
/// returns an (id, category) table cycling through the curated categories.
pub fn write_icon_dir(dir: &Path, prefix: &str, count: usize, seed: u64) -> io::Result<String> {
    fs::create_dir_all(dir)?;
    let mut table = String::from("id,category\n");
    for i in 0..count {
        let id = format!("{prefix}{i:05}");
        let doc = icon_svg(seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
        fs::write(dir.join(format!("{id}.svg")), doc)?;
        let _ = writeln!(table, "{id},{}", curated_category(i));
    }
    Ok(table)
}

/// In-memory manifest of `count` fixture icons. Curated manifests cycle
/// through the three categories; training manifests stay uncategorized.
pub fn manifest(prefix: &str, count: usize, seed: u64, source: IconSource) -> IconManifest {
    let assets = (0..count)
        .into_par_iter()
        .map(|i| {
            let category = match source {
                IconSource::TestValCollection => curated_category(i),
                IconSource::TrainCollection => Category::Uncategorized,
            };
            let doc = icon_svg(seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
            IconAsset::from_svg(format!("{prefix}{i:05}"), source, category, doc.as_bytes())
                .expect("fixture icons normalize")
        })
        .collect();
    IconManifest::new(assets).expect("fixture ids are unique")
}
