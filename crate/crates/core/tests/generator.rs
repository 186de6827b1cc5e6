mod common;

use oddgrid_core::color::{delta_e, srgb_to_lab};
use oddgrid_core::gridsynth::inspect::{
    area_centroid, cell_crop, coverage, modal_fill, outlier_cells, read_number, register_rotation,
};
use oddgrid_core::gridsynth::{
    regenerate, render_record, synthesize, BuildOptions, DatasetPlan, GridOverride, Split, StimulusRecord, GUTTER_PX,
};
use oddgrid_core::perturb::{Attribute, AttributeSet};
use oddgrid_core::rng;
use rayon::prelude::*;

#[test]
fn every_test_stimulus_has_exactly_one_odd_cell() {
    let pools = common::pools();
    let records = common::test_split(5, &pools);
    assert_eq!(records.len(), 1400);
    let glyphs = common::glyphs(pools.curated.as_ref().unwrap());
    records.par_iter().for_each(|r| {
        let img = render_record(r, &glyphs[&r.icon_id]).unwrap();
        assert_eq!(outlier_cells(&img, &r.grid(), (0, 0)), vec![r.odd_cell()], "{}", r.id);
    });
}

#[test]
fn regeneration_from_metadata_is_exact() {
    let pools = common::pools();
    let records = common::test_split(21, &pools);
    let curated = pools.curated.as_ref().unwrap();
    let glyphs = common::glyphs(curated);
    let plan = DatasetPlan::default();
    let plan = plan.split(Split::Test).unwrap();
    for local in (0..records.len()).step_by(100) {
        let again = regenerate(21, curated, plan, local, BuildOptions::default()).unwrap();
        assert_eq!(
            serde_json::to_string(&again).unwrap(),
            serde_json::to_string(&records[local]).unwrap()
        );
        let from_line: StimulusRecord = serde_json::from_str(&serde_json::to_string(&records[local]).unwrap()).unwrap();
        let a = render_record(&records[local], &glyphs[&records[local].icon_id]).unwrap();
        let b = render_record(&from_line, &glyphs[&from_line.icon_id]).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn odd_cell_placement_is_uniform() {
    let icon = &common::curated().assets()[0].clone();
    let over = GridOverride {
        rows: Some(5),
        cols: Some(5),
        block_px: None,
    };
    let n = 25_000;
    let mut counts = [0usize; 25];
    for i in 0..n {
        let mut r = rng::stream(99, i);
        let rec = synthesize(&mut r, icon, 1, Some(AttributeSet::single(Attribute::Size)), Some(over)).unwrap();
        counts[(rec.odd_row - 1) * 5 + rec.odd_col - 1] += 1;
    }
    let expected = n as f64 / 25.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 24 degrees of freedom, p = 0.001.
    assert!(chi2 < 51.18, "chi-square {chi2}");
}

fn rotation_limit(r: &StimulusRecord) -> f64 {
    r.angle_deg.map_or(10.0, |a| a.abs() + 10.0)
}

#[test]
fn listed_attributes_are_visible_in_pixels() {
    let pools = common::pools();
    let records = common::test_split(8, &pools);
    let glyphs = common::glyphs(pools.curated.as_ref().unwrap());
    // Every fifth record keeps the check affordable while covering every type.
    records.par_iter().step_by(5).for_each(|r| {
        let img = render_record(r, &glyphs[&r.icon_id]).unwrap();
        let grid = r.grid();
        let (base_row, base_col) = if r.odd_cell() == (1, 1) { (1, 2) } else { (1, 1) };
        let base = cell_crop(&img, &grid, base_row, base_col, (0, 0));
        let odd = cell_crop(&img, &grid, r.odd_row, r.odd_col, (0, 0));
        let (base_fill, odd_fill) = r.spec().display_fills();
        let base_cov = coverage(&base, base_fill);
        let odd_cov = coverage(&odd, odd_fill);
        let (base_area, base_c) = area_centroid(&base_cov, r.block_px);
        let (odd_area, odd_c) = area_centroid(&odd_cov, r.block_px);

        if r.types.contains(Attribute::Color) {
            let shown = delta_e(
                srgb_to_lab(modal_fill(&base).unwrap()),
                srgb_to_lab(modal_fill(&odd).unwrap()),
            );
            assert!(shown > 1.0, "{}: ΔE {shown}", r.id);
        }
        let scale = r.scale.unwrap_or(1.0);
        let ratio = odd_area / base_area;
        assert!(
            (ratio / (scale * scale) - 1.0).abs() < 0.05,
            "{}: area ratio {ratio} for scale {scale}",
            r.id
        );

        let shift = (odd_c.0 - base_c.0).hypot(odd_c.1 - base_c.1);
        let expected = r.dx_frac.unwrap_or(0.0).hypot(r.dy_frac.unwrap_or(0.0)) * f64::from(r.block_px);
        assert!(
            (shift - expected).abs() < 1.0,
            "{}: shift {shift} expected {expected}",
            r.id
        );

        if let Some(angle) = r.angle_deg {
            let got = register_rotation(&base_cov, &odd_cov, r.block_px, scale, rotation_limit(r));
            assert!((got - angle).abs() < 2.0, "{}: registered {got} for {angle}", r.id);
        }
    });
}

#[test]
fn labeled_grids_print_their_indices() {
    let pools = common::pools();
    let curated = pools.curated.as_ref().unwrap();
    let glyphs = common::glyphs(curated);
    let plan = DatasetPlan::default();
    let plan = plan.split(Split::Test).unwrap();
    let opts = BuildOptions {
        labeled: true,
        ..BuildOptions::default()
    };
    for local in [0, 333, 777, 1399] {
        let r = regenerate(3, curated, plan, local, opts).unwrap();
        let img = render_record(&r, &glyphs[&r.icon_id]).unwrap();
        assert_eq!(img.width(), r.grid().width() + GUTTER_PX);
        let bare = render_record(
            &StimulusRecord {
                labeled: false,
                ..r.clone()
            },
            &glyphs[&r.icon_id],
        )
        .unwrap();
        for (x, y, p) in bare.enumerate_pixels() {
            assert_eq!(img.get_pixel(x + GUTTER_PX, y + GUTTER_PX), p);
        }
        for c in 1..=r.cols {
            let x = GUTTER_PX + (c as u32 - 1) * r.block_px;
            assert_eq!(
                read_number(&img, x, 0, r.block_px, GUTTER_PX),
                Some(c),
                "{} column {c}",
                r.id
            );
        }
        for row in 1..=r.rows {
            let y = GUTTER_PX + (row as u32 - 1) * r.block_px;
            assert_eq!(
                read_number(&img, 0, y, GUTTER_PX, r.block_px),
                Some(row),
                "{} row {row}",
                r.id
            );
        }
        assert_eq!(
            outlier_cells(&img, &r.grid(), (GUTTER_PX, GUTTER_PX)),
            vec![r.odd_cell()]
        );
    }
}

#[test]
fn resolution_override_only_changes_block_size() {
    let curated = common::curated();
    let plan = DatasetPlan::default();
    let plan = plan.split(Split::Test).unwrap();
    for px in [50, 100, 150] {
        let opts = BuildOptions {
            grid_override: Some(GridOverride::resolution(px)),
            labeled: false,
        };
        for local in [0, 500, 1000] {
            let a = regenerate(4, &curated, plan, local, BuildOptions::default()).unwrap();
            let b = regenerate(4, &curated, plan, local, opts).unwrap();
            assert_eq!(b.block_px, px);
            assert_eq!(
                StimulusRecord {
                    block_px: a.block_px,
                    ..b
                },
                a
            );
        }
    }
}
