use std::collections::BTreeMap;
use std::fs;

use oddgrid_core::icon_store::{
    ingest_dir, normalize_svg, read_category_map, sample_icon, synthetic, Category, IconError, IconSource,
};
use oddgrid_core::rng;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn normalization_is_idempotent(seed in any::<u64>()) {
        let once = normalize_svg(synthetic::icon_svg(seed).as_bytes()).unwrap();
        let twice = normalize_svg(&once).unwrap();
        prop_assert_eq!(once, twice);
    }
}

#[test]
fn curated_ingest_is_stable_and_balanced() {
    let a = tempfile::tempdir().unwrap();
    let table = synthetic::write_icon_dir(a.path(), "ic", 300, 5).unwrap();
    fs::write(a.path().join("categories.csv"), &table).unwrap();
    let cats = read_category_map(&a.path().join("categories.csv")).unwrap();
    fs::remove_file(a.path().join("categories.csv")).unwrap();

    // Same files written in reverse order to a second directory.
    let b = tempfile::tempdir().unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for name in names.iter().rev() {
        fs::copy(a.path().join(name), b.path().join(name)).unwrap();
    }

    let first = ingest_dir(a.path(), IconSource::TestValCollection, Some(&cats)).unwrap();
    let second = ingest_dir(b.path(), IconSource::TestValCollection, Some(&cats)).unwrap();
    assert!(first.failures.is_empty());
    assert_eq!(first.manifest.checksum(), second.manifest.checksum());
    assert_eq!(first.manifest.len(), 300);
    let expected: BTreeMap<Category, usize> = Category::CURATED.iter().map(|&c| (c, 100)).collect();
    assert_eq!(first.manifest.category_counts(), expected);

    fs::remove_file(b.path().join(&names[0])).unwrap();
    match ingest_dir(b.path(), IconSource::TestValCollection, Some(&cats)) {
        Err(IconError::CategoryCountViolation { .. }) => {}
        other => panic!("expected a category violation, got {other:?}"),
    }
}

#[test]
fn icon_sampling_is_uniform() {
    let manifest = synthetic::manifest("u", 300, 1, IconSource::TestValCollection);
    let draws = 300_000u64;
    let mut counts = vec![0usize; 300];
    let index: std::collections::HashMap<&str, usize> = manifest
        .assets()
        .iter()
        .enumerate()
        .map(|(i, a)| (a.id.as_str(), i))
        .collect();
    for i in 0..draws {
        let icon = sample_icon(&manifest, &mut rng::stream(17, i)).unwrap();
        counts[index[icon.id.as_str()]] += 1;
    }
    let p = 1.0 / 300.0;
    let mean = draws as f64 * p;
    let sd = (draws as f64 * p * (1.0 - p)).sqrt();
    for (i, &c) in counts.iter().enumerate() {
        assert!(
            (c as f64 - mean).abs() < 5.0 * sd,
            "icon {i}: {c} draws, expected {mean:.0} ± {:.0}",
            5.0 * sd
        );
    }
}
