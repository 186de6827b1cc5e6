#![allow(dead_code)]

use std::collections::HashMap;

use oddgrid_core::gridsynth::{build_split, BuildOptions, DatasetPlan, Glyph, IconPools, Split, StimulusRecord};
use oddgrid_core::icon_store::{synthetic, IconManifest, IconSource};

pub fn curated() -> IconManifest {
    synthetic::manifest("icon-", 300, 11, IconSource::TestValCollection)
}

pub fn pools() -> IconPools {
    IconPools {
        curated: Some(curated()),
        train: Some(synthetic::manifest("bulk-", 64, 12, IconSource::TrainCollection)),
    }
}

pub fn test_split(seed: u64, pools: &IconPools) -> Vec<StimulusRecord> {
    let plan = DatasetPlan::default();
    build_split(seed, pools, plan.split(Split::Test).unwrap(), BuildOptions::default()).unwrap()
}

pub fn glyphs(manifest: &IconManifest) -> HashMap<String, Glyph> {
    manifest
        .assets()
        .iter()
        .map(|a| (a.id.clone(), Glyph::new(a).unwrap()))
        .collect()
}
