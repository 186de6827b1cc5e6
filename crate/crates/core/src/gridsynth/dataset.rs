use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::render::{render_record, Glyph};
use super::{synthesize, GenError, GridOverride, Split, StimulusRecord, StimulusType, GENERATOR_VERSION};
use crate::icon_store::{sample_icon, IconManifest};
use crate::perturb::DELTA_E_CONVENTION;
use crate::rng;

/// First global record index of each split. Record `i` of a split draws from
/// stream `offset + i`, independent of the other splits' sizes.
pub const GLOBAL_OFFSETS: [(Split, u64); 3] = [(Split::Test, 0), (Split::Val, 1_000_000), (Split::Train, 2_000_000)];

fn global_offset(split: Split) -> u64 {
    GLOBAL_OFFSETS
        .iter()
        .find(|(s, _)| *s == split)
        .map(|(_, o)| *o)
        .unwrap_or(0)
}

/// Number of records of each stimulus type, in [`StimulusType::ALL`] order.
/// Records are laid out in contiguous type blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub split: Split,
    pub total: usize,
    pub type_counts: [usize; 7],
}

impl SplitPlan {
    /// Spreads `total` over `types` as evenly as possible; earlier types take
    /// the remainder.
    pub fn even(split: Split, total: usize, types: &[StimulusType]) -> Self {
        let mut type_counts = [0usize; 7];
        if !types.is_empty() {
            let base = total / types.len();
            let extra = total % types.len();
            for (i, t) in types.iter().enumerate() {
                type_counts[t.index()] += base + usize::from(i < extra);
            }
        }
        Self {
            split,
            total,
            type_counts,
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let sum: usize = self.type_counts.iter().sum();
        if sum != self.total {
            return Err(GenError::PlanInconsistency(format!(
                "{} type counts sum to {sum}, total is {}",
                self.split, self.total
            )));
        }
        if self.total == 0 {
            return Err(GenError::PlanInconsistency(format!("{} split is empty", self.split)));
        }
        Ok(())
    }

    /// Stimulus type of the record at `local` index.
    pub fn type_at(&self, local: usize) -> Option<StimulusType> {
        let mut end = 0;
        for (t, count) in StimulusType::ALL.iter().zip(self.type_counts) {
            end += count;
            if local < end {
                return Some(*t);
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPlan {
    pub splits: Vec<SplitPlan>,
}

impl DatasetPlan {
    pub const TEST_PER_TYPE: usize = 200;
    pub const VAL_TOTAL: usize = 400;
    pub const TRAIN_TOTAL: usize = 30_000;

    pub fn split(&self, split: Split) -> Option<&SplitPlan> {
        self.splits.iter().find(|p| p.split == split)
    }

    pub fn validate(&self) -> Result<(), GenError> {
        for (i, p) in self.splits.iter().enumerate() {
            p.validate()?;
            if self.splits[..i].iter().any(|q| q.split == p.split) {
                return Err(GenError::PlanInconsistency(format!("{} split listed twice", p.split)));
            }
        }
        Ok(())
    }
}

impl Default for DatasetPlan {
    /// 200 test records per type, 400 validation and 30,000 training records
    /// with the same type mix.
    fn default() -> Self {
        Self {
            splits: vec![
                SplitPlan::even(Split::Test, Self::TEST_PER_TYPE * 7, &StimulusType::ALL),
                SplitPlan::even(Split::Val, Self::VAL_TOTAL, &StimulusType::ALL),
                SplitPlan::even(Split::Train, Self::TRAIN_TOTAL, &StimulusType::ALL),
            ],
        }
    }
}

/// Icon collections: curated icons feed test and validation, the bulk
/// collection feeds training.
#[derive(Debug, Clone)]
pub struct IconPools {
    pub curated: Option<IconManifest>,
    pub train: Option<IconManifest>,
}

impl IconPools {
    pub fn for_split(&self, split: Split) -> Result<&IconManifest, GenError> {
        let pool = match split {
            Split::Test | Split::Val => self.curated.as_ref(),
            Split::Train => self.train.as_ref(),
        };
        pool.ok_or_else(|| GenError::PlanInconsistency(format!("no icon collection available for the {split} split")))
    }
}

/// Optional generation settings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildOptions {
    pub grid_override: Option<GridOverride>,
    pub labeled: bool,
}

/// Regenerates the metadata of record `local` of `plan` from the master seed.
pub fn regenerate(
    master_seed: u64,
    pool: &IconManifest,
    plan: &SplitPlan,
    local: usize,
    options: BuildOptions,
) -> Result<StimulusRecord, GenError> {
    let ty = plan.type_at(local).ok_or_else(|| {
        GenError::PlanInconsistency(format!(
            "index {local} beyond the {} split's {} records",
            plan.split, plan.total
        ))
    })?;
    let seed_index = global_offset(plan.split) + local as u64;
    let mut rng = rng::stream(master_seed, seed_index);
    let icon = sample_icon(pool, &mut rng)?;
    let mut record = synthesize(&mut rng, icon, ty.k(), ty.forced(), options.grid_override)?;
    record.id = format!("{}-{local:05}", plan.split);
    record.split = plan.split;
    record.seed_index = seed_index;
    record.labeled = options.labeled;
    record.image_path = format!("images/{}.png", record.id);
    Ok(record)
}

/// Generates the metadata of one split in parallel.
pub fn build_split(
    master_seed: u64,
    pools: &IconPools,
    plan: &SplitPlan,
    options: BuildOptions,
) -> Result<Vec<StimulusRecord>, GenError> {
    plan.validate()?;
    let pool = pools.for_split(plan.split)?;
    (0..plan.total)
        .into_par_iter()
        .map(|i| regenerate(master_seed, pool, plan, i, options))
        .collect()
}

/// Generates the metadata of every split in the plan.
pub fn build_dataset(
    master_seed: u64,
    pools: &IconPools,
    plan: &DatasetPlan,
    options: BuildOptions,
) -> Result<Vec<(Split, Vec<StimulusRecord>)>, GenError> {
    plan.validate()?;
    plan.splits
        .iter()
        .map(|p| Ok((p.split, build_split(master_seed, pools, p, options)?)))
        .collect()
}

fn metadata_line(record: &StimulusRecord) -> String {
    serde_json::to_string(record).expect("records serialize")
}

/// SHA-256 over the metadata lines.
pub fn split_checksum(records: &[StimulusRecord]) -> String {
    let mut h = Sha256::new();
    for r in records {
        h.update(metadata_line(r).as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub fn write_metadata(path: &Path, records: &[StimulusRecord]) -> Result<(), GenError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        w.write_all(metadata_line(r).as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metadata(path: &Path) -> Result<Vec<StimulusRecord>, GenError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: StimulusRecord = serde_json::from_str(&line)
            .map_err(|e| GenError::Metadata(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

/// Settings and checksums of a generated split, stored next to its metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split: Split,
    pub master_seed: u64,
    pub generator_version: String,
    pub total: usize,
    pub type_counts: BTreeMap<String, usize>,
    pub metadata_checksum: String,
    pub icon_manifest_checksum: String,
    pub delta_e_convention: String,
    pub background: [u8; 3],
    pub margin_px: u32,
}

pub fn read_summary(path: &Path) -> Result<SplitSummary, GenError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| GenError::Metadata(format!("{}: {e}", path.display())))
}

/// Renders every record into `dir/images/` and writes `dir/metadata.jsonl`
/// and `dir/summary.json`.
pub fn write_split(
    dir: &Path,
    master_seed: u64,
    split: Split,
    records: &[StimulusRecord],
    pool: &IconManifest,
) -> Result<SplitSummary, GenError> {
    fs::create_dir_all(dir.join("images"))?;
    let mut icon_ids: Vec<&str> = records.iter().map(|r| r.icon_id.as_str()).collect();
    icon_ids.sort_unstable();
    icon_ids.dedup();
    let glyphs: HashMap<&str, Glyph> = icon_ids
        .par_iter()
        .map(|id| {
            let icon = pool.get(id).ok_or_else(|| GenError::UnknownIcon(id.to_string()))?;
            Ok((*id, Glyph::new(icon)?))
        })
        .collect::<Result<_, GenError>>()?;

    records.par_iter().try_for_each(|r| -> Result<(), GenError> {
        let img = render_record(r, &glyphs[r.icon_id.as_str()])?;
        img.save_with_format(dir.join(&r.image_path), image::ImageFormat::Png)?;
        Ok(())
    })?;

    write_metadata(&dir.join("metadata.jsonl"), records)?;
    let mut type_counts = BTreeMap::new();
    for r in records {
        let name = r
            .stimulus_type()
            .map_or_else(|| "unknown".to_string(), |t| t.to_string());
        *type_counts.entry(name).or_insert(0) += 1;
    }
    let summary = SplitSummary {
        split,
        master_seed,
        generator_version: GENERATOR_VERSION.to_string(),
        total: records.len(),
        type_counts,
        metadata_checksum: split_checksum(records),
        icon_manifest_checksum: pool.checksum().to_string(),
        delta_e_convention: DELTA_E_CONVENTION.to_string(),
        background: super::BACKGROUND,
        margin_px: super::MARGIN_PX,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(summary)
}
