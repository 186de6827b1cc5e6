//! Difficulty scoring, easy/medium/hard partitioning and the three-step
//! training schedule.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gridsynth::{StimulusRecord, GRID_RANGE};
use crate::perturb::{Attribute, DELTA_E_RANGE, OFFSET_RANGE, ROTATION_RANGE, SHRINK_RANGE};
use crate::rng::derive_seed;

/// Bucket sizes of the canonical 30,000-record training split.
pub const BUCKET_SIZES: [usize; 3] = [15_000, 10_000, 5_000];

#[derive(Debug, Error, PartialEq)]
pub enum CurriculumError {
    #[error("record {0} lacks the metadata needed for scoring")]
    IncompleteMetadata(String),
    #[error("expected {expected} scored records, got {actual}")]
    WrongCardinality { expected: usize, actual: usize },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("curriculum step must be 1, 2 or 3, got {0}")]
    InvalidStep(u8),
    #[error("plan file: {0}")]
    PlanFile(String),
}

/// Continuous difficulty in [0, 1]; larger is harder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyScore {
    pub value: f64,
    pub grid_term: f64,
    pub attr_term: f64,
    pub magnitude_term: f64,
}

impl DifficultyScore {
    pub fn from_terms(grid_term: f64, attr_term: f64, magnitude_term: f64) -> Self {
        Self {
            value: (grid_term + attr_term + magnitude_term) / 3.0,
            grid_term,
            attr_term,
            magnitude_term,
        }
    }
}

fn unit(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Magnitude of `attr` normalized to [0, 1] within its sampling band.
pub fn normalized_magnitude(record: &StimulusRecord, attr: Attribute) -> Option<f64> {
    let lo_size = 1.0 - SHRINK_RANGE.1;
    let size_span = (1.0 - SHRINK_RANGE.0) - lo_size;
    match attr {
        Attribute::Color => record
            .delta_e
            .map(|de| unit((de - DELTA_E_RANGE.0) / (DELTA_E_RANGE.1 - DELTA_E_RANGE.0))),
        Attribute::Size => record.scale.map(|s| unit(((s - 1.0).abs() - lo_size) / size_span)),
        Attribute::Rotation => record
            .angle_deg
            .map(|a| unit((a.abs() - ROTATION_RANGE.0) / (ROTATION_RANGE.1 - ROTATION_RANGE.0))),
        Attribute::Position => match (record.dx_frac, record.dy_frac) {
            (Some(dx), Some(dy)) => Some(unit(
                (dx.hypot(dy) / std::f64::consts::SQRT_2 - OFFSET_RANGE.0) / (OFFSET_RANGE.1 - OFFSET_RANGE.0),
            )),
            _ => None,
        },
    }
}

/// Scores a record: larger grids, fewer differing attributes and smaller
/// magnitudes are harder. The three terms are equally weighted.
pub fn score(record: &StimulusRecord) -> Result<DifficultyScore, CurriculumError> {
    let incomplete = || CurriculumError::IncompleteMetadata(record.id.clone());
    let k = record.types.len();
    if !(1..=4).contains(&k) {
        return Err(incomplete());
    }
    let (lo, hi) = (GRID_RANGE.0 * GRID_RANGE.0, GRID_RANGE.1 * GRID_RANGE.1);
    let grid_term = unit(((record.rows * record.cols) as f64 - lo as f64) / (hi - lo) as f64);
    let attr_term = (4 - k) as f64 / 3.0;
    let mut sum = 0.0;
    for attr in record.types.iter() {
        sum += normalized_magnitude(record, attr).ok_or_else(incomplete)?;
    }
    let magnitude_term = 1.0 - sum / k as f64;
    Ok(DifficultyScore::from_terms(grid_term, attr_term, magnitude_term))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bucket {
    Easy,
    Medium,
    Hard,
}

impl Bucket {
    pub const ALL: [Bucket; 3] = [Bucket::Easy, Bucket::Medium, Bucket::Hard];

    pub fn name(self) -> &'static str {
        match self {
            Bucket::Easy => "easy",
            Bucket::Medium => "medium",
            Bucket::Hard => "hard",
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Bucket {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Bucket::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown bucket `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub id: String,
    pub value: f64,
    pub bucket: Bucket,
}

/// How many records of each bucket a training step draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StageRecipe {
    pub step: u8,
    pub easy: usize,
    pub medium: usize,
    pub hard: usize,
}

impl StageRecipe {
    pub fn total(&self) -> usize {
        self.easy + self.medium + self.hard
    }
}

/// Step 1 trains on every easy record, step 2 on 5K easy plus all medium,
/// step 3 on all hard records replaying 2.5K easy and 2.5K medium.
pub const STAGE_RECIPES: [StageRecipe; 3] = [
    StageRecipe {
        step: 1,
        easy: 15_000,
        medium: 0,
        hard: 0,
    },
    StageRecipe {
        step: 2,
        easy: 5_000,
        medium: 10_000,
        hard: 0,
    },
    StageRecipe {
        step: 3,
        easy: 2_500,
        medium: 2_500,
        hard: 5_000,
    },
];

/// Records in ascending (difficulty, id) order, each tagged with its bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumPlan {
    entries: Vec<PlanEntry>,
    checksum: String,
}

fn plan_checksum(entries: &[PlanEntry]) -> String {
    let mut h = Sha256::new();
    for e in entries {
        h.update(e.id.as_bytes());
        h.update(b"\t");
        h.update(e.bucket.name().as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

impl CurriculumPlan {
    pub fn entries(&self) -> &[PlanEntry] {
        &self.entries
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn bucket(&self, bucket: Bucket) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.bucket == bucket)
            .map(|e| e.id.as_str())
            .collect()
    }

    pub fn bucket_sizes(&self) -> [usize; 3] {
        let mut sizes = [0; 3];
        for e in &self.entries {
            sizes[e.bucket as usize] += 1;
        }
        sizes
    }

    /// Writes `id,value,bucket` rows in plan order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CurriculumError> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| CurriculumError::PlanFile(e.to_string());
        w.write_record(["id", "value", "bucket"]).map_err(err)?;
        for e in &self.entries {
            w.write_record([e.id.as_str(), &e.value.to_string(), e.bucket.name()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| CurriculumError::PlanFile(e.to_string()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, CurriculumError> {
        let mut r = csv::Reader::from_reader(reader);
        let mut entries = Vec::new();
        for row in r.records() {
            let row = row.map_err(|e| CurriculumError::PlanFile(e.to_string()))?;
            if row.len() != 3 {
                return Err(CurriculumError::PlanFile(format!(
                    "expected 3 columns, got {}",
                    row.len()
                )));
            }
            let value = row[1]
                .parse::<f64>()
                .map_err(|e| CurriculumError::PlanFile(format!("{}: {e}", &row[1])))?;
            let bucket = row[2].parse::<Bucket>().map_err(CurriculumError::PlanFile)?;
            entries.push(PlanEntry {
                id: row[0].to_string(),
                value,
                bucket,
            });
        }
        let checksum = plan_checksum(&entries);
        Ok(Self { entries, checksum })
    }
}

/// Partitions exactly 30,000 scored records into 15K/10K/5K buckets.
pub fn partition(scores: &[(String, DifficultyScore)]) -> Result<CurriculumPlan, CurriculumError> {
    partition_sized(scores, BUCKET_SIZES)
}

/// Sorts by (value, id) and cuts consecutive buckets of the given sizes.
pub fn partition_sized(
    scores: &[(String, DifficultyScore)],
    sizes: [usize; 3],
) -> Result<CurriculumPlan, CurriculumError> {
    let expected: usize = sizes.iter().sum();
    if scores.len() != expected {
        return Err(CurriculumError::WrongCardinality {
            expected,
            actual: scores.len(),
        });
    }
    let mut seen = HashSet::with_capacity(scores.len());
    for (id, _) in scores {
        if !seen.insert(id.as_str()) {
            return Err(CurriculumError::DuplicateId(id.clone()));
        }
    }
    let mut sorted: Vec<(&str, f64)> = scores.iter().map(|(id, s)| (id.as_str(), s.value)).collect();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let entries: Vec<PlanEntry> = sorted
        .into_iter()
        .enumerate()
        .map(|(i, (id, value))| {
            let bucket = if i < sizes[0] {
                Bucket::Easy
            } else if i < sizes[0] + sizes[1] {
                Bucket::Medium
            } else {
                Bucket::Hard
            };
            PlanEntry {
                id: id.to_string(),
                value,
                bucket,
            }
        })
        .collect();
    let checksum = plan_checksum(&entries);
    Ok(CurriculumPlan { entries, checksum })
}

fn draw<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str], count: usize) -> Vec<&'a str> {
    if count >= pool.len() {
        return pool.to_vec();
    }
    let mut picked = index::sample(rng, pool.len(), count).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| pool[i]).collect()
}

/// Shuffled id stream for training `step`. Reproducible from the plan
/// checksum, the step and `seed`.
pub fn stage_stream(plan: &CurriculumPlan, step: u8, seed: u64) -> Result<Vec<String>, CurriculumError> {
    let recipe = STAGE_RECIPES
        .iter()
        .find(|r| r.step == step)
        .ok_or(CurriculumError::InvalidStep(step))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[plan.checksum.as_bytes(), &[step], &seed.to_le_bytes()]));
    let mut stream = Vec::with_capacity(recipe.total());
    stream.extend(draw(&mut rng, &plan.bucket(Bucket::Easy), recipe.easy));
    stream.extend(draw(&mut rng, &plan.bucket(Bucket::Medium), recipe.medium));
    stream.extend(draw(&mut rng, &plan.bucket(Bucket::Hard), recipe.hard));
    stream.shuffle(&mut rng);
    Ok(stream.into_iter().map(str::to_string).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridsynth::{Split, GENERATOR_VERSION};
    use crate::icon_store::Category;
    use crate::perturb::AttributeSet;

    fn record(rows: usize, cols: usize, types: &[Attribute]) -> StimulusRecord {
        StimulusRecord {
            id: "r".into(),
            split: Split::Train,
            rows,
            cols,
            block_px: 60,
            icon_id: "i".into(),
            category: Category::Uncategorized,
            odd_row: 1,
            odd_col: 1,
            types: types.iter().copied().collect::<AttributeSet>(),
            delta_e: None,
            base_lab: None,
            odd_lab: None,
            scale: None,
            angle_deg: None,
            dx_frac: None,
            dy_frac: None,
            seed_index: 0,
            labeled: false,
            generator_version: GENERATOR_VERSION.into(),
            image_path: String::new(),
        }
    }

    #[test]
    fn hardest_corner() {
        let mut r = record(9, 9, &[Attribute::Color]);
        r.delta_e = Some(5.0);
        let s = score(&r).unwrap();
        assert_eq!(
            (s.grid_term, s.attr_term, s.magnitude_term, s.value),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn easiest_corner() {
        let mut r = record(5, 5, &Attribute::ALL);
        r.delta_e = Some(20.0);
        r.scale = Some(0.85);
        r.angle_deg = Some(-25.0);
        r.dx_frac = Some(0.12);
        r.dy_frac = Some(-0.12);
        let s = score(&r).unwrap();
        assert!(s.value.abs() < 1e-12, "{s:?}");
    }

    #[test]
    fn worked_mixed_example() {
        let mut r = record(7, 7, &[Attribute::Color, Attribute::Rotation]);
        r.delta_e = Some(12.5);
        r.angle_deg = Some(15.0);
        let s = score(&r).unwrap();
        assert!((s.grid_term - 24.0 / 56.0).abs() < 1e-12);
        assert!((s.attr_term - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.magnitude_term - 0.5).abs() < 1e-12);
        assert!((s.value - 0.531_746_031_746_031_7).abs() < 1e-12);
    }

    #[test]
    fn missing_field_is_incomplete() {
        let r = record(5, 5, &[Attribute::Size]);
        assert_eq!(score(&r), Err(CurriculumError::IncompleteMetadata("r".into())));
    }

    #[test]
    fn invalid_step() {
        let scores: Vec<_> = (0..6)
            .map(|i| (format!("{i}"), DifficultyScore::from_terms(0.0, 0.0, 0.0)))
            .collect();
        let plan = partition_sized(&scores, [3, 2, 1]).unwrap();
        assert_eq!(stage_stream(&plan, 4, 0), Err(CurriculumError::InvalidStep(4)));
    }

    #[test]
    fn plan_csv_round_trip() {
        let scores: Vec<_> = (0..6)
            .map(|i| {
                (
                    format!("id{i}"),
                    DifficultyScore::from_terms(0.1 * i as f64, 0.3, 1.0 / 3.0),
                )
            })
            .collect();
        let plan = partition_sized(&scores, [3, 2, 1]).unwrap();
        let mut buf = Vec::new();
        plan.write_csv(&mut buf).unwrap();
        let back = CurriculumPlan::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, plan);
    }
}
