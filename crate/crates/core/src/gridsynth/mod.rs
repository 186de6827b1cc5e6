//! Grid stimulus synthesis: one odd cell among identical distractors, with
//! labeled-index and image-sequence variants.

mod dataset;
pub mod inspect;
mod labels;
mod render;
mod sequence;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::LabColor;
use crate::icon_store::{Category, IconAsset, IconError};
use crate::perturb::{self, Attribute, AttributeSet, PerturbError, PerturbationSpec};

pub use dataset::{
    build_dataset, build_split, read_metadata, read_summary, regenerate, split_checksum, write_metadata, write_split,
    BuildOptions, DatasetPlan, IconPools, SplitPlan, SplitSummary, GLOBAL_OFFSETS,
};
pub use labels::{digit_bitmap, render_labeled, DIGIT_HEIGHT, DIGIT_SCALE, DIGIT_WIDTH, GUTTER_PX};
pub use render::{render_cell, render_grid, render_record, render_tile, Glyph, Tile, NOMINAL_FILL};
pub use sequence::{
    build_sequences, read_sequences, regenerate_sequence, render_sequence, sample_sequence, write_sequences,
    SequenceRecord, SequenceStimulus, MAX_SEQUENCE_ANOMALIES, SEQUENCE_LEN_RANGE, SEQUENCE_OFFSET,
};

/// Pins rasterization (anti-aliased coverage, sRGB compositing over white,
/// glyph fit and pivot) as well as the sampling order.
pub const GENERATOR_VERSION: &str = "oddgrid-gen/1";

pub const GRID_RANGE: (usize, usize) = (5, 9);
pub const BLOCK_RANGE: (u32, u32) = (60, 80);
/// Smallest block accepted as a resolution override.
pub const MIN_BLOCK_PX: u32 = 32;
pub const BACKGROUND: [u8; 3] = [255, 255, 255];
pub const MARGIN_PX: u32 = 0;
/// Base-color resamples before a record is abandoned.
pub const BASE_RETRIES: usize = 100;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("render failure: {0}")]
    RenderFailure(String),
    #[error("no displayable color pair after {0} base-color resamples")]
    GamutExhaustion(usize),
    #[error("plan inconsistency: {0}")]
    PlanInconsistency(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("icon `{0}` not found in the manifest")]
    UnknownIcon(String),
    #[error("malformed metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Icon(#[from] IconError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}` (expected train, val or test)")),
        }
    }
}

/// The seven reporting types: four single attributes and three combination
/// sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StimulusType {
    Single(Attribute),
    Multi(usize),
}

impl StimulusType {
    pub const ALL: [StimulusType; 7] = [
        StimulusType::Single(Attribute::Color),
        StimulusType::Single(Attribute::Size),
        StimulusType::Single(Attribute::Rotation),
        StimulusType::Single(Attribute::Position),
        StimulusType::Multi(2),
        StimulusType::Multi(3),
        StimulusType::Multi(4),
    ];

    pub fn k(self) -> usize {
        match self {
            StimulusType::Single(_) => 1,
            StimulusType::Multi(k) => k,
        }
    }

    pub fn forced(self) -> Option<AttributeSet> {
        match self {
            StimulusType::Single(a) => Some(AttributeSet::single(a)),
            StimulusType::Multi(_) => None,
        }
    }

    pub fn of(attributes: AttributeSet) -> Option<Self> {
        match attributes.len() {
            1 => attributes.iter().next().map(StimulusType::Single),
            k @ 2..=4 => Some(StimulusType::Multi(k)),
            _ => None,
        }
    }

    /// Position in [`StimulusType::ALL`].
    pub fn index(self) -> usize {
        StimulusType::ALL.iter().position(|t| *t == self).unwrap_or(0)
    }
}

impl fmt::Display for StimulusType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StimulusType::Single(a) => f.write_str(a.name()),
            StimulusType::Multi(k) => write!(f, "{k}-Type"),
        }
    }
}

impl FromStr for StimulusType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if let Ok(a) = t.parse::<Attribute>() {
            return Ok(StimulusType::Single(a));
        }
        StimulusType::ALL
            .into_iter()
            .find(|ty| ty.to_string().eq_ignore_ascii_case(t) || ty.to_string().replace("-Type", "") == t)
            .ok_or_else(|| format!("unknown stimulus type `{s}`"))
    }
}

/// Grid geometry. Background and margin are fixed by the generator version.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub block_px: u32,
    pub background: [u8; 3],
    pub margin_px: u32,
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, block_px: u32) -> Self {
        Self {
            rows,
            cols,
            block_px,
            background: BACKGROUND,
            margin_px: MARGIN_PX,
        }
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let rows = rng.random_range(GRID_RANGE.0..=GRID_RANGE.1);
        let cols = rng.random_range(GRID_RANGE.0..=GRID_RANGE.1);
        let block = rng.random_range(BLOCK_RANGE.0..=BLOCK_RANGE.1);
        Self::new(rows, cols, block)
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn width(&self) -> u32 {
        self.cols as u32 * self.block_px + 2 * self.margin_px
    }

    pub fn height(&self) -> u32 {
        self.rows as u32 * self.block_px + 2 * self.margin_px
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if !(1..=99).contains(&self.rows) || !(1..=99).contains(&self.cols) {
            return Err(GenError::InvalidGrid(format!("{}×{} grid", self.rows, self.cols)));
        }
        if self.block_px < MIN_BLOCK_PX {
            return Err(GenError::InvalidGrid(format!(
                "block of {} px is below the {MIN_BLOCK_PX} px minimum",
                self.block_px
            )));
        }
        Ok(())
    }
}

/// Replaces individual sampled grid parameters. Sampling still consumes the
/// same random draws so overridden datasets stay aligned with the originals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GridOverride {
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub block_px: Option<u32>,
}

impl GridOverride {
    pub fn resolution(block_px: u32) -> Self {
        Self {
            block_px: Some(block_px),
            ..Self::default()
        }
    }

    fn apply(&self, grid: GridSpec) -> GridSpec {
        GridSpec::new(
            self.rows.unwrap_or(grid.rows),
            self.cols.unwrap_or(grid.cols),
            self.block_px.unwrap_or(grid.block_px),
        )
    }
}

/// One grid stimulus. Field order is the metadata line order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusRecord {
    pub id: String,
    pub split: Split,
    pub rows: usize,
    pub cols: usize,
    pub block_px: u32,
    pub icon_id: String,
    pub category: Category,
    /// 1-based.
    pub odd_row: usize,
    /// 1-based.
    pub odd_col: usize,
    pub types: AttributeSet,
    pub delta_e: Option<f64>,
    pub base_lab: Option<LabColor>,
    pub odd_lab: Option<LabColor>,
    pub scale: Option<f64>,
    /// Positive values turn clockwise on screen.
    pub angle_deg: Option<f64>,
    /// Positive values move right.
    pub dx_frac: Option<f64>,
    /// Positive values move down.
    pub dy_frac: Option<f64>,
    /// Global record index; with the dataset master seed it selects the
    /// record's random stream.
    pub seed_index: u64,
    pub labeled: bool,
    pub generator_version: String,
    pub image_path: String,
}

impl StimulusRecord {
    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.rows, self.cols, self.block_px)
    }

    pub fn spec(&self) -> PerturbationSpec {
        PerturbationSpec {
            attributes: self.types,
            delta_e: self.delta_e,
            base_lab: self.base_lab,
            odd_lab: self.odd_lab,
            scale: self.scale,
            angle_deg: self.angle_deg,
            dx_frac: self.dx_frac,
            dy_frac: self.dy_frac,
        }
    }

    pub fn k(&self) -> usize {
        self.types.len()
    }

    pub fn stimulus_type(&self) -> Option<StimulusType> {
        StimulusType::of(self.types)
    }

    pub fn odd_cell(&self) -> (usize, usize) {
        (self.odd_row, self.odd_col)
    }

    /// Checks index bounds, grid limits and the perturbation invariants.
    pub fn validate(&self) -> Result<(), GenError> {
        self.grid().validate()?;
        if !(1..=self.rows).contains(&self.odd_row) || !(1..=self.cols).contains(&self.odd_col) {
            return Err(GenError::Metadata(format!(
                "{}: odd cell ({}, {}) outside a {}×{} grid",
                self.id, self.odd_row, self.odd_col, self.rows, self.cols
            )));
        }
        self.spec()
            .validate()
            .map_err(|e| GenError::Metadata(format!("{}: {e}", self.id)))
    }

    fn from_parts(grid: GridSpec, icon: &IconAsset, odd: (usize, usize), spec: PerturbationSpec) -> Self {
        Self {
            id: String::new(),
            split: Split::Train,
            rows: grid.rows,
            cols: grid.cols,
            block_px: grid.block_px,
            icon_id: icon.id.clone(),
            category: icon.category,
            odd_row: odd.0,
            odd_col: odd.1,
            types: spec.attributes,
            delta_e: spec.delta_e,
            base_lab: spec.base_lab,
            odd_lab: spec.odd_lab,
            scale: spec.scale,
            angle_deg: spec.angle_deg,
            dx_frac: spec.dx_frac,
            dy_frac: spec.dy_frac,
            seed_index: 0,
            labeled: false,
            generator_version: GENERATOR_VERSION.to_string(),
            image_path: String::new(),
        }
    }
}

/// Samples a perturbation, resampling the base color when the odd color
/// cannot be placed.
pub fn sample_spec_with_retries<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    forced: Option<AttributeSet>,
) -> Result<PerturbationSpec, GenError> {
    for _ in 0..BASE_RETRIES {
        match perturb::sample_perturbation(rng, k, forced) {
            Ok(spec) => return Ok(spec),
            Err(PerturbError::GamutExhaustion(_)) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(GenError::GamutExhaustion(BASE_RETRIES))
}

/// Samples the metadata of one stimulus: grid, odd cell, then perturbation.
/// The id, split, index and image path are left for the caller. Pixels come
/// from [`render_record`].
pub fn synthesize<R: Rng + ?Sized>(
    rng: &mut R,
    icon: &IconAsset,
    k: usize,
    forced: Option<AttributeSet>,
    grid_override: Option<GridOverride>,
) -> Result<StimulusRecord, GenError> {
    let sampled = GridSpec::sample(rng);
    let grid = grid_override.map_or(sampled, |o| o.apply(sampled));
    grid.validate()?;
    let odd = (rng.random_range(1..=grid.rows), rng.random_range(1..=grid.cols));
    let spec = sample_spec_with_retries(rng, k, forced)?;
    Ok(StimulusRecord::from_parts(grid, icon, odd, spec))
}
