//! Sampling of the four perceptual perturbations (color, size, rotation,
//! position) and their multi-attribute combinations.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{self, LabColor};

/// Closed range of the requested color difference (CIE76 ΔE).
pub const DELTA_E_RANGE: (f64, f64) = (5.0, 20.0);
/// Shrink branch of the size ratio.
pub const SHRINK_RANGE: (f64, f64) = (0.85, 0.95);
/// Enlarge branch of the size ratio.
pub const ENLARGE_RANGE: (f64, f64) = (1.05, 1.15);
/// Magnitude band of the rotation, in degrees; the sign is sampled separately.
pub const ROTATION_RANGE: (f64, f64) = (5.0, 25.0);
/// Magnitude band of each positional offset, as a fraction of the block size.
pub const OFFSET_RANGE: (f64, f64) = (0.05, 0.12);

/// Base color box: lightness and the two opponent axes.
pub const BASE_L_RANGE: (f64, f64) = (25.0, 75.0);
pub const BASE_AB_RANGE: (f64, f64) = (-60.0, 60.0);

/// Fill used when color is not among the perturbed attributes.
pub const NEUTRAL_FILL: [u8; 3] = [64, 64, 64];

/// Direction resamples before giving up on a base color.
pub const DIRECTION_BUDGET: usize = 1000;
const BASE_BUDGET: usize = 10_000;

/// Largest allowed drift between the requested ΔE and the ΔE of the two
/// 8-bit display colors. Half the acceptance bound.
pub const QUANTIZED_DELTA_E_TOLERANCE: f64 = 0.25;

/// Name of the color-difference convention written into metadata.
pub const DELTA_E_CONVENTION: &str = "CIE76";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Attribute {
    Color,
    Size,
    Rotation,
    Position,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::Color,
        Attribute::Size,
        Attribute::Rotation,
        Attribute::Position,
    ];

    fn bit(self) -> u8 {
        1 << (self as u8)
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Color => "Color",
            Attribute::Size => "Size",
            Attribute::Rotation => "Rotation",
            Attribute::Position => "Position",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown attribute `{s}`"))
    }
}

/// A subset of the four attributes, iterated in canonical order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(from = "Vec<Attribute>", into = "Vec<Attribute>")]
pub struct AttributeSet(u8);

impl AttributeSet {
    pub const fn empty() -> Self {
        Self(0)
    }

    pub fn single(attr: Attribute) -> Self {
        Self(attr.bit())
    }

    pub fn insert(&mut self, attr: Attribute) {
        self.0 |= attr.bit();
    }

    pub fn contains(self, attr: Attribute) -> bool {
        self.0 & attr.bit() != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Attribute> {
        Attribute::ALL.into_iter().filter(move |a| self.contains(*a))
    }
}

impl FromIterator<Attribute> for AttributeSet {
    fn from_iter<I: IntoIterator<Item = Attribute>>(iter: I) -> Self {
        let mut set = Self::empty();
        for a in iter {
            set.insert(a);
        }
        set
    }
}

impl From<Vec<Attribute>> for AttributeSet {
    fn from(v: Vec<Attribute>) -> Self {
        v.into_iter().collect()
    }
}

impl From<AttributeSet> for Vec<Attribute> {
    fn from(s: AttributeSet) -> Self {
        s.iter().collect()
    }
}

impl fmt::Debug for AttributeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// The attribute set and exact sampled magnitudes distinguishing the odd cell.
///
/// Fields of an attribute are populated iff the attribute is in `attributes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub attributes: AttributeSet,
    pub delta_e: Option<f64>,
    pub base_lab: Option<LabColor>,
    pub odd_lab: Option<LabColor>,
    pub scale: Option<f64>,
    pub angle_deg: Option<f64>,
    pub dx_frac: Option<f64>,
    pub dy_frac: Option<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum PerturbError {
    #[error("attribute count must be in 1..=4, got {0}")]
    InvalidAttributeCount(usize),
    #[error("forced attribute set has {forced} members but k = {k}")]
    ForcedMismatch { k: usize, forced: usize },
    #[error("no in-gamut odd color found after {0} direction resamples")]
    GamutExhaustion(usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("perturbation has no attributes")]
    Empty,
    #[error("{0} fields do not match the attribute set")]
    Presence(Attribute),
    #[error("{attribute} magnitude {value} outside its sampling range")]
    OutOfRange { attribute: Attribute, value: f64 },
    #[error("ΔE between base and odd colors is {actual}, expected {expected}")]
    ColorDistance { expected: f64, actual: f64 },
}

fn within(v: f64, (lo, hi): (f64, f64)) -> bool {
    (lo..=hi).contains(&v)
}

impl PerturbationSpec {
    /// The k-Type label of the stimulus.
    pub fn k(&self) -> usize {
        self.attributes.len()
    }

    /// Discrepancy magnitude of `attr` in its natural unit: ΔE for color,
    /// `|scale - 1|` for size, `|angle|` for rotation and the diagonal offset
    /// `sqrt(dx² + dy²)` (block fractions) for position.
    pub fn magnitude(&self, attr: Attribute) -> Option<f64> {
        match attr {
            Attribute::Color => self.delta_e,
            Attribute::Size => self.scale.map(|s| (s - 1.0).abs()),
            Attribute::Rotation => self.angle_deg.map(f64::abs),
            Attribute::Position => match (self.dx_frac, self.dy_frac) {
                (Some(dx), Some(dy)) => Some(dx.hypot(dy)),
                _ => None,
            },
        }
    }

    /// Checks presence, closed ranges and the base/odd color distance.
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.attributes.is_empty() {
            return Err(SpecError::Empty);
        }
        let has = |a| self.attributes.contains(a);
        let color_fields = [self.delta_e.is_some(), self.base_lab.is_some(), self.odd_lab.is_some()];
        if color_fields.iter().any(|&p| p != has(Attribute::Color)) {
            return Err(SpecError::Presence(Attribute::Color));
        }
        if self.scale.is_some() != has(Attribute::Size) {
            return Err(SpecError::Presence(Attribute::Size));
        }
        if self.angle_deg.is_some() != has(Attribute::Rotation) {
            return Err(SpecError::Presence(Attribute::Rotation));
        }
        if self.dx_frac.is_some() != has(Attribute::Position) || self.dy_frac.is_some() != has(Attribute::Position) {
            return Err(SpecError::Presence(Attribute::Position));
        }

        let out = |attribute, value| Err(SpecError::OutOfRange { attribute, value });
        if let (Some(de), Some(base), Some(odd)) = (self.delta_e, self.base_lab, self.odd_lab) {
            if !within(de, DELTA_E_RANGE) {
                return out(Attribute::Color, de);
            }
            let actual = color::delta_e(base, odd);
            if (actual - de).abs() >= 1e-6 {
                return Err(SpecError::ColorDistance { expected: de, actual });
            }
        }
        if let Some(s) = self.scale {
            if !within(s, SHRINK_RANGE) && !within(s, ENLARGE_RANGE) {
                return out(Attribute::Size, s);
            }
        }
        if let Some(a) = self.angle_deg {
            if !within(a.abs(), ROTATION_RANGE) {
                return out(Attribute::Rotation, a);
            }
        }
        for v in [self.dx_frac, self.dy_frac].into_iter().flatten() {
            if !within(v.abs(), OFFSET_RANGE) {
                return out(Attribute::Position, v);
            }
        }
        Ok(())
    }

    /// 8-bit fills of the distractor and odd items.
    pub fn display_fills(&self) -> ([u8; 3], [u8; 3]) {
        match (self.base_lab, self.odd_lab) {
            (Some(base), Some(odd)) => (color::lab_to_srgb(base).rgb, color::lab_to_srgb(odd).rgb),
            _ => (NEUTRAL_FILL, NEUTRAL_FILL),
        }
    }
}

fn sample_range<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo..=hi)
}

fn sample_signed<R: Rng + ?Sized>(rng: &mut R, band: (f64, f64)) -> f64 {
    let negative = rng.random_bool(0.5);
    let magnitude = sample_range(rng, band);
    if negative {
        -magnitude
    } else {
        magnitude
    }
}

/// Samples a base color inside the base box that is exactly representable on
/// the display and whose six axis neighbours at distance `headroom` are still
/// in gamut.
pub fn sample_base_color<R: Rng + ?Sized>(rng: &mut R, headroom: f64) -> Option<LabColor> {
    for _ in 0..BASE_BUDGET {
        let candidate = LabColor::new(
            sample_range(rng, BASE_L_RANGE),
            sample_range(rng, BASE_AB_RANGE),
            sample_range(rng, BASE_AB_RANGE),
        );
        let shown = color::lab_to_srgb(candidate);
        if shown.out_of_gamut {
            continue;
        }
        let base = color::srgb_to_lab(shown.rgb);
        let axes = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let roomy = axes.iter().all(|axis| {
            color::in_gamut(base.offset(*axis, headroom)) && color::in_gamut(base.offset(*axis, -headroom))
        });
        if roomy {
            return Some(base);
        }
    }
    None
}

/// Draws an odd color at exactly `delta_e` from `base` along a uniformly random
/// direction, resampling until it is displayable and its 8-bit rendition keeps
/// the requested difference within [`QUANTIZED_DELTA_E_TOLERANCE`].
pub fn sample_odd_color<R: Rng + ?Sized>(rng: &mut R, base: LabColor, delta_e: f64) -> Result<LabColor, PerturbError> {
    let shown_base = color::quantize(base);
    for _ in 0..DIRECTION_BUDGET {
        let direction: [f64; 3] = UnitSphere.sample(rng);
        let odd = base.offset(direction, delta_e);
        let shown = color::lab_to_srgb(odd);
        if shown.out_of_gamut {
            continue;
        }
        let rendered = color::delta_e(shown_base, color::srgb_to_lab(shown.rgb));
        if (rendered - delta_e).abs() <= QUANTIZED_DELTA_E_TOLERANCE {
            return Ok(odd);
        }
    }
    Err(PerturbError::GamutExhaustion(DIRECTION_BUDGET))
}

/// Samples a perturbation with `k` attributes.
///
/// When `forced` is given it fixes the attribute set; otherwise a uniform
/// k-subset of the four attributes is drawn. Size and rotation first pick a
/// branch (shrink/enlarge, sign) with probability one half, then a magnitude
/// uniformly in the branch.
pub fn sample_perturbation<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    forced: Option<AttributeSet>,
) -> Result<PerturbationSpec, PerturbError> {
    if !(1..=4).contains(&k) {
        return Err(PerturbError::InvalidAttributeCount(k));
    }
    let attributes = match forced {
        Some(set) if set.len() != k => return Err(PerturbError::ForcedMismatch { k, forced: set.len() }),
        Some(set) => set,
        None => index::sample(rng, Attribute::ALL.len(), k)
            .into_iter()
            .map(|i| Attribute::ALL[i])
            .collect(),
    };

    let mut spec = PerturbationSpec {
        attributes,
        delta_e: None,
        base_lab: None,
        odd_lab: None,
        scale: None,
        angle_deg: None,
        dx_frac: None,
        dy_frac: None,
    };
    for attr in attributes.iter() {
        match attr {
            Attribute::Color => {
                let de = sample_range(rng, DELTA_E_RANGE);
                let base = sample_base_color(rng, de).ok_or(PerturbError::GamutExhaustion(BASE_BUDGET))?;
                let odd = sample_odd_color(rng, base, de)?;
                spec.delta_e = Some(de);
                spec.base_lab = Some(base);
                spec.odd_lab = Some(odd);
            }
            Attribute::Size => {
                let band = if rng.random_bool(0.5) {
                    SHRINK_RANGE
                } else {
                    ENLARGE_RANGE
                };
                spec.scale = Some(sample_range(rng, band));
            }
            Attribute::Rotation => spec.angle_deg = Some(sample_signed(rng, ROTATION_RANGE)),
            Attribute::Position => {
                spec.dx_frac = Some(sample_signed(rng, OFFSET_RANGE));
                spec.dy_frac = Some(sample_signed(rng, OFFSET_RANGE));
            }
        }
    }
    Ok(spec)
}
