//! Answer parsing and the metric suite: strict and tolerance accuracy,
//! magnitude curves, grid-density breakdown, near/far error split and
//! sequence EM/F1.

mod report;

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridsynth::StimulusRecord;
use crate::perturb::{Attribute, DELTA_E_RANGE, ENLARGE_RANGE, OFFSET_RANGE, ROTATION_RANGE, SHRINK_RANGE};
use crate::reward::format_reward;

pub use report::{
    evaluate, evaluate_parsed, read_predictions, write_predictions, Curve, DensityRow, EvalReport, PredictionLine,
    TypeRow, PARSER_NOTE,
};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{preds} predictions for {gts} ground truths")]
    LengthMismatch { preds: usize, gts: usize },
    #[error("duplicate prediction for `{0}`")]
    DuplicatePrediction(String),
    #[error("predictions line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("io: {0}")]
    Io(String),
}

/// Parsed content of an answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredKind {
    /// 1-based row and column.
    Cell(usize, usize),
    /// The "Row 0, Column 0" sentinel.
    NoOdd,
    /// 1-based image labels of a sequence answer.
    LabelSet(BTreeSet<usize>),
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub kind: PredKind,
    pub raw: String,
    pub format_ok: bool,
    /// Sequence labels outside `1..=n`; kept in `kind` for scoring.
    pub out_of_range: Vec<usize>,
}

/// Ground truth of a grid question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    Cell(usize, usize),
    NoOdd,
}

impl Target {
    /// `(0, 0)` is the no-odd sentinel; any other zero index is invalid.
    pub fn from_indices(row: usize, col: usize) -> Option<Self> {
        match (row, col) {
            (0, 0) => Some(Target::NoOdd),
            (0, _) | (_, 0) => None,
            (r, c) => Some(Target::Cell(r, c)),
        }
    }
}

impl From<&StimulusRecord> for Target {
    fn from(r: &StimulusRecord) -> Self {
        Target::Cell(r.odd_row, r.odd_col)
    }
}

static BOX_OPEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"boxed\s*\{").expect("valid regex"));
static TEXT_CMD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\\text\w*\s*\{([^{}]*)\}").expect("valid regex"));
static CELL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)row\W*?(\d+)\W*col(?:umn)?\W*?(\d+)").expect("valid regex"));
static LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^image\s*_?\s*(\d+)$").expect("valid regex"));

/// Content of the last `boxed{...}` in the text, braces matched. An
/// unterminated box yields the rest of the text.
pub fn last_box(text: &str) -> Option<&str> {
    let m = BOX_OPEN.find_iter(text).last()?;
    let body = &text[m.end()..];
    let mut depth = 1usize;
    for (i, ch) in body.char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&body[..i]);
                }
            }
            _ => {}
        }
    }
    Some(body)
}

fn strip_markup(content: &str) -> String {
    let mut s = content.to_string();
    while TEXT_CMD.is_match(&s) {
        s = TEXT_CMD.replace_all(&s, "$1").into_owned();
    }
    s.replace(['$', '*', '~'], " ")
}

/// Parses a grid answer from the last box. Extraction is lenient (any case,
/// surrounding prose, markup) while `format_ok` applies the strict rule.
pub fn parse_answer(text: &str) -> Prediction {
    let kind = match last_box(text) {
        None => PredKind::Unparseable,
        Some(content) => {
            let content = strip_markup(content);
            match CELL.captures(&content) {
                None => PredKind::Unparseable,
                Some(c) => match (c[1].parse::<usize>(), c[2].parse::<usize>()) {
                    (Ok(0), Ok(0)) => PredKind::NoOdd,
                    (Ok(r), Ok(c)) if r > 0 && c > 0 => PredKind::Cell(r, c),
                    _ => PredKind::Unparseable,
                },
            }
        }
    };
    Prediction {
        kind,
        raw: text.to_string(),
        format_ok: format_reward(text) == 1.0,
        out_of_range: Vec::new(),
    }
}

/// Parses a sequence answer: comma-separated `imageK` labels inside the last
/// box. Duplicates collapse; an empty box is the empty set.
pub fn parse_sequence_answer(text: &str, n: usize) -> Prediction {
    let format_ok = BOX_OPEN.find_iter(text).count() == 1;
    let mut out_of_range = Vec::new();
    let kind = match last_box(text) {
        None => PredKind::Unparseable,
        Some(content) => {
            let content = strip_markup(content);
            let mut labels = BTreeSet::new();
            let mut ok = true;
            for token in content.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                match LABEL.captures(token).and_then(|c| c[1].parse::<usize>().ok()) {
                    Some(k) => {
                        if !(1..=n).contains(&k) && !out_of_range.contains(&k) {
                            out_of_range.push(k);
                        }
                        labels.insert(k);
                    }
                    None => ok = false,
                }
            }
            if ok {
                PredKind::LabelSet(labels)
            } else {
                PredKind::Unparseable
            }
        }
    };
    out_of_range.sort_unstable();
    Prediction {
        kind,
        raw: text.to_string(),
        format_ok,
        out_of_range,
    }
}

fn check_len(preds: usize, gts: usize) -> Result<(), EvalError> {
    if preds != gts {
        return Err(EvalError::LengthMismatch { preds, gts });
    }
    Ok(())
}

fn fraction(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

pub fn is_exact(pred: &PredKind, gt: Target) -> bool {
    match (pred, gt) {
        (PredKind::NoOdd, Target::NoOdd) => true,
        (&PredKind::Cell(r, c), Target::Cell(gr, gc)) => r == gr && c == gc,
        _ => false,
    }
}

/// Within one row and one column of the target (exact hits included).
pub fn is_tolerant(pred: &PredKind, gt: Target) -> bool {
    match (pred, gt) {
        (PredKind::NoOdd, Target::NoOdd) => true,
        (&PredKind::Cell(r, c), Target::Cell(gr, gc)) => r.abs_diff(gr) <= 1 && c.abs_diff(gc) <= 1,
        _ => false,
    }
}

/// Fraction of exact hits; 0 for empty input.
pub fn strict_accuracy(preds: &[PredKind], gts: &[Target]) -> Result<f64, EvalError> {
    check_len(preds.len(), gts.len())?;
    let hits = preds.iter().zip(gts).filter(|(p, g)| is_exact(p, **g)).count();
    Ok(fraction(hits, preds.len()))
}

/// Fraction of answers within one row and one column.
pub fn tol_accuracy(preds: &[PredKind], gts: &[Target]) -> Result<f64, EvalError> {
    check_len(preds.len(), gts.len())?;
    let hits = preds.iter().zip(gts).filter(|(p, g)| is_tolerant(p, **g)).count();
    Ok(fraction(hits, preds.len()))
}

pub const CURVE_BINS: usize = 5;

/// Sampling band of the magnitude used for curves. Position uses the diagonal
/// offset, so its band is the per-axis band scaled by √2.
pub fn magnitude_range(attr: Attribute) -> (f64, f64) {
    match attr {
        Attribute::Color => DELTA_E_RANGE,
        Attribute::Size => (1.0 - SHRINK_RANGE.1, ENLARGE_RANGE.1 - 1.0),
        Attribute::Rotation => ROTATION_RANGE,
        Attribute::Position => (
            OFFSET_RANGE.0 * std::f64::consts::SQRT_2,
            OFFSET_RANGE.1 * std::f64::consts::SQRT_2,
        ),
    }
}

/// Bin edges `lo + (hi - lo)·i/5` for `i = 0..=5`.
pub fn bin_edges(attr: Attribute) -> [f64; CURVE_BINS + 1] {
    let (lo, hi) = magnitude_range(attr);
    let mut edges = [0.0; CURVE_BINS + 1];
    for (i, e) in edges.iter_mut().enumerate() {
        *e = lo + (hi - lo) * i as f64 / CURVE_BINS as f64;
    }
    edges[CURVE_BINS] = hi;
    edges
}

/// Bin of a magnitude: closed-open intervals with the last one closed.
/// `None` outside the band.
pub fn magnitude_bin(attr: Attribute, magnitude: f64) -> Option<usize> {
    let edges = bin_edges(attr);
    if !(edges[0]..=edges[CURVE_BINS]).contains(&magnitude) {
        return None;
    }
    Some((1..CURVE_BINS).filter(|&i| magnitude >= edges[i]).count())
}

/// Curve magnitude of a record: ΔE, |scale − 1|, |angle| or the diagonal
/// offset.
pub fn record_magnitude(record: &StimulusRecord, attr: Attribute) -> Option<f64> {
    record.spec().magnitude(attr)
}

/// Per-bin accuracy over the single-attribute records of `attr`; other
/// records are ignored. Empty bins are `None`.
pub fn magnitude_curve(records: &[&StimulusRecord], preds: &[PredKind], attr: Attribute) -> Result<Curve, EvalError> {
    check_len(preds.len(), records.len())?;
    let mut hits = [0usize; CURVE_BINS];
    let mut counts = [0usize; CURVE_BINS];
    for (r, p) in records.iter().zip(preds) {
        if r.types.len() != 1 || !r.types.contains(attr) {
            continue;
        }
        if let Some(b) = record_magnitude(r, attr).and_then(|m| magnitude_bin(attr, m)) {
            counts[b] += 1;
            hits[b] += usize::from(is_exact(p, Target::from(*r)));
        }
    }
    Ok(Curve::from_counts(attr, hits, counts))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Density {
    Small,
    Medium,
    Large,
}

impl Density {
    pub const ALL: [Density; 3] = [Density::Small, Density::Medium, Density::Large];

    /// At most 44 cells is small, 45 to 64 medium, more is large.
    pub fn of(cells: usize) -> Self {
        match cells {
            0..=44 => Density::Small,
            45..=64 => Density::Medium,
            _ => Density::Large,
        }
    }
}

pub fn density_breakdown(records: &[&StimulusRecord], preds: &[PredKind]) -> Result<[DensityRow; 3], EvalError> {
    check_len(preds.len(), records.len())?;
    let mut hits = [0usize; 3];
    let mut counts = [0usize; 3];
    for (r, p) in records.iter().zip(preds) {
        let b = Density::of(r.rows * r.cols) as usize;
        counts[b] += 1;
        hits[b] += usize::from(is_exact(p, Target::from(*r)));
    }
    Ok(Density::ALL.map(|d| DensityRow::new(d, hits[d as usize], counts[d as usize])))
}

/// Splits wrong but parseable answers into near misses (inside the tolerance
/// window) and far misses. Returns `(near, far)` fractions of that error set,
/// or `(0, 0)` without errors.
pub fn near_far_split(preds: &[PredKind], gts: &[Target]) -> Result<(f64, f64), EvalError> {
    check_len(preds.len(), gts.len())?;
    let (mut near, mut far) = (0usize, 0usize);
    for (p, g) in preds.iter().zip(gts) {
        if matches!(p, PredKind::Unparseable | PredKind::LabelSet(_)) || is_exact(p, *g) {
            continue;
        }
        if is_tolerant(p, *g) {
            near += 1;
        } else {
            far += 1;
        }
    }
    let errors = near + far;
    Ok((fraction(near, errors), fraction(far, errors)))
}

fn set_f1(pred: &BTreeSet<usize>, gt: &BTreeSet<usize>) -> f64 {
    if pred.is_empty() && gt.is_empty() {
        return 1.0;
    }
    let overlap = pred.intersection(gt).count();
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Exact match and mean per-sample F1 of label sets. An unparseable answer
/// (`None`) scores 0 on both; empty versus empty scores 1 on both.
pub fn em_f1(pred_sets: &[Option<BTreeSet<usize>>], gt_sets: &[BTreeSet<usize>]) -> Result<(f64, f64), EvalError> {
    check_len(pred_sets.len(), gt_sets.len())?;
    if gt_sets.is_empty() {
        return Ok((0.0, 0.0));
    }
    let (mut em, mut f1) = (0usize, 0.0);
    for (p, g) in pred_sets.iter().zip(gt_sets) {
        if let Some(p) = p {
            em += usize::from(p == g);
            f1 += set_f1(p, g);
        }
    }
    let n = gt_sets.len() as f64;
    Ok((em as f64 / n, f1 / n))
}
