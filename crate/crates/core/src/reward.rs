//! Distance-aware, format and binary rewards for grid answers.
//!
//! `r_d = 1` on an exact hit, otherwise `max(exp(-d² / 2σ²) - β, 0)` with
//! `σ = λ·sqrt(rows² + cols²)`; the blend is `(1 - ω)·r_d + ω·r_f`.

use std::io::{BufRead, Write};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalkit::{parse_answer, PredKind, Target};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub lambda: f64,
    pub beta: f64,
    pub omega: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            lambda: 0.25,
            beta: 0.3,
            omega: 0.2,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("lambda must be positive, got {0}")]
    Lambda(f64),
    #[error("beta must lie in [0, 1), got {0}")]
    Beta(f64),
    #[error("omega must lie in [0, 1], got {0}")]
    Omega(f64),
    #[error("line {line}: {reason}")]
    BatchLine { line: usize, reason: String },
    #[error("io: {0}")]
    Io(String),
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(RewardError::Lambda(self.lambda));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(RewardError::Beta(self.beta));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(RewardError::Omega(self.omega));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Grid distance in cells; `None` when no comparable cell exists.
    pub d: Option<f64>,
    pub sigma: f64,
    pub r_d: f64,
    pub r_f: f64,
    pub r_overall: f64,
}

/// Euclidean distance between two cells.
pub fn grid_distance(pred: (usize, usize), gt: (usize, usize)) -> f64 {
    let dr = pred.0 as f64 - gt.0 as f64;
    let dc = pred.1 as f64 - gt.1 as f64;
    (dr * dr + dc * dc).sqrt()
}

/// Gaussian width, proportional to the grid diagonal.
pub fn sigma(rows: usize, cols: usize, params: &RewardParams) -> f64 {
    let (r, c) = (rows as f64, cols as f64);
    params.lambda * (r * r + c * c).sqrt()
}

/// Distance reward as a function of `d` alone.
pub fn decay(d: f64, sigma: f64, beta: f64) -> f64 {
    if d == 0.0 {
        1.0
    } else {
        ((-d * d / (2.0 * sigma * sigma)).exp() - beta).max(0.0)
    }
}

/// Distance below which `decay` is positive: `σ·sqrt(-2 ln β)`.
pub fn clamp_threshold(sigma: f64, beta: f64) -> f64 {
    sigma * (-2.0 * beta.ln()).sqrt()
}

/// Distance and distance reward of a parsed answer. Cells outside the grid,
/// unparseable answers and sentinel mismatches earn nothing.
pub fn distance_reward(
    pred: &PredKind,
    gt: Target,
    rows: usize,
    cols: usize,
    params: &RewardParams,
) -> (Option<f64>, f64) {
    match (pred, gt) {
        (PredKind::NoOdd, Target::NoOdd) => (Some(0.0), 1.0),
        (&PredKind::Cell(r, c), Target::Cell(gr, gc)) => {
            let d = grid_distance((r, c), (gr, gc));
            if r > rows || c > cols {
                (Some(d), 0.0)
            } else {
                (Some(d), decay(d, sigma(rows, cols, params), params.beta))
            }
        }
        _ => (None, 0.0),
    }
}

static STRICT_BOX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\\boxed\{Row (\d+), Column (\d+)\}\s*\z").expect("valid regex"));

/// 1 when the text holds exactly one `\boxed{Row X, Column Y}` with integer
/// indices and nothing but whitespace after it.
pub fn format_reward(raw: &str) -> f64 {
    let ok = raw.matches(r"\boxed").count() == 1
        && STRICT_BOX
            .captures(raw)
            .is_some_and(|c| c[1].parse::<u64>().is_ok() && c[2].parse::<u64>().is_ok());
    if ok {
        1.0
    } else {
        0.0
    }
}

pub fn overall_reward(r_d: f64, r_f: f64, params: &RewardParams) -> f64 {
    (1.0 - params.omega) * r_d + params.omega * r_f
}

/// 1 for an exact hit, 0 otherwise.
pub fn binary_reward(pred: &PredKind, gt: Target) -> f64 {
    let hit = match (pred, gt) {
        (PredKind::NoOdd, Target::NoOdd) => true,
        (&PredKind::Cell(r, c), Target::Cell(gr, gc)) => (r, c) == (gr, gc),
        _ => false,
    };
    if hit {
        1.0
    } else {
        0.0
    }
}

/// Scores raw answer text: lenient cell extraction for `r_d`, strict format
/// for `r_f`.
pub fn score_answer(raw: &str, gt: Target, rows: usize, cols: usize, params: &RewardParams) -> RewardBreakdown {
    let pred = parse_answer(raw);
    let (d, r_d) = distance_reward(&pred.kind, gt, rows, cols, params);
    let r_f = format_reward(raw);
    RewardBreakdown {
        d,
        sigma: sigma(rows, cols, params),
        r_d,
        r_f,
        r_overall: overall_reward(r_d, r_f, params),
    }
}

/// One input line of batch scoring. A ground truth of (0, 0) means no odd
/// item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchInput {
    pub id: String,
    pub raw_text: String,
    pub gt_row: usize,
    pub gt_col: usize,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutput {
    pub id: String,
    #[serde(flatten)]
    pub reward: RewardBreakdown,
    pub binary: f64,
}

/// Scores line-delimited [`BatchInput`] records into [`BatchOutput`] lines.
/// Returns the number of records scored.
pub fn score_batch<R: BufRead, W: Write>(input: R, mut output: W, params: &RewardParams) -> Result<usize, RewardError> {
    params.validate()?;
    let io = |e: std::io::Error| RewardError::Io(e.to_string());
    let mut n = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: BatchInput = serde_json::from_str(&line).map_err(|e| RewardError::BatchLine {
            line: i + 1,
            reason: e.to_string(),
        })?;
        let gt = Target::from_indices(rec.gt_row, rec.gt_col).ok_or_else(|| RewardError::BatchLine {
            line: i + 1,
            reason: format!(
                "ground truth ({}, {}) is neither a cell nor (0, 0)",
                rec.gt_row, rec.gt_col
            ),
        })?;
        let reward = score_answer(&rec.raw_text, gt, rec.rows, rec.cols, params);
        let pred = parse_answer(&rec.raw_text);
        let out = BatchOutput {
            id: rec.id,
            reward,
            binary: binary_reward(&pred.kind, gt),
        };
        serde_json::to_writer(&mut output, &out).map_err(|e| RewardError::Io(e.to_string()))?;
        output.write_all(b"\n").map_err(io)?;
        n += 1;
    }
    output.flush().map_err(io)?;
    Ok(n)
}
