use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    bin_edges, density_breakdown, is_exact, magnitude_curve, near_far_split, parse_answer, tol_accuracy, Density,
    EvalError, PredKind, Prediction, Target, CURVE_BINS,
};
use crate::gridsynth::{StimulusRecord, StimulusType};
use crate::perturb::Attribute;

/// Stored with every report so readers know how answers were extracted.
pub const PARSER_NOTE: &str =
    "last boxed expression, case-insensitive row/column extraction; format scored separately and strictly";

fn ratio(hits: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| hits as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeRow {
    pub name: String,
    pub n: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub attribute: Attribute,
    pub edges: [f64; CURVE_BINS + 1],
    pub counts: [usize; CURVE_BINS],
    pub correct: [usize; CURVE_BINS],
    /// `None` marks an empty bin.
    pub accuracy: [Option<f64>; CURVE_BINS],
}

impl Curve {
    pub fn from_counts(attribute: Attribute, correct: [usize; CURVE_BINS], counts: [usize; CURVE_BINS]) -> Self {
        let mut accuracy = [None; CURVE_BINS];
        for i in 0..CURVE_BINS {
            accuracy[i] = ratio(correct[i], counts[i]);
        }
        Self {
            attribute,
            edges: bin_edges(attribute),
            counts,
            correct,
            accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub density: Density,
    pub n: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

impl DensityRow {
    pub fn new(density: Density, correct: usize, n: usize) -> Self {
        Self {
            density,
            n,
            correct,
            accuracy: ratio(correct, n),
        }
    }
}

/// Metric summary of one prediction set. Accuracies are fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    /// Records without any prediction; scored as unparseable.
    pub missing: usize,
    pub unparseable: usize,
    pub format_ok: usize,
    pub per_type: Vec<TypeRow>,
    pub total: f64,
    pub tol_total: f64,
    /// Accuracy over records rendered with index labels, if any.
    pub labeled_total: Option<f64>,
    pub magnitude_curves: Vec<Curve>,
    pub density: Vec<DensityRow>,
    pub near_frac: f64,
    pub far_frac: f64,
    pub parser: String,
}

/// Scores parsed predictions aligned with `records`.
pub fn evaluate_parsed(records: &[&StimulusRecord], preds: &[Prediction]) -> Result<EvalReport, EvalError> {
    if records.len() != preds.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            gts: records.len(),
        });
    }
    let kinds: Vec<PredKind> = preds.iter().map(|p| p.kind.clone()).collect();
    let gts: Vec<Target> = records.iter().map(|r| Target::from(*r)).collect();

    let mut type_hits = [0usize; 7];
    let mut type_counts = [0usize; 7];
    let (mut hits, mut labeled_hits, mut labeled_n) = (0usize, 0usize, 0usize);
    for ((r, p), g) in records.iter().zip(&kinds).zip(&gts) {
        let hit = is_exact(p, *g);
        hits += usize::from(hit);
        if let Some(t) = r.stimulus_type() {
            type_counts[t.index()] += 1;
            type_hits[t.index()] += usize::from(hit);
        }
        if r.labeled {
            labeled_n += 1;
            labeled_hits += usize::from(hit);
        }
    }
    let per_type = StimulusType::ALL
        .iter()
        .map(|t| TypeRow {
            name: t.to_string(),
            n: type_counts[t.index()],
            correct: type_hits[t.index()],
            accuracy: ratio(type_hits[t.index()], type_counts[t.index()]),
        })
        .collect();
    let magnitude_curves = Attribute::ALL
        .iter()
        .map(|a| magnitude_curve(records, &kinds, *a))
        .collect::<Result<_, _>>()?;
    let (near_frac, far_frac) = near_far_split(&kinds, &gts)?;
    Ok(EvalReport {
        n: records.len(),
        missing: 0,
        unparseable: kinds.iter().filter(|k| **k == PredKind::Unparseable).count(),
        format_ok: preds.iter().filter(|p| p.format_ok).count(),
        per_type,
        total: ratio(hits, records.len()).unwrap_or(0.0),
        tol_total: tol_accuracy(&kinds, &gts)?,
        labeled_total: ratio(labeled_hits, labeled_n),
        magnitude_curves,
        density: density_breakdown(records, &kinds)?.to_vec(),
        near_frac,
        far_frac,
        parser: PARSER_NOTE.to_string(),
    })
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub id: String,
    pub raw_text: String,
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionLine>, EvalError> {
    let file = fs::File::open(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| EvalError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_predictions(path: &Path, lines: &[PredictionLine]) -> Result<(), EvalError> {
    let io = |e: std::io::Error| EvalError::Io(e.to_string());
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    for l in lines {
        serde_json::to_writer(&mut w, l).map_err(|e| EvalError::Io(e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Joins raw predictions to records by id and scores them. Records without a
/// prediction count as unparseable; predictions for unknown ids are ignored.
pub fn evaluate(records: &[StimulusRecord], predictions: &[PredictionLine]) -> Result<EvalReport, EvalError> {
    let mut by_id: HashMap<&str, &str> = HashMap::with_capacity(predictions.len());
    let mut seen = HashSet::new();
    for p in predictions {
        if !seen.insert(p.id.as_str()) {
            return Err(EvalError::DuplicatePrediction(p.id.clone()));
        }
        by_id.insert(&p.id, &p.raw_text);
    }
    let mut missing = 0;
    let parsed: Vec<Prediction> = records
        .iter()
        .map(|r| match by_id.get(r.id.as_str()) {
            Some(raw) => parse_answer(raw),
            None => {
                missing += 1;
                parse_answer("")
            }
        })
        .collect();
    let refs: Vec<&StimulusRecord> = records.iter().collect();
    let mut report = evaluate_parsed(&refs, &parsed)?;
    report.missing = missing;
    Ok(report)
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v))
}

impl EvalReport {
    /// Plain-text table, accuracies in percent.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<10}", "");
        for row in &self.per_type {
            let _ = write!(s, "{:>10}", row.name);
        }
        let _ = writeln!(s, "{:>10}", "Total");
        let _ = write!(s, "{:<10}", "Accuracy");
        for row in &self.per_type {
            let _ = write!(s, "{:>10}", pct(row.accuracy));
        }
        let _ = writeln!(s, "{:>10}", pct(Some(self.total)));
        let _ = write!(s, "{:<10}", "n");
        for row in &self.per_type {
            let _ = write!(s, "{:>10}", row.n);
        }
        let _ = writeln!(s, "{:>10}", self.n);
        let _ = writeln!(s);
        let _ = writeln!(s, "TolAcc      {}", pct(Some(self.tol_total)));
        if let Some(l) = self.labeled_total {
            let _ = writeln!(s, "LabeledAcc  {}", pct(Some(l)));
        }
        let _ = writeln!(
            s,
            "Errors      near {} / far {}",
            pct(Some(self.near_frac)),
            pct(Some(self.far_frac))
        );
        let _ = writeln!(
            s,
            "Answers     {} unparseable, {} missing, {} strictly formatted",
            self.unparseable, self.missing, self.format_ok
        );
        let _ = writeln!(s);
        let _ = write!(s, "{:<10}", "Density");
        for d in &self.density {
            let _ = write!(s, "{:>10}", format!("{:?}", d.density));
        }
        let _ = writeln!(s);
        let _ = write!(s, "{:<10}", "");
        for d in &self.density {
            let _ = write!(s, "{:>10}", pct(d.accuracy));
        }
        let _ = writeln!(s);
        let _ = writeln!(s);
        for c in &self.magnitude_curves {
            let _ = write!(s, "{:<10}", c.attribute.name());
            for a in c.accuracy {
                let _ = write!(s, "{:>10}", pct(a));
            }
            let _ = writeln!(s);
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
