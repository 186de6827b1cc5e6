//! Annotation sessions for the human-evaluation protocol.
//!
//! A session is an ordered list of stimuli (practice items first) walked by a
//! single cursor. Its state lives in an append-only JSONL event log; replaying
//! the log rebuilds the state, and a torn final line from an interrupted write
//! is ignored.

use std::collections::{BTreeSet, HashMap};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use oddgrid_core::evalkit::{evaluate_parsed, EvalError, EvalReport, PredKind, Prediction};
use oddgrid_core::gridsynth::{StimulusRecord, StimulusType};
use oddgrid_core::rng::derive_seed;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scored items drawn from each stimulus type.
pub const PER_TYPE: usize = 50;
pub const DEFAULT_PRACTICE: usize = 5;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("only {available} {ty} stimuli available, {needed} needed")]
    InsufficientSamples {
        ty: StimulusType,
        available: usize,
        needed: usize,
    },
    #[error("only {available} practice stimuli available, {needed} needed")]
    InsufficientPractice { available: usize, needed: usize },
    #[error("expected a response for {expected}, got {got}")]
    OutOfOrder { expected: String, got: String },
    #[error("{0} already has a response")]
    DuplicateResponse(String),
    #[error("cell ({row}, {col}) lies outside the {rows}×{cols} grid")]
    OutOfBoundsCell {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("session is complete")]
    SessionComplete,
    #[error("session {0} is not complete")]
    IncompleteSession(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown stimulus {0}")]
    UnknownStimulus(String),
    #[error("corrupt session log {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionItem {
    pub stimulus_id: String,
    pub practice: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationResponse {
    pub stimulus_id: String,
    /// 1-based.
    pub row: usize,
    /// 1-based.
    pub col: usize,
    pub latency_ms: u64,
    /// Milliseconds since the Unix epoch, assigned on receipt.
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub annotator_id: String,
    pub seed: u64,
    pub items: Vec<SessionItem>,
    pub cursor: usize,
    pub responses: Vec<AnnotationResponse>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub cursor: usize,
    pub remaining: usize,
    pub complete: bool,
}

/// Grid geometry needed to validate a response.
pub trait GridLookup {
    fn grid_of(&self, stimulus_id: &str) -> Option<(usize, usize)>;
}

impl GridLookup for HashMap<String, (usize, usize)> {
    fn grid_of(&self, stimulus_id: &str) -> Option<(usize, usize)> {
        self.get(stimulus_id).copied()
    }
}

fn session_rng(annotator_id: &str, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(&[b"session", annotator_id.as_bytes(), &seed.to_le_bytes()]))
}

/// Draws `PER_TYPE` scored items of every type from `pool`, shuffles them and
/// prepends `practice` items drawn from `practice_pool`. The order depends
/// only on (annotator, seed) and the record ids.
pub fn create_session(
    session_id: impl Into<String>,
    annotator_id: &str,
    seed: u64,
    pool: &[StimulusRecord],
    practice_pool: &[StimulusRecord],
    practice: usize,
) -> Result<SessionState, SessionError> {
    let mut rng = session_rng(annotator_id, seed);
    let mut scored = Vec::with_capacity(PER_TYPE * StimulusType::ALL.len());
    for ty in StimulusType::ALL {
        let mut ids: Vec<&str> = pool
            .iter()
            .filter(|r| r.stimulus_type() == Some(ty))
            .map(|r| r.id.as_str())
            .collect();
        if ids.len() < PER_TYPE {
            return Err(SessionError::InsufficientSamples {
                ty,
                available: ids.len(),
                needed: PER_TYPE,
            });
        }
        ids.sort_unstable();
        let mut picked = index::sample(&mut rng, ids.len(), PER_TYPE).into_vec();
        picked.sort_unstable();
        scored.extend(picked.into_iter().map(|i| ids[i]));
    }
    scored.shuffle(&mut rng);

    let mut practice_ids: Vec<&str> = practice_pool.iter().map(|r| r.id.as_str()).collect();
    if practice_ids.len() < practice {
        return Err(SessionError::InsufficientPractice {
            available: practice_ids.len(),
            needed: practice,
        });
    }
    practice_ids.sort_unstable();
    let mut picked = index::sample(&mut rng, practice_ids.len(), practice).into_vec();
    picked.shuffle(&mut rng);

    let items = picked
        .into_iter()
        .map(|i| SessionItem {
            stimulus_id: practice_ids[i].to_string(),
            practice: true,
        })
        .chain(scored.into_iter().map(|id| SessionItem {
            stimulus_id: id.to_string(),
            practice: false,
        }))
        .collect();
    Ok(SessionState {
        session_id: session_id.into(),
        annotator_id: annotator_id.to_string(),
        seed,
        items,
        cursor: 0,
        responses: Vec::new(),
    })
}

impl SessionState {
    pub fn is_complete(&self) -> bool {
        self.cursor >= self.items.len()
    }

    pub fn current(&self) -> Option<&SessionItem> {
        self.items.get(self.cursor)
    }

    pub fn practice_count(&self) -> usize {
        self.items.iter().filter(|i| i.practice).count()
    }

    fn ack(&self) -> Ack {
        Ack {
            cursor: self.cursor,
            remaining: self.items.len() - self.cursor,
            complete: self.is_complete(),
        }
    }

    /// Checks a response against the cursor and grid bounds without changing
    /// the state.
    pub fn check(&self, response: &AnnotationResponse, grids: &impl GridLookup) -> Result<(), SessionError> {
        if self.items[..self.cursor]
            .iter()
            .any(|i| i.stimulus_id == response.stimulus_id)
        {
            return Err(SessionError::DuplicateResponse(response.stimulus_id.clone()));
        }
        let current = self.current().ok_or(SessionError::SessionComplete)?;
        if current.stimulus_id != response.stimulus_id {
            return Err(SessionError::OutOfOrder {
                expected: current.stimulus_id.clone(),
                got: response.stimulus_id.clone(),
            });
        }
        let (rows, cols) = grids
            .grid_of(&response.stimulus_id)
            .ok_or_else(|| SessionError::UnknownStimulus(response.stimulus_id.clone()))?;
        if !(1..=rows).contains(&response.row) || !(1..=cols).contains(&response.col) {
            return Err(SessionError::OutOfBoundsCell {
                row: response.row,
                col: response.col,
                rows,
                cols,
            });
        }
        Ok(())
    }

    /// Validates and applies a response in memory.
    pub fn record_response(
        &mut self,
        response: AnnotationResponse,
        grids: &impl GridLookup,
    ) -> Result<Ack, SessionError> {
        self.check(&response, grids)?;
        self.responses.push(response);
        self.cursor += 1;
        Ok(self.ack())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Created {
        session_id: String,
        annotator_id: String,
        seed: u64,
        items: Vec<SessionItem>,
    },
    Response(AnnotationResponse),
}

/// Append-only event log of one session.
#[derive(Debug, Clone)]
pub struct SessionLog {
    path: PathBuf,
}

impl SessionLog {
    pub fn path_for(dir: &Path, session_id: &str) -> PathBuf {
        dir.join(format!("{session_id}.jsonl"))
    }

    fn append(&self, event: &Event) -> Result<(), SessionError> {
        let mut line = serde_json::to_vec(event).expect("events serialize");
        line.push(b'\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(&line)?;
        f.sync_data()?;
        Ok(())
    }

    /// Writes the creation event of a new session. Fails if the log exists.
    pub fn create(dir: &Path, state: &SessionState) -> Result<Self, SessionError> {
        fs::create_dir_all(dir)?;
        let path = Self::path_for(dir, &state.session_id);
        OpenOptions::new().write(true).create_new(true).open(&path)?;
        let log = Self { path };
        log.append(&Event::Created {
            session_id: state.session_id.clone(),
            annotator_id: state.annotator_id.clone(),
            seed: state.seed,
            items: state.items.clone(),
        })?;
        for r in &state.responses {
            log.append(&Event::Response(r.clone()))?;
        }
        Ok(log)
    }

    pub fn open(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Validates `response`, persists it and only then applies it.
    pub fn record(
        &self,
        state: &mut SessionState,
        response: AnnotationResponse,
        grids: &impl GridLookup,
    ) -> Result<Ack, SessionError> {
        state.check(&response, grids)?;
        self.append(&Event::Response(response.clone()))?;
        state.record_response(response, grids)
    }

    /// Truncates a torn final line left by an interrupted append, then
    /// replays. Used before resuming writes to an existing log.
    pub fn recover(path: impl Into<PathBuf>) -> Result<(Self, SessionState), SessionError> {
        let log = Self::open(path);
        let bytes = fs::read(&log.path)?;
        let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
        if keep < bytes.len() {
            OpenOptions::new().write(true).open(&log.path)?.set_len(keep as u64)?;
        }
        let state = log.replay()?;
        Ok((log, state))
    }

    /// Rebuilds the state by replaying the log. Responses are re-validated
    /// for order; a trailing partial line is dropped.
    pub fn replay(&self) -> Result<SessionState, SessionError> {
        let corrupt = |reason: String| SessionError::Corrupt {
            path: self.path.display().to_string(),
            reason,
        };
        let lines: Vec<String> = BufReader::new(fs::File::open(&self.path)?)
            .lines()
            .collect::<Result<_, _>>()?;
        let mut state: Option<SessionState> = None;
        let last = lines.len().saturating_sub(1);
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let event: Event = match serde_json::from_str(line) {
                Ok(e) => e,
                Err(_) if i == last && state.is_some() => break,
                Err(e) => return Err(corrupt(format!("line {}: {e}", i + 1))),
            };
            match (event, state.as_mut()) {
                (
                    Event::Created {
                        session_id,
                        annotator_id,
                        seed,
                        items,
                    },
                    None,
                ) => {
                    state = Some(SessionState {
                        session_id,
                        annotator_id,
                        seed,
                        items,
                        cursor: 0,
                        responses: Vec::new(),
                    })
                }
                (Event::Response(r), Some(s)) => {
                    let expected = s.current().map(|c| c.stimulus_id.clone());
                    if expected.as_deref() != Some(r.stimulus_id.as_str()) {
                        return Err(corrupt(format!("line {}: response out of order", i + 1)));
                    }
                    s.responses.push(r);
                    s.cursor += 1;
                }
                _ => return Err(corrupt(format!("line {}: unexpected event", i + 1))),
            }
        }
        state.ok_or_else(|| corrupt("no creation event".into()))
    }
}

/// Loads every session log in `dir`, sorted by session id.
pub fn load_sessions(dir: &Path) -> Result<Vec<SessionState>, SessionError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "jsonl") {
            out.push(SessionLog::open(path).replay()?);
        }
    }
    out.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorResult {
    pub annotator_id: String,
    pub session_id: String,
    pub report: EvalReport,
}

/// Per-annotator reports over scored items and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanReport {
    pub annotators: Vec<AnnotatorResult>,
    /// Mean accuracy per type in [`StimulusType::ALL`] order, over annotators
    /// that saw the type.
    pub mean_per_type: Vec<Option<f64>>,
    pub mean_total: f64,
}

/// Scores completed sessions against `records`; practice items are excluded.
pub fn human_report(sessions: &[SessionState], records: &[StimulusRecord]) -> Result<HumanReport, SessionError> {
    if sessions.is_empty() {
        return Err(SessionError::IncompleteSession("<none>".into()));
    }
    let by_id: HashMap<&str, &StimulusRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut annotators = Vec::with_capacity(sessions.len());
    for s in sessions {
        if !s.is_complete() {
            return Err(SessionError::IncompleteSession(s.session_id.clone()));
        }
        let mut scored = Vec::new();
        let mut preds = Vec::new();
        let mut seen = BTreeSet::new();
        for (item, resp) in s.items.iter().zip(&s.responses) {
            if item.practice {
                continue;
            }
            if !seen.insert(item.stimulus_id.as_str()) {
                return Err(SessionError::DuplicateResponse(item.stimulus_id.clone()));
            }
            let record = by_id
                .get(item.stimulus_id.as_str())
                .ok_or_else(|| SessionError::UnknownStimulus(item.stimulus_id.clone()))?;
            scored.push(*record);
            preds.push(Prediction {
                kind: PredKind::Cell(resp.row, resp.col),
                raw: format!("\\boxed{{Row {}, Column {}}}", resp.row, resp.col),
                format_ok: true,
                out_of_range: Vec::new(),
            });
        }
        annotators.push(AnnotatorResult {
            annotator_id: s.annotator_id.clone(),
            session_id: s.session_id.clone(),
            report: evaluate_parsed(&scored, &preds)?,
        });
    }
    let mean_per_type = (0..StimulusType::ALL.len())
        .map(|t| {
            let accs: Vec<f64> = annotators
                .iter()
                .filter_map(|a| a.report.per_type[t].accuracy)
                .collect();
            (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
        })
        .collect();
    let mean_total = annotators.iter().map(|a| a.report.total).sum::<f64>() / annotators.len() as f64;
    Ok(HumanReport {
        annotators,
        mean_per_type,
        mean_total,
    })
}
