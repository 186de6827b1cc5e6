use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use futures::stream::{self, StreamExt};
use oddgrid_core::evalkit::PredictionLine;
use oddgrid_core::gridsynth::{SequenceRecord, StimulusRecord};
use serde::{Deserialize, Serialize};

use crate::{
    build_prompt, prompt_hash, Client, DiskCache, GatewayError, PromptMode, QueryRecord, QueryRequest, Subject,
};

/// One benchmark question with images referenced by path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchItem {
    pub id: String,
    pub prompt: String,
    pub image_paths: Vec<PathBuf>,
}

pub fn grid_items(
    records: &[StimulusRecord],
    data_dir: &Path,
    mode: PromptMode,
) -> Result<Vec<BenchItem>, GatewayError> {
    records
        .iter()
        .map(|r| {
            Ok(BenchItem {
                id: r.id.clone(),
                prompt: build_prompt(Subject::Grid(r), mode)?,
                image_paths: vec![data_dir.join(&r.image_path)],
            })
        })
        .collect()
}

pub fn sequence_items(records: &[SequenceRecord], data_dir: &Path) -> Result<Vec<BenchItem>, GatewayError> {
    records
        .iter()
        .map(|r| {
            Ok(BenchItem {
                id: r.id.clone(),
                prompt: build_prompt(Subject::Sequence(r), PromptMode::Sequence)?,
                image_paths: r.image_paths.iter().map(|p| data_dir.join(p)).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Requested concurrency; further capped by the endpoint's `max_parallel`.
    pub parallelism: usize,
    /// Write predictions for the successful subset instead of failing.
    pub allow_partial: bool,
    pub cache: Option<DiskCache>,
    pub predictions_path: Option<PathBuf>,
    /// Sidecar listing failed ids and reasons.
    pub failures_path: Option<PathBuf>,
    /// Full query records, in manifest order.
    pub records_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureLine {
    pub id: String,
    pub error: String,
    pub transient: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub total: usize,
    pub queried: usize,
    pub cached: usize,
    pub concurrency: usize,
    /// Successful answers in manifest order.
    pub records: Vec<QueryRecord>,
    pub failures: Vec<FailureLine>,
}

impl RunSummary {
    pub fn predictions(&self) -> Vec<PredictionLine> {
        self.records
            .iter()
            .map(|r| PredictionLine {
                id: r.stimulus_id.clone(),
                raw_text: r.raw_response.clone(),
            })
            .collect()
    }
}

async fn answer(
    client: &Client,
    item: &BenchItem,
    cache: Option<&DiskCache>,
) -> Result<(QueryRecord, bool), GatewayError> {
    let hash = prompt_hash(&item.prompt);
    if let Some(hit) = cache.and_then(|c| c.get(&item.id, &hash, client.fingerprint())) {
        return Ok((hit, true));
    }
    let mut images = Vec::with_capacity(item.image_paths.len());
    for p in &item.image_paths {
        images.push(
            tokio::fs::read(p)
                .await
                .map_err(|e| GatewayError::Io(format!("{}: {e}", p.display())))?,
        );
    }
    let record = client
        .query(&QueryRequest {
            stimulus_id: item.id.clone(),
            prompt: item.prompt.clone(),
            images,
        })
        .await?;
    if let Some(c) = cache {
        c.put(&record)?;
    }
    Ok((record, false))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), GatewayError> {
    let io = |e: std::io::Error| GatewayError::Io(format!("{}: {e}", path.display()));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(|e| GatewayError::Io(e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Position in the manifest, then the record and whether it came from cache.
type Outcome = (usize, Result<(QueryRecord, bool), GatewayError>);

/// Answers every item with at most `min(parallelism, max_parallel)` requests
/// in flight. Items already in the cache are not sent. Outputs are written in
/// manifest order; without `allow_partial`, any failure suppresses the
/// predictions file and is reported as [`GatewayError::PartialFailure`] after
/// the failure sidecar is written.
pub async fn run_benchmark(
    client: &Client,
    items: &[BenchItem],
    opts: &RunOptions,
) -> Result<RunSummary, GatewayError> {
    let mut seen = HashSet::new();
    for item in items {
        if !seen.insert(item.id.as_str()) {
            return Err(GatewayError::Config(format!("duplicate stimulus id {}", item.id)));
        }
    }
    let concurrency = opts.parallelism.min(client.endpoint().max_parallel).max(1);
    let cache = opts.cache.as_ref();
    let mut results: Vec<Outcome> = stream::iter(items.iter().enumerate())
        .map(|(i, item)| async move { (i, answer(client, item, cache).await) })
        .buffer_unordered(concurrency)
        .collect()
        .await;
    results.sort_by_key(|(i, _)| *i);

    let mut summary = RunSummary {
        total: items.len(),
        concurrency,
        ..RunSummary::default()
    };
    for (i, res) in results {
        match res {
            Ok((record, cached)) => {
                if cached {
                    summary.cached += 1;
                } else {
                    summary.queried += 1;
                }
                summary.records.push(record);
            }
            Err(e) => summary.failures.push(FailureLine {
                id: items[i].id.clone(),
                transient: e.is_transient(),
                error: e.to_string(),
            }),
        }
    }

    if let Some(p) = &opts.failures_path {
        write_jsonl(p, &summary.failures)?;
    }
    if !summary.failures.is_empty() && !opts.allow_partial {
        return Err(GatewayError::PartialFailure {
            failed: summary.failures.len(),
            total: summary.total,
        });
    }
    if let Some(p) = &opts.predictions_path {
        write_jsonl(p, &summary.predictions())?;
    }
    if let Some(p) = &opts.records_path {
        write_jsonl(p, &summary.records)?;
    }
    Ok(summary)
}
