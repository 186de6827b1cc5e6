//! The `oddgrid` command line. Every subcommand checks its arguments and
//! inputs before writing anything; usage problems exit with status 2 and
//! operational failures with status 1.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use oddgrid_core::curriculum::{self, partition_sized, stage_stream, BUCKET_SIZES};
use oddgrid_core::evalkit::{self, em_f1, parse_sequence_answer, read_predictions, EvalReport, PredKind};
use oddgrid_core::gridsynth::{
    build_sequences, build_split, read_metadata, read_sequences, write_sequences, write_split, BuildOptions,
    DatasetPlan, GridOverride, IconPools, Split, SplitPlan, StimulusType, MIN_BLOCK_PX,
};
use oddgrid_core::icon_store::{ingest_dir, read_category_map, synthetic, IconManifest, IconSource};
use oddgrid_core::reward::{score_batch, RewardParams};
use oddgrid_modelgw::{
    grid_items, run_benchmark, sequence_items, Client, DiskCache, ModelEndpoint, PromptMode, RunOptions,
};
use serde::Serialize;

use crate::server::{self, AppState, Catalog, ServiceConfig};
use crate::session::{human_report, load_sessions, HumanReport};

pub const DATA_DIR_VAR: &str = "ODDGRID_DATA_DIR";
pub const API_KEY_VAR_VAR: &str = "ODDGRID_API_KEY_VAR";
const DEFAULT_DATA_DIR: &str = "data";
const DEFAULT_SEQUENCES: usize = 100;

#[derive(Debug, Parser)]
#[command(name = "oddgrid", version, about = "Odd-one-out grid benchmark toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize a directory of SVG icons into a manifest.
    Ingest(IngestArgs),
    /// Write procedurally generated fixture icons.
    SynthIcons(SynthIconsArgs),
    /// Generate a dataset split (or sequence stimuli) with images and metadata.
    Generate(GenerateArgs),
    /// Score training records and write the easy/medium/hard curriculum plan.
    Split(SplitArgs),
    /// Score raw answers with the distance-aware reward (JSONL in, JSONL out).
    RewardScore(RewardScoreArgs),
    /// Score a predictions file against metadata.
    Evaluate(EvaluateArgs),
    /// Query a chat-completions endpoint for every stimulus.
    Run(RunArgs),
    /// Tabulate several prediction files and annotation sessions.
    Report(ReportArgs),
    /// Serve the annotation-session API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub dir: PathBuf,
    /// `testval` (curated, categorized) or `train`.
    #[arg(long)]
    pub source: IconSource,
    /// Two-column id,category table; required for the curated source.
    #[arg(long)]
    pub categories: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthIconsArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "glyph")]
    pub prefix: String,
    /// Where to write the id,category table.
    #[arg(long)]
    pub categories_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub split: Split,
    /// Records to generate; defaults to the standard split size.
    #[arg(long)]
    pub count: Option<usize>,
    /// Comma-separated types, e.g. `Color,Size,3-Type`.
    #[arg(long, value_delimiter = ',')]
    pub types: Option<Vec<StimulusType>>,
    /// Fixed cell side in pixels (at least 32).
    #[arg(long)]
    pub resolution_override: Option<u32>,
    /// Draw row and column indices around the grid.
    #[arg(long)]
    pub labeled: bool,
    /// Generate multi-image sequence stimuli instead of grids.
    #[arg(long)]
    pub sequences: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Icon manifest; defaults to `$ODDGRID_DATA_DIR/icons/{testval,train}.jsonl`.
    #[arg(long)]
    pub icons: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Training metadata (`metadata.jsonl`).
    #[arg(long)]
    pub train_manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bucket sizes easy,medium,hard.
    #[arg(long, value_delimiter = ',')]
    pub bucket_sizes: Option<Vec<usize>>,
    /// Also write the shuffled id stream of each training step here.
    #[arg(long)]
    pub stages_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RewardScoreArgs {
    /// Input JSONL, `-` for stdin.
    #[arg(long, default_value = "-")]
    pub input: PathBuf,
    /// Output JSONL, `-` for stdout.
    #[arg(long, default_value = "-")]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.3)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.2)]
    pub omega: f64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Grid `metadata.jsonl` or, with `--sequences`, `sequences.jsonl`.
    #[arg(long)]
    pub metadata: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub sequences: bool,
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Base URL of a chat-completions API, e.g. `http://host:8000/v1`.
    #[arg(long)]
    pub endpoint: String,
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value = "grid")]
    pub mode: PromptMode,
    #[arg(long, default_value_t = 8)]
    pub parallelism: usize,
    #[arg(long)]
    pub allow_partial: bool,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Grid `metadata.jsonl`, or `sequences.jsonl` in sequence mode. Image
    /// paths resolve against its directory.
    #[arg(long)]
    pub metadata: PathBuf,
    /// Predictions JSONL to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Failure sidecar; defaults to `<out>.failures.jsonl`.
    #[arg(long)]
    pub failures: Option<PathBuf>,
    /// Full query records (prompt, hashes, latency) as JSONL.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Name of the environment variable holding the bearer token; falls back
    /// to `$ODDGRID_API_KEY_VAR`.
    #[arg(long)]
    pub api_key_var: Option<String>,
    #[arg(long)]
    pub max_parallel: Option<usize>,
    #[arg(long, default_value_t = 1024)]
    pub max_new_tokens: u32,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 1.0)]
    pub top_p: f64,
    #[arg(long, default_value_t = 120_000)]
    pub timeout_ms: u64,
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Grid metadata the predictions and sessions refer to.
    #[arg(long)]
    pub metadata: PathBuf,
    /// `NAME=PATH` of a predictions file; repeatable.
    #[arg(long = "predictions")]
    pub predictions: Vec<String>,
    /// Directory of annotation session logs.
    #[arg(long)]
    pub sessions: Option<PathBuf>,
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory with `test/` and `val/` splits; defaults to `$ODDGRID_DATA_DIR`.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub sessions_dir: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[arg(long, default_value_t = crate::session::DEFAULT_PRACTICE)]
    pub practice: usize,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Failed(e)
    }
}

type CliResult = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn require_file(path: &Path, what: &str) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_VAR).map_or_else(|| PathBuf::from(DEFAULT_DATA_DIR), PathBuf::from)
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Failed(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::SynthIcons(a) => synth_icons(a),
        Command::Generate(a) => generate(a),
        Command::Split(a) => split(a),
        Command::RewardScore(a) => reward_score(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Run(a) => run_models(a),
        Command::Report(a) => report(a),
        Command::Serve(a) => serve(a),
    }
}

fn ingest(a: IngestArgs) -> CliResult {
    if !a.dir.is_dir() {
        return Err(usage(format!("icon directory {} does not exist", a.dir.display())));
    }
    if let Some(c) = &a.categories {
        require_file(c, "category table")?;
    } else if a.source == IconSource::TestValCollection {
        return Err(usage("the testval source needs --categories"));
    }
    let map = a
        .categories
        .as_deref()
        .map(read_category_map)
        .transpose()
        .context("reading category table")?;
    let report = ingest_dir(&a.dir, a.source, map.as_ref()).context("ingesting icons")?;
    for f in &report.failures {
        eprintln!("skipped {}: {}", f.file.display(), f.reason);
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).context("creating output directory")?;
    }
    report.manifest.write(&a.out).context("writing manifest")?;
    println!(
        "{} icons, {} skipped, checksum {}",
        report.manifest.len(),
        report.failures.len(),
        report.manifest.checksum()
    );
    Ok(())
}

fn synth_icons(a: SynthIconsArgs) -> CliResult {
    if a.count == 0 {
        return Err(usage("--count must be positive"));
    }
    let table = synthetic::write_icon_dir(&a.out_dir, &a.prefix, a.count, a.seed).context("writing icons")?;
    if let Some(p) = &a.categories_out {
        fs::write(p, table).context("writing category table")?;
    }
    println!("{} icons written to {}", a.count, a.out_dir.display());
    Ok(())
}

fn default_icons(split: Split) -> PathBuf {
    let name = if split == Split::Train {
        "train.jsonl"
    } else {
        "testval.jsonl"
    };
    data_dir().join("icons").join(name)
}

fn generate(a: GenerateArgs) -> CliResult {
    if a.count == Some(0) {
        return Err(usage("--count must be positive"));
    }
    if let Some(px) = a.resolution_override {
        if px < MIN_BLOCK_PX {
            return Err(usage(format!("--resolution-override must be at least {MIN_BLOCK_PX}")));
        }
    }
    let types = a.types.clone().unwrap_or_else(|| StimulusType::ALL.to_vec());
    if types.is_empty() {
        return Err(usage("--types is empty"));
    }
    let unique: BTreeSet<_> = types.iter().collect();
    if unique.len() != types.len() {
        return Err(usage("--types lists a type twice"));
    }
    if a.sequences && (a.types.is_some() || a.labeled || a.resolution_override.is_some()) {
        return Err(usage(
            "--sequences does not combine with --types, --labeled or --resolution-override",
        ));
    }
    let icons = a.icons.clone().unwrap_or_else(|| default_icons(a.split));
    require_file(&icons, "icon manifest")?;

    let pool = IconManifest::read(&icons).context("reading icon manifest")?;
    if a.sequences {
        let out = a.out_dir.clone().unwrap_or_else(|| data_dir().join("sequences"));
        let records =
            build_sequences(a.seed, &pool, a.count.unwrap_or(DEFAULT_SEQUENCES)).context("generating sequences")?;
        write_sequences(&out, &records, &pool).context("writing sequences")?;
        println!("{} sequences written to {}", records.len(), out.display());
        return Ok(());
    }

    let default_total = DatasetPlan::default().split(a.split).map(|p| p.total).unwrap_or(0);
    let plan = match (a.count, &a.types) {
        (None, None) => DatasetPlan::default()
            .split(a.split)
            .cloned()
            .ok_or_else(|| anyhow!("no default plan for {}", a.split))?,
        (count, _) => {
            let total = count.unwrap_or_else(|| (default_total * types.len()).div_ceil(StimulusType::ALL.len()));
            SplitPlan::even(a.split, total, &types)
        }
    };
    let options = BuildOptions {
        grid_override: a.resolution_override.map(GridOverride::resolution),
        labeled: a.labeled,
    };
    let pools = IconPools {
        curated: (a.split != Split::Train).then(|| pool.clone()),
        train: (a.split == Split::Train).then(|| pool.clone()),
    };
    let out = a.out_dir.clone().unwrap_or_else(|| data_dir().join(a.split.name()));
    let records = build_split(a.seed, &pools, &plan, options).context("generating metadata")?;
    let summary = write_split(&out, a.seed, a.split, &records, &pool).context("writing split")?;
    println!(
        "{} {} records written to {} (metadata checksum {})",
        summary.total,
        a.split,
        out.display(),
        summary.metadata_checksum
    );
    Ok(())
}

fn split(a: SplitArgs) -> CliResult {
    require_file(&a.train_manifest, "training metadata")?;
    let sizes: [usize; 3] = match &a.bucket_sizes {
        None => BUCKET_SIZES,
        Some(v) => v
            .as_slice()
            .try_into()
            .map_err(|_| usage("--bucket-sizes needs three values"))?,
    };
    let records = read_metadata(&a.train_manifest).context("reading training metadata")?;
    let scores = records
        .iter()
        .map(|r| Ok((r.id.clone(), curriculum::score(r)?)))
        .collect::<Result<Vec<_>, curriculum::CurriculumError>>()
        .context("scoring records")?;
    let plan = partition_sized(&scores, sizes).context("partitioning")?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).context("creating output directory")?;
    }
    plan.write_csv(fs::File::create(&a.out).context("creating plan file")?)
        .context("writing plan")?;
    if let Some(dir) = &a.stages_dir {
        fs::create_dir_all(dir).context("creating stages directory")?;
        for step in 1..=3u8 {
            let ids = stage_stream(&plan, step, a.seed).context("building stage stream")?;
            fs::write(dir.join(format!("stage{step}.txt")), ids.join("\n") + "\n").context("writing stage stream")?;
        }
    }
    let [e, m, h] = plan.bucket_sizes();
    println!(
        "{}: easy {e}, medium {m}, hard {h}; checksum {}",
        a.out.display(),
        plan.checksum()
    );
    Ok(())
}

fn reward_score(a: RewardScoreArgs) -> CliResult {
    let params = RewardParams {
        lambda: a.lambda,
        beta: a.beta,
        omega: a.omega,
    };
    params.validate().map_err(|e| usage(e.to_string()))?;
    let stdin = a.input.as_os_str() == "-";
    if !stdin {
        require_file(&a.input, "input")?;
    }
    let input: Box<dyn BufRead> = if stdin {
        Box::new(BufReader::new(io::stdin()))
    } else {
        Box::new(BufReader::new(fs::File::open(&a.input).context("opening input")?))
    };
    let output: Box<dyn Write> = if a.output.as_os_str() == "-" {
        Box::new(BufWriter::new(io::stdout()))
    } else {
        Box::new(BufWriter::new(fs::File::create(&a.output).context("creating output")?))
    };
    let n = score_batch(input, output, &params).context("scoring")?;
    eprintln!("scored {n} answers");
    Ok(())
}

#[derive(Debug, Serialize)]
struct SequenceReport {
    n: usize,
    em: f64,
    f1: f64,
    unparseable: usize,
    format_ok: usize,
    out_of_range: usize,
    missing: usize,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn evaluate(a: EvaluateArgs) -> CliResult {
    require_file(&a.metadata, "metadata")?;
    require_file(&a.predictions, "predictions")?;
    let preds = read_predictions(&a.predictions).context("reading predictions")?;
    if a.sequences {
        let records = read_sequences(&a.metadata).context("reading sequences")?;
        let by_id: std::collections::HashMap<&str, &str> =
            preds.iter().map(|p| (p.id.as_str(), p.raw_text.as_str())).collect();
        let (mut pred_sets, mut gt_sets) = (Vec::new(), Vec::new());
        let mut report = SequenceReport {
            n: records.len(),
            em: 0.0,
            f1: 0.0,
            unparseable: 0,
            format_ok: 0,
            out_of_range: 0,
            missing: 0,
        };
        for r in &records {
            let raw = by_id.get(r.id.as_str()).copied().unwrap_or_else(|| {
                report.missing += 1;
                ""
            });
            let p = parse_sequence_answer(raw, r.n);
            report.format_ok += usize::from(p.format_ok);
            report.out_of_range += usize::from(!p.out_of_range.is_empty());
            pred_sets.push(match p.kind {
                PredKind::LabelSet(s) => Some(s),
                _ => {
                    report.unparseable += 1;
                    None
                }
            });
            gt_sets.push(r.odd_indices.iter().copied().collect());
        }
        let (em, f1) = em_f1(&pred_sets, &gt_sets).context("scoring")?;
        report.em = em;
        report.f1 = f1;
        println!(
            "EM {:.2}  F1 {:.2}  ({} sequences, {} unparseable, {} missing)",
            100.0 * em,
            100.0 * f1,
            report.n,
            report.unparseable,
            report.missing
        );
        if let Some(p) = &a.json_out {
            write_json(p, &report)?;
        }
        return Ok(());
    }
    let records = read_metadata(&a.metadata).context("reading metadata")?;
    let report = evalkit::evaluate(&records, &preds).context("scoring")?;
    print!("{}", report.to_table());
    if let Some(p) = &a.json_out {
        fs::write(p, report.to_json() + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn run_models(a: RunArgs) -> CliResult {
    require_file(&a.metadata, "metadata")?;
    if a.parallelism == 0 {
        return Err(usage("--parallelism must be positive"));
    }
    let api_key_var = a
        .api_key_var
        .clone()
        .or_else(|| std::env::var(API_KEY_VAR_VAR).ok().filter(|v| !v.is_empty()));
    let endpoint = ModelEndpoint {
        base_url: a.endpoint.clone(),
        model: a.model.clone(),
        api_key_var,
        timeout_ms: a.timeout_ms,
        max_parallel: a.max_parallel.unwrap_or(a.parallelism),
        temperature: a.temperature,
        top_p: a.top_p,
        max_new_tokens: a.max_new_tokens,
        retries: a.retries,
        ..ModelEndpoint::default()
    };
    endpoint.validate().map_err(|e| usage(e.to_string()))?;
    let client = Client::new(endpoint).map_err(|e| usage(e.to_string()))?;

    let data_dir = a.metadata.parent().map(Path::to_path_buf).unwrap_or_default();
    let items = if a.mode == PromptMode::Sequence {
        let records = read_sequences(&a.metadata).context("reading sequences")?;
        sequence_items(&records, &data_dir).context("building prompts")?
    } else {
        let records = read_metadata(&a.metadata).context("reading metadata")?;
        grid_items(&records, &data_dir, a.mode).context("building prompts")?
    };
    let cache = a
        .cache_dir
        .as_ref()
        .map(DiskCache::open)
        .transpose()
        .context("opening cache")?;
    let mut failures = a.out.clone().into_os_string();
    failures.push(".failures.jsonl");
    let opts = RunOptions {
        parallelism: a.parallelism,
        allow_partial: a.allow_partial,
        cache,
        predictions_path: Some(a.out.clone()),
        failures_path: Some(a.failures.clone().unwrap_or_else(|| PathBuf::from(failures))),
        records_path: a.records.clone(),
    };
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    let summary = rt
        .block_on(run_benchmark(&client, &items, &opts))
        .context("running benchmark")?;
    println!(
        "{} answered ({} from cache), {} failed; predictions in {}",
        summary.records.len(),
        summary.cached,
        summary.failures.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct ReportRow {
    name: String,
    per_type: Vec<Option<f64>>,
    total: f64,
}

#[derive(Debug, Serialize)]
struct CombinedReport {
    columns: Vec<String>,
    rows: Vec<ReportRow>,
    models: Vec<(String, EvalReport)>,
    human: Option<HumanReport>,
}

fn report_table(columns: &[String], rows: &[ReportRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(8) + 2;
    let mut s = format!("{:<width$}", "");
    for c in columns {
        let _ = write!(s, "{c:>10}");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{:<width$}", r.name);
        for v in r.per_type.iter().copied().chain([Some(r.total)]) {
            let cell = v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v));
            let _ = write!(s, "{cell:>10}");
        }
        s.push('\n');
    }
    s
}

fn report(a: ReportArgs) -> CliResult {
    require_file(&a.metadata, "metadata")?;
    let mut inputs = Vec::new();
    for spec in &a.predictions {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| usage(format!("--predictions expects NAME=PATH, got `{spec}`")))?;
        let path = PathBuf::from(path);
        require_file(&path, "predictions")?;
        inputs.push((name.to_string(), path));
    }
    if let Some(dir) = &a.sessions {
        if !dir.is_dir() {
            return Err(usage(format!("session directory {} does not exist", dir.display())));
        }
    }
    if inputs.is_empty() && a.sessions.is_none() {
        return Err(usage("nothing to report: pass --predictions and/or --sessions"));
    }

    let records = read_metadata(&a.metadata).context("reading metadata")?;
    let mut rows = Vec::new();
    let mut models = Vec::new();
    for (name, path) in inputs {
        let preds = read_predictions(&path).with_context(|| format!("reading {}", path.display()))?;
        let r = evalkit::evaluate(&records, &preds).with_context(|| format!("scoring {name}"))?;
        rows.push(ReportRow {
            name: name.clone(),
            per_type: r.per_type.iter().map(|t| t.accuracy).collect(),
            total: r.total,
        });
        models.push((name, r));
    }
    let human = match &a.sessions {
        None => None,
        Some(dir) => {
            let sessions = load_sessions(dir).context("loading sessions")?;
            let h = human_report(&sessions, &records).context("scoring sessions")?;
            for ann in &h.annotators {
                rows.push(ReportRow {
                    name: format!("Human ({})", ann.annotator_id),
                    per_type: ann.report.per_type.iter().map(|t| t.accuracy).collect(),
                    total: ann.report.total,
                });
            }
            rows.push(ReportRow {
                name: "Human".into(),
                per_type: h.mean_per_type.clone(),
                total: h.mean_total,
            });
            Some(h)
        }
    };
    let columns: Vec<String> = StimulusType::ALL
        .iter()
        .map(ToString::to_string)
        .chain(["Total".to_string()])
        .collect();
    print!("{}", report_table(&columns, &rows));
    if let Some(p) = &a.json_out {
        write_json(
            p,
            &CombinedReport {
                columns,
                rows,
                models,
                human,
            },
        )?;
    }
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult {
    let data = a.data_dir.clone().unwrap_or_else(data_dir);
    require_file(&data.join("test").join("metadata.jsonl"), "test metadata")?;
    let config = ServiceConfig {
        sessions_dir: a.sessions_dir.clone().unwrap_or_else(|| data.join("sessions")),
        data_dir: data.clone(),
        practice: a.practice,
    };
    let catalog = Catalog::load(&data).context("loading stimuli")?;
    let app = AppState::new(config, catalog).context("loading sessions")?;
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    eprintln!("serving annotation sessions on http://{}", a.bind);
    rt.block_on(server::serve(a.bind, app)).context("serving")?;
    Ok(())
}
