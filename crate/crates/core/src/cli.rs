//! Command-line front end: config resolution, backend wiring and the
//! per-command output files.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tracing::{info, warn};

use crate::dialogue::{parse_corpus, Corpus, CorpusFormat, Dialogue, Segmentation};
use crate::embeddings::{CachedProvider, EmbeddingProvider, HashedTfidfProvider, HttpEmbeddingProvider};
use crate::handshake::{default_few_shot, tag_handshakes, HandshakeSpan};
use crate::llm::{canonical_json, write_atomic, Backend, BackendKind, FixtureStore, HttpChat, LlmClient, RetryPolicy};
use crate::metrics::{default_k, evaluate_corpus, render_csv, render_table, EvalReport};
use crate::mock::MockResponder;
use crate::samplegen::{extract_windows, generate_pair, SampleError};
use crate::segmenter::{render_ablation_table, run_ablation, Pipeline, PipelineConfig, PredictedSegment, PredictionRecord};
use crate::similarity::ExemplarStore;
use crate::texttiling::{random_segmentation, texttile, TilingParams};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_UPSTREAM: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { code: EXIT_DATA, message: message.into() }
    }

    pub fn upstream(message: impl Into<String>) -> Self {
        Self { code: EXIT_UPSTREAM, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(name = "dash-dts", version, about = "Dialogue topic segmentation and evaluation")]
pub struct Cli {
    /// Log filter, e.g. `info` or `dash_dts=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment every dialogue of a corpus and write per-dialogue predictions.
    Segment(RunArgs),
    /// Score a predictions directory against a labeled corpus.
    Evaluate(EvaluateArgs),
    /// Run the four component configurations and print a comparison table.
    Ablation(RunArgs),
    /// Baselines that need no model.
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Tag handshake spans in every dialogue.
    TagHs(RunArgs),
    /// Generate contrastive sample pairs from gold-labeled windows.
    GenSamples(RunArgs),
}

#[derive(Debug, Subcommand)]
pub enum BaselineCommand {
    /// Lexical-cohesion segmentation, then evaluation.
    Texttiling(TilingArgs),
    /// Seeded random boundaries at chance level, then evaluation.
    Random(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Corpus file.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// native-json, dialseg-text or vhf-json. Inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Window size for Pk/WindowDiff; per-dialogue default when omitted.
    #[arg(long)]
    pub k: Option<usize>,
    /// Dialogues processed in parallel
    #[arg(long)]
    pub workers: Option<usize>,
    /// Seed for the random baseline
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write a per-dialogue CSV report.
    #[arg(long)]
    pub csv: bool,
    /// Row label in reports.
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Gold-labeled exemplar corpus.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Format of the exemplar corpus; same choices as --format
    #[arg(long)]
    pub store_format: Option<String>,
    /// http, replay or scripted.
    #[arg(long)]
    pub backend: Option<String>,
    /// Fail on any replay miss instead of falling back.
    #[arg(long)]
    pub strict: bool,
    /// Replay fixture directory.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Record live responses as fixtures into this directory.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Chat model name sent to the backend
    #[arg(long)]
    pub model: Option<String>,
    /// Number of exemplars in the prompt.
    #[arg(long = "m")]
    pub m: Option<usize>,
    /// Minimum confidence for a generated sample pair
    #[arg(long)]
    pub confidence_threshold: Option<f64>,
    /// Handshake tagging on (the last of enable/disable wins)
    #[arg(long, overrides_with = "disable_handshake")]
    pub enable_handshake: bool,
    #[arg(long, overrides_with = "enable_handshake")]
    pub disable_handshake: bool,
    /// Similarity-ranked exemplars instead of store order
    #[arg(long, overrides_with = "disable_similarity")]
    pub enable_similarity: bool,
    #[arg(long, overrides_with = "enable_similarity")]
    pub disable_similarity: bool,
    /// Boundary demonstrations from generated samples
    #[arg(long, overrides_with = "disable_samplegen")]
    pub enable_samplegen: bool,
    #[arg(long, overrides_with = "enable_samplegen")]
    pub disable_samplegen: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory of prediction files; defaults to `<out>/predictions`.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TilingArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub block_size: Option<usize>,
    #[arg(long)]
    pub smoothing_width: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    pub kind: String,
    pub strict: bool,
    pub fixtures: Option<PathBuf>,
    pub record: Option<PathBuf>,
    /// What answers replay misses when not strict: `http`, `scripted` or none.
    pub fallback: Option<String>,
    pub base_url: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for BackendSettings {
    fn default() -> Self {
        Self {
            kind: "http".into(),
            strict: false,
            fixtures: None,
            record: None,
            fallback: None,
            base_url: "https://api.openai.com".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_in_flight: 4,
            max_attempts: 3,
            backoff_ms: 1000,
        }
    }
}

impl BackendSettings {
    fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts.max(1),
            base: Duration::from_millis(self.backoff_ms),
            factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderSettings {
    /// `hashed` (local tf-idf) or `http`.
    pub kind: String,
    pub dim: usize,
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub cache: Option<PathBuf>,
}

impl Default for EmbedderSettings {
    fn default() -> Self {
        Self {
            kind: "hashed".into(),
            dim: HashedTfidfProvider::DEFAULT_DIM,
            base_url: "https://api.openai.com".into(),
            model: "text-embedding-3-small".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            cache: None,
        }
    }
}

/// The TOML document accepted by `--config`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    corpus: Option<PathBuf>,
    format: Option<String>,
    store: Option<PathBuf>,
    store_format: Option<String>,
    out: Option<PathBuf>,
    workers: Option<usize>,
    seed: Option<u64>,
    k: Option<usize>,
    label: Option<String>,
    backend: BackendSettings,
    embedder: EmbedderSettings,
    pipeline: PipelineConfig,
    tiling: TilingParams,
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub format: CorpusFormat,
    pub store: Option<PathBuf>,
    pub store_format: Option<CorpusFormat>,
    pub embedder: EmbedderSettings,
    pub backend: BackendSettings,
    pub pipeline: PipelineConfig,
    pub tiling: TilingParams,
    pub out: PathBuf,
    pub workers: usize,
    pub seed: u64,
    pub k: Option<usize>,
    pub label: Option<String>,
    pub csv: bool,
}

impl RunConfig {
    /// SHA-256 over the canonical JSON of the resolved settings.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical_json(&value).as_bytes()))
    }
}

fn load_file_config(path: Option<&Path>) -> Result<(FileConfig, PathBuf), CliError> {
    let Some(path) = path else {
        return Ok((FileConfig::default(), PathBuf::new()));
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: FileConfig = toml::from_str(&text)
        .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

/// Config-file paths are relative to the config file.
fn rebase(base: &Path, p: Option<PathBuf>) -> Option<PathBuf> {
    p.map(|p| if p.is_relative() { base.join(p) } else { p })
}

fn parse_format(s: Option<&str>, path: &Path) -> Result<CorpusFormat, CliError> {
    match s {
        Some(s) => s.parse().map_err(CliError::usage),
        None => Ok(match path.extension().and_then(|e| e.to_str()) {
            Some("txt") => CorpusFormat::DialsegText,
            _ => CorpusFormat::NativeJson,
        }),
    }
}

fn toggle(enable: bool, disable: bool) -> Option<bool> {
    match (enable, disable) {
        (true, _) => Some(true),
        (_, true) => Some(false),
        _ => None,
    }
}

fn resolve(common: &CommonArgs, run: Option<&RunArgs>, tiling: Option<&TilingArgs>) -> Result<RunConfig, CliError> {
    let (file, base) = load_file_config(common.config.as_deref())?;
    let corpus = common
        .corpus
        .clone()
        .or_else(|| rebase(&base, file.corpus.clone()))
        .ok_or_else(|| CliError::usage("no corpus given (use --corpus or `corpus` in the config)"))?;
    let format = parse_format(common.format.as_deref().or(file.format.as_deref()), &corpus)?;

    let mut backend = file.backend.clone();
    backend.fixtures = rebase(&base, backend.fixtures);
    backend.record = rebase(&base, backend.record);
    let mut embedder = file.embedder.clone();
    embedder.cache = rebase(&base, embedder.cache);
    let mut pipeline = file.pipeline.clone();
    let mut store = rebase(&base, file.store.clone());
    let mut store_format = file.store_format.clone();

    if let Some(r) = run {
        if let Some(s) = &r.store {
            store = Some(s.clone());
        }
        if let Some(f) = &r.store_format {
            store_format = Some(f.clone());
        }
        if let Some(b) = &r.backend {
            backend.kind = b.clone();
        }
        if r.strict {
            backend.strict = true;
        }
        if let Some(f) = &r.fixtures {
            backend.fixtures = Some(f.clone());
        }
        if let Some(f) = &r.record {
            backend.record = Some(f.clone());
        }
        if let Some(m) = &r.model {
            pipeline.model.model = m.clone();
        }
        if let Some(m) = r.m {
            pipeline.m = m;
        }
        if let Some(t) = r.confidence_threshold {
            pipeline.confidence_threshold = t;
        }
        if let Some(v) = toggle(r.enable_handshake, r.disable_handshake) {
            pipeline.enable_handshake = v;
        }
        if let Some(v) = toggle(r.enable_similarity, r.disable_similarity) {
            pipeline.enable_similarity = v;
        }
        if let Some(v) = toggle(r.enable_samplegen, r.disable_samplegen) {
            pipeline.enable_samplegen = v;
        }
    }
    backend.kind.parse::<BackendKind>().map_err(CliError::usage)?;
    pipeline.validate().map_err(CliError::usage)?;

    let mut tiling_params = file.tiling.clone();
    if let Some(t) = tiling {
        if let Some(b) = t.block_size {
            tiling_params.block_size = b;
        }
        if let Some(w) = t.smoothing_width {
            tiling_params.smoothing_width = w;
        }
        if let Some(a) = t.alpha {
            tiling_params.alpha = a;
        }
    }
    tiling_params.validate().map_err(CliError::usage)?;

    let workers = common.workers.or(file.workers).unwrap_or(1);
    if workers == 0 {
        return Err(CliError::usage("worker count must be at least 1"));
    }
    let store_format = match (&store, store_format) {
        (Some(p), f) => Some(parse_format(f.as_deref(), p)?),
        (None, _) => None,
    };
    let cfg = RunConfig {
        corpus,
        format,
        store,
        store_format,
        embedder,
        backend,
        pipeline,
        tiling: tiling_params,
        out: common
            .out
            .clone()
            .or_else(|| rebase(&base, file.out.clone()))
            .unwrap_or_else(|| PathBuf::from("out")),
        workers,
        seed: common.seed.or(file.seed).unwrap_or(0),
        k: common.k.or(file.k),
        label: common.label.clone().or(file.label),
        csv: common.csv,
    };
    check_paths(&cfg)?;
    Ok(cfg)
}

fn check_paths(cfg: &RunConfig) -> Result<(), CliError> {
    if !cfg.corpus.exists() {
        return Err(CliError::usage(format!("corpus not found: {}", cfg.corpus.display())));
    }
    if let Some(s) = &cfg.store {
        if !s.exists() {
            return Err(CliError::usage(format!("exemplar store not found: {}", s.display())));
        }
    }
    Ok(())
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::usage(format!("cannot read corpus {}: {e}", path.display())))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("corpus");
    parse_corpus(&bytes, format, name).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Embedding providers the CLI can build.
pub enum Provider {
    Hashed(HashedTfidfProvider),
    Http(CachedProvider<HttpEmbeddingProvider>),
}

impl Provider {
    pub fn as_dyn(&self) -> &dyn EmbeddingProvider {
        match self {
            Provider::Hashed(p) => p,
            Provider::Http(p) => p,
        }
    }

    pub fn save(&self) -> Result<(), CliError> {
        match self {
            Provider::Hashed(_) => Ok(()),
            Provider::Http(p) => p.save().map_err(|e| CliError::data(e.to_string())),
        }
    }
}

/// Builds the provider and the exemplar store. Hashed idf is fit on the
/// store dialogues so that queries do not change the embedding space.
pub fn build_store(cfg: &RunConfig, queries: &Corpus) -> Result<(Provider, ExemplarStore), CliError> {
    let store_corpus = match (&cfg.store, cfg.store_format) {
        (Some(p), Some(f)) => Some(load_corpus(p, f)?),
        _ => None,
    };
    let provider = match cfg.embedder.kind.as_str() {
        "hashed" => {
            if cfg.embedder.dim < 16 {
                return Err(CliError::usage("hashed embedder dimension must be at least 16"));
            }
            let fit_on = store_corpus.as_ref().unwrap_or(queries);
            Provider::Hashed(HashedTfidfProvider::fit(
                fit_on.dialogues.iter().map(|d| &d.dialogue),
                cfg.embedder.dim,
            ))
        }
        "http" => {
            let e = &cfg.embedder;
            let inner = HttpEmbeddingProvider::new(&e.base_url, &e.model, e.dim, std::env::var(&e.api_key_env).ok())
                .with_retry(cfg.backend.retry());
            let cached = match &e.cache {
                Some(p) => CachedProvider::persistent(inner, p).map_err(|e| CliError::data(e.to_string()))?,
                None => CachedProvider::new(inner),
            };
            Provider::Http(cached)
        }
        other => return Err(CliError::usage(format!("unknown embedder `{other}` (expected hashed or http)"))),
    };
    let store = match &store_corpus {
        Some(c) => ExemplarStore::build(&c.dialogues, provider.as_dyn()).map_err(|e| {
            let code = if matches!(e, crate::similarity::SimilarityError::Embed(_)) {
                EXIT_UPSTREAM
            } else {
                EXIT_DATA
            };
            CliError { code, message: format!("exemplar store: {e}") }
        })?,
        None => ExemplarStore::empty(provider.as_dyn()),
    };
    Ok((provider, store))
}

fn http_backend(cfg: &BackendSettings) -> HttpChat {
    HttpChat::from_env(&cfg.base_url, &cfg.api_key_env).with_retry(cfg.retry())
}

pub fn build_llm(cfg: &BackendSettings) -> Result<LlmClient, CliError> {
    let kind: BackendKind = cfg.kind.parse().map_err(CliError::usage)?;
    let backend = match kind {
        BackendKind::Http => Backend::Http(http_backend(cfg)),
        BackendKind::Scripted => MockResponder::heuristic().backend(),
        BackendKind::Replay => {
            let dir = cfg
                .fixtures
                .clone()
                .ok_or_else(|| CliError::usage("replay backend needs a fixture directory (--fixtures)"))?;
            if !dir.is_dir() {
                return Err(CliError::usage(format!("fixture directory not found: {}", dir.display())));
            }
            let fallback = if cfg.strict {
                None
            } else {
                match cfg.fallback.as_deref() {
                    None | Some("none") => None,
                    Some("http") => Some(Box::new(Backend::Http(http_backend(cfg)))),
                    Some("scripted") => Some(Box::new(MockResponder::heuristic().backend())),
                    Some(other) => {
                        return Err(CliError::usage(format!(
                            "unknown replay fallback `{other}` (expected http, scripted or none)"
                        )))
                    }
                }
            };
            Backend::Replay {
                fixtures: FixtureStore::new(dir),
                strict: cfg.strict,
                fallback,
            }
        }
    };
    let mut client = LlmClient::new(backend).max_in_flight(cfg.max_in_flight);
    if let Some(dir) = &cfg.record {
        fs::create_dir_all(dir).map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
        client = client.recording(dir);
    }
    Ok(client)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::data(format!("cannot write {}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    write_atomic(path, text.as_bytes()).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

/// Dialogue ids made safe for use as file names.
pub fn file_stem_for(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_digest: String,
    pub corpus: String,
    pub dialogues: usize,
    pub requests: usize,
    pub fixture_hits: usize,
    pub fixture_misses: usize,
    pub network_calls: usize,
    pub warnings: usize,
}

fn manifest(command: &str, cfg: &RunConfig, corpus: &Corpus, llm: &LlmClient, warnings: usize) -> Manifest {
    let s = llm.summary();
    Manifest {
        command: command.to_string(),
        config_digest: cfg.digest(),
        corpus: corpus.name.clone(),
        dialogues: corpus.dialogues.len(),
        requests: s.requests,
        fixture_hits: s.fixture_hits,
        fixture_misses: s.fixture_misses,
        network_calls: s.network_calls,
        warnings,
    }
}

pub fn cmd_segment(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let corpus = load_corpus(&cfg.corpus, cfg.format)?;
    let (provider, store) = build_store(cfg, &corpus)?;
    let llm = build_llm(&cfg.backend)?;
    let pipeline = Pipeline::new(cfg.pipeline.clone(), &llm, provider.as_dyn(), &store);
    let dialogues: Vec<&Dialogue> = corpus.dialogues.iter().map(|d| &d.dialogue).collect();
    let runs = pipeline.segment_all(&dialogues, cfg.workers);

    let dir = cfg.out.join("predictions");
    let mut failures = Vec::new();
    let mut upstream = false;
    let mut warnings = 0;
    for (d, run) in dialogues.iter().zip(runs) {
        match run {
            Ok(run) => {
                warnings += run.prediction.warnings.len();
                let record = run.prediction.to_record(&d.id);
                write_json(&dir.join(format!("{}.json", file_stem_for(&d.id))), &record)?;
            }
            Err(e) => {
                upstream |= e.is_upstream();
                failures.push(format!("{}: {e}", d.id));
            }
        }
    }
    provider.save()?;
    let m = manifest("segment", cfg, &corpus, &llm, warnings);
    write_json(&cfg.out.join("manifest.json"), &m)?;
    if !failures.is_empty() {
        let message = format!("{} of {} dialogues failed:\n  {}", failures.len(), dialogues.len(), failures.join("\n  "));
        return Err(if upstream { CliError::upstream(message) } else { CliError::data(message) });
    }
    info!(dialogues = dialogues.len(), warnings, "segmentation finished");
    Ok(m)
}

/// Reads every `*.json` prediction record in `dir`.
pub fn load_predictions(dir: &Path) -> Result<Vec<(String, Segmentation)>, CliError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::usage(format!("cannot read predictions {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let bytes = fs::read(&p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
        let record: PredictionRecord =
            serde_json::from_slice(&bytes).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
        let seg = record.segmentation().map_err(CliError::data)?;
        out.push((record.id, seg));
    }
    Ok(out)
}

fn golds(corpus: &Corpus) -> Result<Vec<(String, Segmentation)>, CliError> {
    corpus
        .dialogues
        .iter()
        .map(|d| {
            d.gold
                .clone()
                .map(|g| (d.dialogue.id.clone(), g))
                .ok_or_else(|| CliError::data(format!("dialogue `{}` has no gold segmentation", d.dialogue.id)))
        })
        .collect()
}

fn write_report(cfg: &RunConfig, report: &EvalReport) -> Result<(), CliError> {
    write_json(&cfg.out.join("report.json"), report)?;
    write_text(&cfg.out.join("report.txt"), &render_table(&[report]))?;
    if cfg.csv {
        write_text(&cfg.out.join("report.csv"), &render_csv(report))?;
    }
    Ok(())
}

fn score(cfg: &RunConfig, corpus: &Corpus, label: &str, predictions: &[(String, Segmentation)]) -> Result<EvalReport, CliError> {
    let report = evaluate_corpus(&corpus.name, label, predictions, &golds(corpus)?, cfg.k)
        .map_err(|e| CliError::data(e.to_string()))?;
    write_report(cfg, &report)?;
    Ok(report)
}

pub fn cmd_evaluate(cfg: &RunConfig, predictions: &Path) -> Result<EvalReport, CliError> {
    let corpus = load_corpus(&cfg.corpus, cfg.format)?;
    let preds = load_predictions(predictions)?;
    score(cfg, &corpus, cfg.label.as_deref().unwrap_or("DASH-DTS"), &preds)
}

pub fn cmd_ablation(cfg: &RunConfig) -> Result<String, CliError> {
    let corpus = load_corpus(&cfg.corpus, cfg.format)?;
    let (provider, store) = build_store(cfg, &corpus)?;
    let llm = build_llm(&cfg.backend)?;
    let rows = run_ablation(&corpus, &store, &llm, provider.as_dyn(), &cfg.pipeline, cfg.workers, cfg.k).map_err(|e| {
        if e.is_upstream() {
            CliError::upstream(e.to_string())
        } else {
            CliError::data(e.to_string())
        }
    })?;
    provider.save()?;
    let table = render_ablation_table(&rows);
    write_json(&cfg.out.join("ablation.json"), &rows)?;
    write_text(&cfg.out.join("ablation.txt"), &table)?;
    write_json(&cfg.out.join("manifest.json"), &manifest("ablation", cfg, &corpus, &llm, 0))?;
    Ok(table)
}

fn write_segmentations(cfg: &RunConfig, items: &[(String, Segmentation)], why: &str) -> Result<(), CliError> {
    let dir = cfg.out.join("predictions");
    for (id, seg) in items {
        let record = PredictionRecord {
            id: id.clone(),
            segments: seg
                .segments()
                .into_iter()
                .map(|(start, end)| PredictedSegment {
                    start,
                    end,
                    explanation: why.to_string(),
                    confidence: 1.0,
                })
                .collect(),
            boundaries: seg.boundaries().to_vec(),
            warnings: Vec::new(),
        };
        write_json(&dir.join(format!("{}.json", file_stem_for(id))), &record)?;
    }
    Ok(())
}

pub fn cmd_baseline_texttiling(cfg: &RunConfig) -> Result<EvalReport, CliError> {
    let corpus = load_corpus(&cfg.corpus, cfg.format)?;
    let preds: Vec<(String, Segmentation)> = pool(cfg.workers).install(|| {
        corpus
            .dialogues
            .par_iter()
            .filter(|d| !d.dialogue.is_empty())
            .map(|d| (d.dialogue.id.clone(), texttile(&d.dialogue, &cfg.tiling)))
            .collect()
    });
    write_segmentations(cfg, &preds, "lexical cohesion valley")?;
    score(cfg, &corpus, cfg.label.as_deref().unwrap_or("TextTiling"), &preds)
}

pub fn cmd_baseline_random(cfg: &RunConfig) -> Result<EvalReport, CliError> {
    let corpus = load_corpus(&cfg.corpus, cfg.format)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut preds = Vec::new();
    for d in &corpus.dialogues {
        let Some(gold) = &d.gold else { continue };
        let k = cfg.k.unwrap_or_else(|| default_k(gold));
        preds.push((d.dialogue.id.clone(), random_segmentation(d.dialogue.len(), k, &mut rng)));
    }
    write_segmentations(cfg, &preds, "random")?;
    score(cfg, &corpus, cfg.label.as_deref().unwrap_or("Random"), &preds)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpanFile {
    pub id: String,
    pub spans: Vec<HandshakeSpan>,
}

pub fn cmd_tag_hs(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let corpus = load_corpus(&cfg.corpus, cfg.format)?;
    let llm = build_llm(&cfg.backend)?;
    let few_shot = default_few_shot();
    let results: Vec<_> = pool(cfg.workers).install(|| {
        corpus
            .dialogues
            .par_iter()
            .map(|d| tag_handshakes(&d.dialogue, &llm, &few_shot, &cfg.pipeline.model))
            .collect()
    });
    let dir = cfg.out.join("spans");
    for (d, r) in corpus.dialogues.iter().zip(results) {
        let spans = r.map_err(|e| {
            let message = format!("{}: stage `handshake`: {e}", d.dialogue.id);
            if matches!(e, crate::handshake::HandshakeError::Llm(_)) {
                CliError::upstream(message)
            } else {
                CliError::data(message)
            }
        })?;
        let file = SpanFile {
            id: d.dialogue.id.clone(),
            spans,
        };
        write_json(&dir.join(format!("{}.json", file_stem_for(&d.dialogue.id))), &file)?;
    }
    let m = manifest("tag-hs", cfg, &corpus, &llm, 0);
    write_json(&cfg.out.join("manifest.json"), &m)?;
    Ok(m)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub windows: usize,
    pub accepted: usize,
    pub rejected: usize,
}

pub fn cmd_gen_samples(cfg: &RunConfig) -> Result<SampleSummary, CliError> {
    let corpus = load_corpus(&cfg.corpus, cfg.format)?;
    let llm = build_llm(&cfg.backend)?;
    let p = &cfg.pipeline;
    let mut windows = Vec::new();
    for d in &corpus.dialogues {
        match &d.gold {
            Some(g) => windows.extend(extract_windows(&d.dialogue, Some(g), p.window_before, p.window_after)),
            None => warn!(id = %d.dialogue.id, "skipping unlabeled dialogue"),
        }
    }
    if windows.is_empty() {
        return Err(CliError::data("no gold-labeled windows to generate samples from"));
    }
    let results: Vec<_> = pool(cfg.workers).install(|| {
        windows
            .par_iter()
            .map(|w| generate_pair(w, &llm, &p.model))
            .collect()
    });

    let mut accepted = String::new();
    let mut rejected = String::new();
    let mut summary = SampleSummary {
        windows: windows.len(),
        ..SampleSummary::default()
    };
    for (w, r) in windows.iter().zip(results) {
        let source = json!({"dialogue_id": w.dialogue_id, "gap": w.gap, "kind": w.kind});
        let rejection: Option<Value> = match r {
            Ok(pair) if pair.positive.confidence >= p.confidence_threshold && pair.negative.confidence >= p.confidence_threshold => {
                accepted.push_str(&pair.to_json_line());
                accepted.push('\n');
                None
            }
            Ok(pair) => Some(json!({
                "source": source,
                "reason": "confidence",
                "positive_confidence": pair.positive.confidence,
                "negative_confidence": pair.negative.confidence,
            })),
            Err(SampleError::Invalid { violations, draft }) => Some(json!({
                "source": source,
                "reason": "validation",
                "violations": violations,
                "draft": draft,
            })),
            Err(SampleError::Analysis(msg)) => Some(json!({"source": source, "reason": "analysis", "message": msg})),
            Err(e @ SampleError::Llm(_)) => {
                return Err(CliError::upstream(format!(
                    "{} gap {}: stage `samplegen`: {e}",
                    w.dialogue_id, w.gap
                )))
            }
        };
        match rejection {
            Some(v) => {
                summary.rejected += 1;
                rejected.push_str(&v.to_string());
                rejected.push('\n');
            }
            None => summary.accepted += 1,
        }
    }
    write_text(&cfg.out.join("samples.jsonl"), &accepted)?;
    write_text(&cfg.out.join("rejections.jsonl"), &rejected)?;
    write_json(&cfg.out.join("manifest.json"), &manifest("gen-samples", cfg, &corpus, &llm, 0))?;
    Ok(summary)
}

/// Runs a parsed command, printing a short summary to stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Segment(a) => {
            let cfg = resolve(&a.common, Some(&a), None)?;
            let m = cmd_segment(&cfg)?;
            println!(
                "segmented {} dialogues into {} ({} fixture hits, {} misses, {} warnings)",
                m.dialogues,
                cfg.out.join("predictions").display(),
                m.fixture_hits,
                m.fixture_misses,
                m.warnings
            );
        }
        Command::Evaluate(a) => {
            let cfg = resolve(&a.common, None, None)?;
            let dir = a.predictions.clone().unwrap_or_else(|| cfg.out.join("predictions"));
            let report = cmd_evaluate(&cfg, &dir)?;
            print!("{}", render_table(&[&report]));
        }
        Command::Ablation(a) => {
            let cfg = resolve(&a.common, Some(&a), None)?;
            print!("{}", cmd_ablation(&cfg)?);
        }
        Command::Baseline(BaselineCommand::Texttiling(a)) => {
            let cfg = resolve(&a.common, None, Some(&a))?;
            print!("{}", render_table(&[&cmd_baseline_texttiling(&cfg)?]));
        }
        Command::Baseline(BaselineCommand::Random(a)) => {
            let cfg = resolve(&a, None, None)?;
            print!("{}", render_table(&[&cmd_baseline_random(&cfg)?]));
        }
        Command::TagHs(a) => {
            let cfg = resolve(&a.common, Some(&a), None)?;
            let m = cmd_tag_hs(&cfg)?;
            println!("tagged {} dialogues into {}", m.dialogues, cfg.out.join("spans").display());
        }
        Command::GenSamples(a) => {
            let cfg = resolve(&a.common, Some(&a), None)?;
            let s = cmd_gen_samples(&cfg)?;
            println!("{} windows: {} accepted, {} rejected", s.windows, s.accepted, s.rejected);
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
/// Help and version requests succeed.
pub fn run_args<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            Ok(())
        }
        Err(e) => Err(CliError::usage(e.render().to_string())),
    }
}

/// Process entry point used by the binary.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .or_else(|_| tracing_subscriber::EnvFilter::try_new(&cli.log))
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
