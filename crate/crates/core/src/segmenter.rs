//! The segmentation pipeline: handshake hints, similarity-ranked exemplars
//! and contrastive demonstrations assembled into one in-context prompt,
//! followed by a repairing parser for the model's segment list.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dialogue::{Corpus, Dialogue, Segmentation};
use crate::embeddings::EmbeddingProvider;
use crate::handshake::{
    default_few_shot, spans_to_boundary_hints, tag_handshakes, utterance_weights, FewShotExample,
    HandshakeError, HandshakeSpan,
};
use crate::jsonx::extract_first_json;
use crate::llm::{complete_with_repair, LlmClient, LlmError, Message, ModelSettings, RepairError, Stage};
use crate::metrics::{evaluate_corpus, percent, EvalError, EvalReport};
use crate::samplegen::{extract_windows, filter_by_confidence, generate_pair, SampleError, SamplePair, WindowKind, PIVOT};
use crate::similarity::{embed_dialogue, select_exemplars, ExemplarStore, RankedExemplar, SimilarityError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub enable_handshake: bool,
    pub enable_similarity: bool,
    pub enable_samplegen: bool,
    /// Exemplars placed in the prompt.
    pub m: usize,
    pub confidence_threshold: f64,
    /// Similarity weight for query utterances that contain a handshake.
    pub handshake_weight: f64,
    pub window_before: usize,
    pub window_after: usize,
    /// Upper bound on sample pairs generated per query.
    pub max_sample_windows: usize,
    pub model: ModelSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            enable_handshake: true,
            enable_similarity: true,
            enable_samplegen: true,
            m: 3,
            confidence_threshold: 0.5,
            handshake_weight: 2.0,
            window_before: 3,
            window_after: 3,
            max_sample_windows: 2,
            model: ModelSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(format!(
                "confidence threshold {} outside [0,1]",
                self.confidence_threshold
            ));
        }
        if !(self.handshake_weight.is_finite() && self.handshake_weight > 0.0) {
            return Err("handshake weight must be positive".into());
        }
        if self.model.temperature < 0.0 {
            return Err("temperature must be nonnegative".into());
        }
        Ok(())
    }

    pub fn with_components(mut self, handshake: bool, similarity: bool, samplegen: bool) -> Self {
        self.enable_handshake = handshake;
        self.enable_similarity = similarity;
        self.enable_samplegen = samplegen;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedSegment {
    pub start: usize,
    pub end: usize,
    pub explanation: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPrediction {
    pub segments: Vec<PredictedSegment>,
    pub segmentation: Segmentation,
    pub warnings: Vec<String>,
}

/// On-disk form of one dialogue's prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub segments: Vec<PredictedSegment>,
    pub boundaries: Vec<usize>,
    pub warnings: Vec<String>,
}

impl SegmentPrediction {
    pub fn to_record(&self, id: &str) -> PredictionRecord {
        PredictionRecord {
            id: id.to_string(),
            segments: self.segments.clone(),
            boundaries: self.segmentation.boundaries().to_vec(),
            warnings: self.warnings.clone(),
        }
    }
}

impl PredictionRecord {
    /// Utterance count implied by the last segment.
    pub fn n(&self) -> usize {
        self.segments.last().map(|s| s.end + 1).unwrap_or(0)
    }

    pub fn segmentation(&self) -> Result<Segmentation, String> {
        Segmentation::new(self.n(), self.boundaries.clone())
            .map_err(|e| format!("prediction `{}`: {e}", self.id))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentParseError {
    #[error("no JSON in segmentation reply")]
    NoJson,
    #[error("segmentation reply has no usable segments")]
    NoSegments,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage `handshake`: {0}")]
    Handshake(#[from] HandshakeError),
    #[error("stage `similarity`: {0}")]
    Similarity(#[from] SimilarityError),
    #[error("stage `samplegen`: {0}")]
    Samplegen(#[from] SampleError),
    #[error("stage `segmentation`: {0}")]
    Llm(LlmError),
    #[error("stage `segmentation`: {0}")]
    Parse(SegmentParseError),
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Handshake(_) => "handshake",
            PipelineError::Similarity(_) => "similarity",
            PipelineError::Samplegen(_) => "samplegen",
            PipelineError::Llm(_) | PipelineError::Parse(_) => "segmentation",
            PipelineError::Config(_) => "config",
        }
    }

    /// True when the failure came from the model backend.
    pub fn is_upstream(&self) -> bool {
        matches!(
            self,
            PipelineError::Llm(_)
                | PipelineError::Handshake(HandshakeError::Llm(_))
                | PipelineError::Samplegen(SampleError::Llm(_))
                | PipelineError::Similarity(SimilarityError::Embed(_))
        )
    }
}

/// An exemplar as it appears in the prompt.
#[derive(Debug, Clone, Copy)]
pub struct PromptExemplar<'a> {
    pub dialogue: &'a Dialogue,
    pub gold: &'a Segmentation,
    /// `None` when ranking was not similarity-based.
    pub score: Option<f64>,
}

pub fn segmentation_system_prompt() -> String {
    format!(
        "{}\nYou segment public-channel radio dialogues into topic segments.",
        Stage::Segmentation.marker()
    )
}

fn render_utterances(out: &mut String, dialogue: &Dialogue) {
    for u in &dialogue.utterances {
        let _ = write!(out, "[{}]", u.index);
        if let Some(s) = &u.speaker {
            let _ = write!(out, " {s}:");
        }
        let _ = writeln!(out, " {}", u.text);
    }
}

fn render_segments(seg: &Segmentation) -> String {
    seg.segments()
        .iter()
        .map(|(s, e)| format!("{s}-{e}"))
        .collect::<Vec<_>>()
        .join(" | ")
}

const INSTRUCTIONS: &str = "\
Split the query dialogue into contiguous topic segments. Segments must cover every utterance exactly once, in order, using the bracketed utterance numbers.
A new segment starts where the conversation turns to a new task or subject; call-ups that name stations often open one.
For every segment give:
(1) a short explanation of what the segment is about or which transition opens it, and whether it completes a dialogue task;
(2) a confidence between 0 and 1 expressing how certain you are of the segment.";

const OUTPUT_SCHEMA: &str = "\
Output schema (return only JSON):
{\"segments\":[{\"start\":int,\"end\":int,\"explanation\":str,\"confidence\":float}]}
start and end are inclusive utterance numbers.";

/// Instructions, ranked exemplars, optional handshake hints and boundary
/// demonstrations, the numbered query, and the output schema. Empty
/// component inputs contribute nothing.
pub fn build_segmentation_prompt(
    query: &Dialogue,
    exemplars: &[PromptExemplar<'_>],
    spans: &[HandshakeSpan],
    samples: &[SamplePair],
) -> String {
    let mut out = String::new();
    out.push_str(INSTRUCTIONS);
    out.push_str("\n\n");

    if !exemplars.is_empty() {
        out.push_str("SEGMENTED EXAMPLES\n");
        for (i, ex) in exemplars.iter().enumerate() {
            match ex.score {
                Some(s) => {
                    let _ = writeln!(out, "Example {} (similarity {s:.3})", i + 1);
                }
                None => {
                    let _ = writeln!(out, "Example {}", i + 1);
                }
            }
            render_utterances(&mut out, ex.dialogue);
            let _ = writeln!(out, "Segments: {}\n", render_segments(ex.gold));
        }
    }

    if !spans.is_empty() {
        out.push_str("HANDSHAKE HINTS\n");
        let hints = spans_to_boundary_hints(spans, query.len());
        for s in spans {
            let words = query.utterances[s.utterance].tokens[s.start..=s.end].join(" ");
            let _ = writeln!(
                out,
                "Utterance {} contains a handshake \"{words}\" (trust {:.2})",
                s.utterance, s.trust
            );
        }
        if !hints.is_empty() {
            let list: Vec<String> = hints.iter().map(|h| h.to_string()).collect();
            let _ = writeln!(out, "Possible segment starts: {}", list.join(", "));
        }
        out.push('\n');
    }

    if !samples.is_empty() {
        out.push_str("BOUNDARY DEMONSTRATIONS\n");
        for (i, pair) in samples.iter().enumerate() {
            for (sample, verdict) in [(&pair.positive, "yes"), (&pair.negative, "no")] {
                let _ = writeln!(out, "Demonstration {}{}", i + 1, if verdict == "yes" { "a" } else { "b" });
                for (j, line) in sample.utterances.iter().enumerate() {
                    let _ = writeln!(out, "  {}. {line}", j + 1);
                }
                let _ = writeln!(
                    out,
                    "  Topic boundary before line {PIVOT}: {verdict} (confidence {:.2}). {}",
                    sample.confidence, sample.reasoning
                );
            }
        }
        out.push('\n');
    }

    let _ = writeln!(out, "QUERY DIALOGUE id={} utterances={}", query.id, query.len());
    render_utterances(&mut out, query);
    out.push('\n');
    out.push_str(OUTPUT_SCHEMA);
    out.push('\n');
    out
}

struct RawSegment {
    start: i64,
    end: i64,
    explanation: String,
    confidence: Option<f64>,
}

/// Parses the model's segment list and repairs it into a partition of
/// `0..n`. Each repair appends a warning.
pub fn parse_segmentation_response(text: &str, n: usize) -> Result<SegmentPrediction, SegmentParseError> {
    assert!(n >= 1, "dialogue must be nonempty");
    let value = extract_first_json(text).map_err(|_| SegmentParseError::NoJson)?;
    let entries = match &value {
        Value::Object(obj) => obj
            .get("segments")
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default(),
        Value::Array(items) => items.clone(),
        _ => Vec::new(),
    };
    let mut warnings = Vec::new();
    let mut raw = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        let (Some(start), Some(end)) = (
            e.get("start").and_then(Value::as_i64),
            e.get("end").and_then(Value::as_i64),
        ) else {
            warnings.push(format!("segment entry {i} skipped: missing integer start/end"));
            continue;
        };
        raw.push(RawSegment {
            start,
            end,
            explanation: e
                .get("explanation")
                .and_then(Value::as_str)
                .unwrap_or("")
                .trim()
                .to_string(),
            confidence: e.get("confidence").and_then(Value::as_f64),
        });
    }
    if raw.is_empty() {
        return Err(SegmentParseError::NoSegments);
    }

    let last = (n - 1) as i64;
    let mut segs: Vec<PredictedSegment> = Vec::with_capacity(raw.len());
    for r in raw {
        let (mut s, mut e) = (r.start.clamp(0, last), r.end.clamp(0, last));
        if (s, e) != (r.start, r.end) {
            warnings.push(format!(
                "segment {}-{} clamped to {s}-{e}",
                r.start, r.end
            ));
        }
        if s > e {
            warnings.push(format!("segment {s}-{e} reversed"));
            std::mem::swap(&mut s, &mut e);
        }
        let confidence = match r.confidence {
            Some(c) if (0.0..=1.0).contains(&c) => c,
            Some(c) => {
                let clamped = c.clamp(0.0, 1.0);
                warnings.push(format!("confidence {c} clamped to {clamped}"));
                clamped
            }
            None => {
                warnings.push(format!("segment {s}-{e} has no confidence; using 0"));
                0.0
            }
        };
        let explanation = if r.explanation.is_empty() {
            warnings.push(format!("segment {s}-{e} has no explanation"));
            "(no explanation given)".to_string()
        } else {
            r.explanation
        };
        segs.push(PredictedSegment {
            start: s as usize,
            end: e as usize,
            explanation,
            confidence,
        });
    }

    let sorted = segs.windows(2).all(|w| (w[0].start, w[0].end) <= (w[1].start, w[1].end));
    if !sorted {
        segs.sort_by_key(|s| (s.start, s.end));
        warnings.push("segments reordered by start".to_string());
    }

    let mut merged: Vec<PredictedSegment> = Vec::with_capacity(segs.len());
    for mut seg in segs {
        if let Some(prev) = merged.last_mut() {
            if seg.start <= prev.end {
                if seg.end <= prev.end {
                    warnings.push(format!(
                        "segment {}-{} absorbed by {}-{}",
                        seg.start, seg.end, prev.start, prev.end
                    ));
                    continue;
                }
                warnings.push(format!(
                    "segment {}-{} overlaps {}-{}; trimmed to {}-{}",
                    seg.start,
                    seg.end,
                    prev.start,
                    prev.end,
                    prev.end + 1,
                    seg.end
                ));
                seg.start = prev.end + 1;
            } else if seg.start > prev.end + 1 {
                warnings.push(format!(
                    "gap {}-{} filled by extending {}-{}",
                    prev.end + 1,
                    seg.start - 1,
                    prev.start,
                    prev.end
                ));
                prev.end = seg.start - 1;
            }
        } else if seg.start > 0 {
            warnings.push(format!("gap 0-{} filled by extending the first segment", seg.start - 1));
            seg.start = 0;
        }
        merged.push(seg);
    }
    let tail = merged.last_mut().expect("nonempty");
    if tail.end < n - 1 {
        warnings.push(format!(
            "gap {}-{} filled by extending the last segment",
            tail.end + 1,
            n - 1
        ));
        tail.end = n - 1;
    }

    let boundaries = merged.iter().skip(1).map(|s| s.start).collect();
    let segmentation = Segmentation::new(n, boundaries).expect("repaired segments partition 0..n");
    Ok(SegmentPrediction {
        segments: merged,
        segmentation,
        warnings,
    })
}

/// Everything a pipeline run produced for one query.
#[derive(Debug, Clone)]
pub struct SegmentRun {
    pub prediction: SegmentPrediction,
    pub spans: Vec<HandshakeSpan>,
    pub exemplars: Vec<RankedExemplar>,
    pub samples: Vec<SamplePair>,
    pub prompt: String,
}

/// Shared, read-only inputs to the pipeline.
pub struct Pipeline<'a> {
    pub config: PipelineConfig,
    pub llm: &'a LlmClient,
    pub provider: &'a dyn EmbeddingProvider,
    pub store: &'a ExemplarStore,
    pub few_shot: Vec<FewShotExample>,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        config: PipelineConfig,
        llm: &'a LlmClient,
        provider: &'a dyn EmbeddingProvider,
        store: &'a ExemplarStore,
    ) -> Self {
        Self {
            config,
            llm,
            provider,
            store,
            few_shot: default_few_shot(),
        }
    }

    pub fn segment(&self, query: &Dialogue) -> Result<SegmentRun, PipelineError> {
        let cfg = &self.config;
        cfg.validate().map_err(PipelineError::Config)?;
        if query.is_empty() {
            return Err(PipelineError::Config(format!("dialogue `{}` is empty", query.id)));
        }

        let spans = if cfg.enable_handshake {
            tag_handshakes(query, self.llm, &self.few_shot, &cfg.model)?
        } else {
            Vec::new()
        };

        let exemplars: Vec<RankedExemplar> = if cfg.enable_similarity {
            let embeddings = embed_dialogue(query, self.provider)?;
            let weights = cfg
                .enable_handshake
                .then(|| utterance_weights(&spans, query.len(), cfg.handshake_weight));
            select_exemplars(&embeddings, self.store, cfg.m, weights.as_deref())?
        } else {
            (0..cfg.m.min(self.store.len()))
                .map(|index| RankedExemplar { index, score: 0.0 })
                .collect()
        };

        let samples = if cfg.enable_samplegen {
            let mut windows = Vec::new();
            for r in &exemplars {
                let ex = self.store.get(r.index).expect("ranked index in store");
                let all = extract_windows(&ex.dialogue, Some(&ex.gold), cfg.window_before, cfg.window_after);
                for kind in [WindowKind::Boundary, WindowKind::MidSegment] {
                    if let Some(w) = all.iter().find(|w| w.kind == kind) {
                        windows.push(w.clone());
                    }
                }
            }
            windows.truncate(cfg.max_sample_windows);
            let pairs = windows
                .iter()
                .map(|w| generate_pair(w, self.llm, &cfg.model))
                .collect::<Result<Vec<_>, _>>()?;
            filter_by_confidence(pairs, cfg.confidence_threshold)
        } else {
            Vec::new()
        };

        let prompt_exemplars: Vec<PromptExemplar<'_>> = exemplars
            .iter()
            .map(|r| {
                let ex = self.store.get(r.index).expect("ranked index in store");
                PromptExemplar {
                    dialogue: &ex.dialogue,
                    gold: &ex.gold,
                    score: cfg.enable_similarity.then_some(r.score),
                }
            })
            .collect();
        let prompt = build_segmentation_prompt(query, &prompt_exemplars, &spans, &samples);
        let messages = vec![
            Message::system(segmentation_system_prompt()),
            Message::user(prompt.clone()),
        ];
        let n = query.len();
        let prediction = complete_with_repair(self.llm, Stage::Segmentation, &cfg.model, messages, |t| {
            parse_segmentation_response(t, n)
        })
        .map_err(|e| match e {
            RepairError::Llm(e) => PipelineError::Llm(e),
            RepairError::Parse(e) => PipelineError::Parse(e),
        })?;

        Ok(SegmentRun {
            prediction,
            spans,
            exemplars,
            samples,
            prompt,
        })
    }

    /// Segments every dialogue on a pool of `workers` threads; results keep
    /// corpus order.
    pub fn segment_all(
        &self,
        dialogues: &[&Dialogue],
        workers: usize,
    ) -> Vec<Result<SegmentRun, PipelineError>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .expect("thread pool");
        pool.install(|| dialogues.par_iter().map(|d| self.segment(d)).collect())
    }
}

#[derive(Debug, Error)]
pub enum AblationError {
    #[error("corpus is not fully labeled")]
    Unlabeled,
    #[error("configuration {row}, dialogue `{id}`: {source}")]
    Pipeline {
        row: String,
        id: String,
        #[source]
        source: PipelineError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl AblationError {
    pub fn is_upstream(&self) -> bool {
        matches!(self, AblationError::Pipeline { source, .. } if source.is_upstream())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub handshake: bool,
    pub similarity: bool,
    pub samplegen: bool,
    pub report: EvalReport,
}

/// The four component patterns compared: handshake+similarity,
/// similarity+generation, handshake+generation, and all three.
pub fn ablation_configs(base: &PipelineConfig) -> Vec<(String, PipelineConfig)> {
    vec![
        ("1".into(), base.clone().with_components(true, true, false)),
        ("2".into(), base.clone().with_components(false, true, true)),
        ("3".into(), base.clone().with_components(true, false, true)),
        ("Ours".into(), base.clone().with_components(true, true, true)),
    ]
}

pub fn run_ablation(
    corpus: &Corpus,
    store: &ExemplarStore,
    llm: &LlmClient,
    provider: &dyn EmbeddingProvider,
    base: &PipelineConfig,
    workers: usize,
    k: Option<usize>,
) -> Result<Vec<AblationRow>, AblationError> {
    if !corpus.is_fully_labeled() {
        return Err(AblationError::Unlabeled);
    }
    let dialogues: Vec<&Dialogue> = corpus.dialogues.iter().map(|d| &d.dialogue).collect();
    let golds: Vec<(String, Segmentation)> = corpus
        .dialogues
        .iter()
        .map(|d| (d.dialogue.id.clone(), d.gold.clone().expect("labeled")))
        .collect();
    let mut rows = Vec::new();
    for (label, config) in ablation_configs(base) {
        let (h, s, g) = (config.enable_handshake, config.enable_similarity, config.enable_samplegen);
        let pipeline = Pipeline::new(config, llm, provider, store);
        let mut predictions = Vec::with_capacity(dialogues.len());
        for (d, run) in dialogues.iter().zip(pipeline.segment_all(&dialogues, workers)) {
            let run = run.map_err(|source| AblationError::Pipeline {
                row: label.clone(),
                id: d.id.clone(),
                source,
            })?;
            predictions.push((d.id.clone(), run.prediction.segmentation));
        }
        let report = evaluate_corpus(&corpus.name, &format!("No.{label}"), &predictions, &golds, k)?;
        rows.push(AblationRow {
            label,
            handshake: h,
            similarity: s,
            samplegen: g,
            report,
        });
    }
    Ok(rows)
}

/// Component check-marks and percent scores, one row per configuration.
pub fn render_ablation_table(rows: &[AblationRow]) -> String {
    let mark = |on: bool| if on { "x" } else { "" };
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<5}| {:^9} | {:^19} | {:^16} | {:>5} | {:>5}",
        "No.", "Handshake", "Dialogue Similarity", "Topic Generation", "Pk", "Wd"
    );
    let _ = writeln!(out, "{}", "-".repeat(73));
    for r in rows {
        let _ = writeln!(
            out,
            "{:<5}| {:^9} | {:^19} | {:^16} | {:>5} | {:>5}",
            r.label,
            mark(r.handshake),
            mark(r.similarity),
            mark(r.samplegen),
            percent(r.report.mean_pk),
            percent(r.report.mean_wd)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_single_segment() {
        let text = r#"{"segments":[{"start":0,"end":4,"explanation":"A vessel requests entry clearance from port control and the exchange completes.","confidence":0.91}]}"#;
        let p = parse_segmentation_response(text, 5).unwrap();
        assert_eq!(p.segments.len(), 1);
        assert_eq!(p.segments[0].confidence, 0.91);
        assert!(p.segmentation.boundaries().is_empty());
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn parse_well_formed() {
        let text = r#"{"segments":[{"start":0,"end":2,"explanation":"a","confidence":0.8},{"start":3,"end":5,"explanation":"b","confidence":0.7}]}"#;
        let p = parse_segmentation_response(text, 6).unwrap();
        assert_eq!(p.segmentation.boundaries(), &[3]);
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn parse_overlap_repaired() {
        let text = r#"{"segments":[{"start":0,"end":3,"explanation":"a","confidence":0.8},{"start":2,"end":5,"explanation":"b","confidence":0.7}]}"#;
        let p = parse_segmentation_response(text, 6).unwrap();
        let ranges: Vec<(usize, usize)> = p.segments.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(ranges, [(0, 3), (4, 5)]);
        assert_eq!(p.segmentation.boundaries(), &[4]);
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn parse_repairs_gaps_order_and_ranges() {
        let text = r#"Here: {"segments":[
            {"start":6,"end":20,"explanation":"tail","confidence":1.4},
            {"start":2,"end":3,"explanation":"","confidence":0.5},
            {"start":3,"end":3,"explanation":"inner","confidence":0.5}
        ]}"#;
        let p = parse_segmentation_response(text, 10).unwrap();
        let ranges: Vec<(usize, usize)> = p.segments.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(ranges, [(0, 5), (6, 9)]);
        assert_eq!(p.segments[1].confidence, 1.0);
        assert!(!p.segments[0].explanation.is_empty());
        assert!(p.warnings.len() >= 5, "{:?}", p.warnings);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            parse_segmentation_response("no idea", 3).unwrap_err(),
            SegmentParseError::NoJson
        );
        assert_eq!(
            parse_segmentation_response(r#"{"segments":[]}"#, 3).unwrap_err(),
            SegmentParseError::NoSegments
        );
    }

    #[test]
    fn prompt_with_components_disabled() {
        let q = Dialogue::from_texts("q", ["hello", "world"]);
        let p = build_segmentation_prompt(&q, &[], &[], &[]);
        assert!(!p.contains("SEGMENTED EXAMPLES"));
        assert!(!p.contains("HANDSHAKE HINTS"));
        assert!(!p.contains("BOUNDARY DEMONSTRATIONS"));
        assert!(p.contains("QUERY DIALOGUE id=q utterances=2"));
        assert!(p.contains("[1] world"));
        assert!(p.contains("\"explanation\":str"));
    }

    #[test]
    fn ablation_patterns() {
        let rows: Vec<(String, bool, bool, bool)> = ablation_configs(&PipelineConfig::default())
            .into_iter()
            .map(|(l, c)| (l, c.enable_handshake, c.enable_similarity, c.enable_samplegen))
            .collect();
        assert_eq!(
            rows,
            [
                ("1".into(), true, true, false),
                ("2".into(), false, true, true),
                ("3".into(), true, false, true),
                ("Ours".into(), true, true, true),
            ]
        );
    }

    #[test]
    fn record_round_trip() {
        let text = r#"{"segments":[{"start":0,"end":2,"explanation":"a","confidence":0.8},{"start":3,"end":5,"explanation":"b","confidence":0.7}]}"#;
        let p = parse_segmentation_response(text, 6).unwrap();
        let rec = p.to_record("d1");
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.starts_with(r#"{"id":"d1","segments":[{"start":0,"end":2,"explanation":"a","confidence":0.8}"#));
        let back: PredictionRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.segmentation().unwrap(), p.segmentation);
    }
}
