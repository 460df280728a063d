//! Contrastive sample synthesis: context windows around candidate gaps, an
//! LLM analysis pass, then one positive (topic shift at position 4) and one
//! negative (continuous) seven-utterance dialogue per window.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dialogue::{Dialogue, Segmentation, Utterance};
use crate::jsonx::extract_first_json;
use crate::llm::{complete_with_repair, LlmClient, LlmError, Message, ModelSettings, RepairError, Stage};

pub const SAMPLE_LEN: usize = 7;
/// 1-based position of the pivot utterance.
pub const PIVOT: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("could not parse analysis: {0}")]
    Analysis(String),
    #[error("sample failed validation ({}); draft: {draft}", .violations.join(", "))]
    Invalid {
        violations: Vec<String>,
        draft: String,
    },
    #[error("sample generation failed: {0}")]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    /// Centered on a gold boundary.
    Boundary,
    /// Inside a gold segment.
    MidSegment,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextWindow {
    pub dialogue_id: String,
    pub gap: usize,
    pub kind: WindowKind,
    pub prev: Vec<Utterance>,
    pub next: Vec<Utterance>,
}

impl ContextWindow {
    pub fn len(&self) -> usize {
        self.prev.len() + self.next.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.prev.iter().chain(&self.next)
    }
}

fn window_at(dialogue: &Dialogue, gap: usize, before: usize, after: usize, kind: WindowKind) -> ContextWindow {
    ContextWindow {
        dialogue_id: dialogue.id.clone(),
        gap,
        kind,
        prev: dialogue.utterances[gap - before..gap].to_vec(),
        next: dialogue.utterances[gap..gap + after].to_vec(),
    }
}

/// Windows with `before` utterances ahead of the gap and `after` following.
///
/// Unlabeled dialogues yield a window at every eligible gap. With gold
/// labels, every eligible gold boundary yields a `Boundary` window and each
/// gold segment contributes the lower median of its eligible interior gaps
/// as a `MidSegment` window. Results are ordered by gap.
pub fn extract_windows(
    dialogue: &Dialogue,
    gold: Option<&Segmentation>,
    before: usize,
    after: usize,
) -> Vec<ContextWindow> {
    let n = dialogue.len();
    if before == 0 || after == 0 || n < before + after {
        return Vec::new();
    }
    let eligible = |g: usize| g >= before && g + after <= n;
    let mut windows = match gold {
        None => (before..=n - after)
            .map(|g| window_at(dialogue, g, before, after, WindowKind::Unlabeled))
            .collect(),
        Some(gold) => {
            let mut out: Vec<ContextWindow> = gold
                .boundaries()
                .iter()
                .copied()
                .filter(|&g| eligible(g))
                .map(|g| window_at(dialogue, g, before, after, WindowKind::Boundary))
                .collect();
            for (start, end) in gold.segments() {
                let interior: Vec<usize> = (start + 1..=end).filter(|&g| eligible(g)).collect();
                if !interior.is_empty() {
                    let g = interior[(interior.len() - 1) / 2];
                    out.push(window_at(dialogue, g, before, after, WindowKind::MidSegment));
                }
            }
            out
        }
    };
    windows.sort_by_key(|w| w.gap);
    windows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisDoc {
    pub themes: Vec<String>,
    pub discourse_markers: Vec<String>,
    pub speaker_roles: BTreeMap<String, String>,
    pub domain_terms: Vec<String>,
    #[serde(skip)]
    pub raw: String,
}

fn render_window(out: &mut String, window: &ContextWindow) {
    for (i, u) in window.utterances().enumerate() {
        if i == window.prev.len() {
            out.push_str("--- candidate segmentation point ---\n");
        }
        let _ = write!(out, "W{}", i + 1);
        if let Some(s) = &u.speaker {
            let _ = write!(out, " [{s}]");
        }
        let _ = writeln!(out, ": {}", u.text);
    }
}

pub fn analysis_system_prompt() -> String {
    format!(
        "{}\nYou analyse the discourse structure of short dialogue excerpts.",
        Stage::Analysis.marker()
    )
}

pub fn build_analysis_prompt(window: &ContextWindow) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Analyse the {} utterances below ({} before and {} after a candidate segmentation point).",
        window.len(),
        window.prev.len(),
        window.next.len()
    );
    out.push_str(
        "1. Extract the thematic element or discourse topic of each utterance (one entry per utterance, in order).\n\
         2. Identify lexical and pragmatic markers such as discourse particles and topic shift indicators.\n\
         3. Characterise the speaker roles and the dialogue coherence patterns.\n\
         4. Detect domain-specific terminologies and contextual dependencies.\n\n",
    );
    render_window(&mut out, window);
    out.push_str(
        "\nOutput schema (return only JSON):\n\
         {\"themes\":[str, one per utterance],\"discourse_markers\":[str],\"speaker_roles\":{speaker:str role},\"domain_terms\":[str]}\n",
    );
    out
}

fn string_list(obj: &serde_json::Map<String, Value>, key: &str) -> Result<Vec<String>, String> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                other => Err(format!("`{key}` entries must be strings, got {other}")),
            })
            .collect(),
        Some(_) => Err(format!("`{key}` must be a list")),
    }
}

pub fn parse_analysis(text: &str, expected_utterances: usize) -> Result<AnalysisDoc, SampleError> {
    let bad = SampleError::Analysis;
    let value = extract_first_json(text).map_err(|e| bad(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| bad("expected a JSON object".into()))?;
    let themes = string_list(obj, "themes").map_err(bad)?;
    if themes.len() != expected_utterances {
        return Err(bad(format!(
            "expected {expected_utterances} themes, got {}",
            themes.len()
        )));
    }
    let speaker_roles = match obj.get("speaker_roles") {
        None | Some(Value::Null) => BTreeMap::new(),
        Some(Value::Object(m)) => m
            .iter()
            .map(|(k, v)| {
                let role = match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                (k.clone(), role)
            })
            .collect(),
        Some(_) => return Err(bad("`speaker_roles` must be an object".into())),
    };
    Ok(AnalysisDoc {
        themes,
        discourse_markers: string_list(obj, "discourse_markers").map_err(bad)?,
        speaker_roles,
        domain_terms: string_list(obj, "domain_terms").map_err(bad)?,
        raw: text.to_string(),
    })
}

pub fn analyze_context(
    window: &ContextWindow,
    llm: &LlmClient,
    settings: &ModelSettings,
) -> Result<AnalysisDoc, SampleError> {
    let messages = vec![
        Message::system(analysis_system_prompt()),
        Message::user(build_analysis_prompt(window)),
    ];
    let expected = window.len();
    complete_with_repair(llm, Stage::Analysis, settings, messages, |t| parse_analysis(t, expected))
        .map_err(|e| match e {
            RepairError::Llm(e) => SampleError::Llm(e),
            RepairError::Parse(e) => e,
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub utterances: Vec<String>,
    pub label: u8,
    pub confidence: f64,
    pub reasoning: String,
    /// 1-based pivot position declared by the model.
    #[serde(default)]
    pub pivot: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dialogue_id: String,
    pub gap: usize,
    pub kind: WindowKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePair {
    pub positive: Sample,
    pub negative: Sample,
    pub provenance: Provenance,
}

impl SamplePair {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("sample serializes")
    }
}

/// Schema checks for one synthesized sample. Empty means valid.
pub fn validate_sample(candidate: &Sample, expected_label: u8) -> Vec<String> {
    let mut v = Vec::new();
    if candidate.utterances.len() != SAMPLE_LEN {
        v.push("utterance count".to_string());
    }
    if candidate.utterances.iter().any(|u| u.trim().is_empty()) {
        v.push("empty utterance".to_string());
    }
    if !(0.0..=1.0).contains(&candidate.confidence) {
        v.push("confidence range".to_string());
    }
    if candidate.reasoning.trim().is_empty() {
        v.push("missing reasoning".to_string());
    }
    if candidate.label != expected_label {
        v.push("label".to_string());
    }
    if expected_label == 1 && candidate.pivot != Some(PIVOT) {
        v.push("pivot position".to_string());
    }
    v
}

pub fn synthesis_system_prompt() -> String {
    format!(
        "{}\nYou write realistic synthetic dialogues that teach a segmenter what a topic boundary does and does not look like.",
        Stage::Synthesis.marker()
    )
}

pub fn build_synthesis_prompt(window: &ContextWindow, analysis: &AnalysisDoc) -> String {
    let mut out = String::new();
    out.push_str("Source excerpt:\n");
    render_window(&mut out, window);
    out.push_str("\nAnalysis of the excerpt:\n");
    let analysis_json = serde_json::json!({
        "themes": analysis.themes,
        "discourse_markers": analysis.discourse_markers,
        "speaker_roles": analysis.speaker_roles,
        "domain_terms": analysis.domain_terms,
    });
    out.push_str(&analysis_json.to_string());
    out.push_str(
        "\n\nWrite two dialogues of exactly 7 utterances each, keeping the register, style and speaker roles of the excerpt.\n\
         POSITIVE (label 1): positions 1-3 maintain thematic continuity with the previous topic; position 4 is a pivot utterance that exhibits explicit topic shift markers, for example transitional phrases such as \"By the way\" or \"Speaking of\", a sudden change of perspective or a domain switch; positions 5-7 cohere around the new topic. The boundary must be clear and unambiguous.\n\
         NEGATIVE (label 0): keep strong thematic and pragmatic continuity across all 7 positions; the utterance at position 4 advances, elaborates on or clarifies the previous topic instead of shifting away, using within-topic patterns such as agreement, clarification and detail addition rather than boundary markers.\n\
         For each dialogue give a confidence in [0,1] that it realises its label, and a reasoning chain explaining why.\n\n\
         Output schema (return only JSON):\n\
         {\"positive\":{\"utterances\":[7 str],\"pivot\":4,\"confidence\":float,\"reasoning\":str},\"negative\":{\"utterances\":[7 str],\"pivot\":4,\"confidence\":float,\"reasoning\":str}}\n",
    );
    out
}

fn parse_sample(value: Option<&Value>, label: u8, which: &str) -> Result<Sample, String> {
    let obj = value
        .and_then(Value::as_object)
        .ok_or_else(|| format!("missing `{which}` object"))?;
    let utterances = string_list(obj, "utterances")?;
    let confidence = obj
        .get("confidence")
        .and_then(Value::as_f64)
        .ok_or_else(|| format!("`{which}.confidence` must be a number"))?;
    let reasoning = obj
        .get("reasoning")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    let pivot = obj.get("pivot").and_then(Value::as_u64).map(|p| p as usize);
    Ok(Sample {
        utterances,
        label,
        confidence,
        reasoning,
        pivot,
    })
}

/// Parses and validates a synthesis reply into a pair.
pub fn parse_synthesis(text: &str, window: &ContextWindow) -> Result<SamplePair, SampleError> {
    let invalid = |violations: Vec<String>| SampleError::Invalid {
        violations,
        draft: text.to_string(),
    };
    let value = extract_first_json(text).map_err(|e| invalid(vec![e.to_string()]))?;
    let positive = parse_sample(value.get("positive"), 1, "positive").map_err(|e| invalid(vec![e]))?;
    let negative = parse_sample(value.get("negative"), 0, "negative").map_err(|e| invalid(vec![e]))?;
    let mut violations: Vec<String> = validate_sample(&positive, 1)
        .into_iter()
        .map(|v| format!("positive: {v}"))
        .collect();
    violations.extend(
        validate_sample(&negative, 0)
            .into_iter()
            .map(|v| format!("negative: {v}")),
    );
    if !violations.is_empty() {
        return Err(invalid(violations));
    }
    Ok(SamplePair {
        positive,
        negative,
        provenance: Provenance {
            dialogue_id: window.dialogue_id.clone(),
            gap: window.gap,
            kind: window.kind,
        },
    })
}

/// One regeneration is attempted when the first draft fails validation.
pub fn synthesize_samples(
    window: &ContextWindow,
    analysis: &AnalysisDoc,
    llm: &LlmClient,
    settings: &ModelSettings,
) -> Result<SamplePair, SampleError> {
    let messages = vec![
        Message::system(synthesis_system_prompt()),
        Message::user(build_synthesis_prompt(window, analysis)),
    ];
    complete_with_repair(llm, Stage::Synthesis, settings, messages, |t| parse_synthesis(t, window))
        .map_err(|e| match e {
            RepairError::Llm(e) => SampleError::Llm(e),
            RepairError::Parse(e) => e,
        })
}

/// Keeps pairs whose positive and negative confidences both reach `threshold`.
pub fn filter_by_confidence(pairs: Vec<SamplePair>, threshold: f64) -> Vec<SamplePair> {
    pairs
        .into_iter()
        .filter(|p| p.positive.confidence >= threshold && p.negative.confidence >= threshold)
        .collect()
}

/// Analysis followed by synthesis for one window.
pub fn generate_pair(
    window: &ContextWindow,
    llm: &LlmClient,
    settings: &ModelSettings,
) -> Result<SamplePair, SampleError> {
    let analysis = analyze_context(window, llm, settings)?;
    synthesize_samples(window, &analysis, llm, settings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dialogue(n: usize) -> Dialogue {
        Dialogue::from_texts("d", (0..n).map(|i| format!("utterance {i}")))
    }

    fn sample(label: u8, n: usize, confidence: f64) -> Sample {
        Sample {
            utterances: (0..n).map(|i| format!("line {i}")).collect(),
            label,
            confidence,
            reasoning: "because".into(),
            pivot: Some(PIVOT),
        }
    }

    fn pair(cp: f64, cn: f64) -> SamplePair {
        SamplePair {
            positive: sample(1, 7, cp),
            negative: sample(0, 7, cn),
            provenance: Provenance {
                dialogue_id: "d".into(),
                gap: 3,
                kind: WindowKind::Boundary,
            },
        }
    }

    /// Enumerates every gap and keeps those with full context on both sides.
    fn eligible_gaps(n: usize, m: usize, k: usize) -> Vec<usize> {
        (1..n).filter(|&g| g >= m && n - g >= k).collect()
    }

    #[test]
    fn window_extraction() {
        assert!(extract_windows(&dialogue(5), None, 3, 3).is_empty());
        let w = extract_windows(&dialogue(6), None, 3, 3);
        assert_eq!(w.iter().map(|w| w.gap).collect::<Vec<_>>(), eligible_gaps(6, 3, 3));
        assert_eq!(w[0].gap, 3);
        assert_eq!(w[0].prev.len(), 3);
        assert_eq!(w[0].next[0].index, 3);

        let d = dialogue(8);
        let gold = Segmentation::new(8, vec![3]).unwrap();
        let w = extract_windows(&d, Some(&gold), 3, 3);
        let got: Vec<(usize, WindowKind)> = w.iter().map(|w| (w.gap, w.kind)).collect();
        assert_eq!(got, [(3, WindowKind::Boundary), (4, WindowKind::MidSegment)]);
        assert_eq!(eligible_gaps(8, 3, 3), [3, 4, 5]);
    }

    #[test]
    fn windows_skip_ineligible_boundaries() {
        let d = dialogue(12);
        let gold = Segmentation::new(12, vec![1, 6]).unwrap();
        let w = extract_windows(&d, Some(&gold), 3, 3);
        let got: Vec<(usize, WindowKind)> = w.iter().map(|w| (w.gap, w.kind)).collect();
        // segment [1,5] interior eligible {3,4,5} -> 4; segment [6,11] -> {7,8,9} -> 8
        assert_eq!(
            got,
            [
                (4, WindowKind::MidSegment),
                (6, WindowKind::Boundary),
                (8, WindowKind::MidSegment)
            ]
        );
    }

    #[test]
    fn validation() {
        assert!(validate_sample(&sample(1, 7, 0.9), 1).is_empty());
        assert_eq!(validate_sample(&sample(1, 6, 0.9), 1), ["utterance count"]);
        assert_eq!(validate_sample(&sample(0, 7, 1.2), 0), ["confidence range"]);
        let mut s = sample(1, 7, 0.5);
        s.pivot = Some(3);
        assert_eq!(validate_sample(&s, 1), ["pivot position"]);
        let mut s = sample(0, 7, 0.5);
        s.pivot = None;
        s.reasoning = " ".into();
        assert_eq!(validate_sample(&s, 0), ["missing reasoning"]);
    }

    #[test]
    fn confidence_filter() {
        let pairs = vec![pair(0.6, 0.4), pair(1.0, 1.0), pair(0.0, 0.0), pair(0.5, 0.5)];
        assert_eq!(filter_by_confidence(pairs.clone(), 0.0).len(), 4);
        assert_eq!(filter_by_confidence(pairs.clone(), 1.0), vec![pair(1.0, 1.0)]);
        let kept = filter_by_confidence(pairs, 0.5);
        assert_eq!(kept, vec![pair(1.0, 1.0), pair(0.5, 0.5)]);
    }

    #[test]
    fn analysis_parsing() {
        let ok = r#"{"themes":["a","b"],"discourse_markers":["roger"],"speaker_roles":{"V":"vessel"},"domain_terms":["berth"]}"#;
        let doc = parse_analysis(ok, 2).unwrap();
        assert_eq!(doc.speaker_roles["V"], "vessel");
        assert_eq!(doc.raw, ok);
        assert!(matches!(parse_analysis(ok, 3), Err(SampleError::Analysis(_))));
        assert!(parse_analysis("nothing", 2).is_err());
    }

    #[test]
    fn synthesis_retry_then_error_keeps_draft() {
        let d = dialogue(6);
        let window = &extract_windows(&d, None, 3, 3)[0];
        let analysis = parse_analysis(
            r#"{"themes":["a","a","a","b","b","b"],"discourse_markers":[],"speaker_roles":{},"domain_terms":[]}"#,
            6,
        )
        .unwrap();
        let bad = r#"{"positive":{"utterances":["x"],"pivot":4,"confidence":0.9,"reasoning":"r"},"negative":{"utterances":["y"],"confidence":0.9,"reasoning":"r"}}"#;
        let calls = std::sync::Arc::new(std::sync::atomic::AtomicUsize::new(0));
        let c = calls.clone();
        let llm = LlmClient::scripted(move |_| {
            c.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(bad.to_string())
        });
        let err = synthesize_samples(window, &analysis, &llm, &ModelSettings::default()).unwrap_err();
        assert_eq!(calls.load(std::sync::atomic::Ordering::SeqCst), 2);
        match err {
            SampleError::Invalid { violations, draft } => {
                assert!(violations.iter().any(|v| v == "positive: utterance count"));
                assert_eq!(draft, bad);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn prompts_carry_required_instructions() {
        let d = dialogue(6);
        let window = &extract_windows(&d, None, 3, 3)[0];
        let p = build_analysis_prompt(window);
        assert!(p.contains("lexical and pragmatic markers"));
        assert!(p.contains("domain-specific terminologies"));
        assert_eq!(p.lines().filter(|l| l.starts_with('W')).count(), 6);
        let analysis = AnalysisDoc {
            themes: vec!["t".into(); 6],
            discourse_markers: vec![],
            speaker_roles: BTreeMap::new(),
            domain_terms: vec![],
            raw: String::new(),
        };
        let s = build_synthesis_prompt(window, &analysis);
        assert!(s.contains("pivot utterance") && s.contains("By the way"));
        assert!(s.contains("strong thematic and pragmatic continuity"));
    }

    #[test]
    fn jsonl_line_round_trips() {
        let p = pair(0.8, 0.7);
        let line = p.to_json_line();
        assert!(!line.contains('\n'));
        let back: SamplePair = serde_json::from_str(&line).unwrap();
        assert_eq!(back, p);
        assert!(line.contains("\"label\":1") && line.contains("\"kind\":\"boundary\""));
    }
}
