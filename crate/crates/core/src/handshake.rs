//! Token-level handshake tagging (`HS-BEG` / `HS-END` / `O`) through a
//! few-shot LLM prompt, with pairing repair and span extraction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dialogue::Dialogue;
use crate::jsonx::extract_first_json;
use crate::llm::{complete_with_repair, LlmClient, LlmError, Message, ModelSettings, RepairError, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HandshakeLabel {
    #[serde(rename = "HS-BEG")]
    Beg,
    #[serde(rename = "HS-END")]
    End,
    #[serde(rename = "O")]
    O,
}

impl HandshakeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            HandshakeLabel::Beg => "HS-BEG",
            HandshakeLabel::End => "HS-END",
            HandshakeLabel::O => "O",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "HS-BEG" => Some(Self::Beg),
            "HS-END" => Some(Self::End),
            "O" => Some(Self::O),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenPrediction {
    pub utterance: usize,
    pub token: usize,
    pub label: HandshakeLabel,
    pub trust: f64,
    pub reasoning: String,
}

impl TokenPrediction {
    pub fn outside(utterance: usize, token: usize) -> Self {
        Self {
            utterance,
            token,
            label: HandshakeLabel::O,
            trust: 1.0,
            reasoning: String::new(),
        }
    }
}

/// Inclusive token range inside one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandshakeSpan {
    pub utterance: usize,
    pub start: usize,
    pub end: usize,
    pub trust: f64,
    pub reasoning: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HandshakeError {
    #[error("could not parse handshake response: {0}")]
    Parse(String),
    #[error("invalid handshake tags: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("handshake tagging failed: {0}")]
    Llm(#[from] LlmError),
}

/// A worked tagging example shown to the model.
#[derive(Debug, Clone, PartialEq)]
pub struct FewShotExample {
    pub dialogue: Dialogue,
    pub tags: Vec<TokenPrediction>,
}

fn tag(u: usize, t: usize, label: HandshakeLabel, trust: f64, reasoning: &str) -> TokenPrediction {
    TokenPrediction {
        utterance: u,
        token: t,
        label,
        trust,
        reasoning: reasoning.to_string(),
    }
}

/// Built-in maritime VHF examples.
pub fn default_few_shot() -> Vec<FewShotExample> {
    use HandshakeLabel::{Beg, End};
    vec![
        FewShotExample {
            dialogue: Dialogue::new(
                "example-1",
                [
                    (Some("Star Alpha"), "Star Alpha calling port control, over."),
                    (Some("Port Control"), "Star Alpha, port control, go ahead."),
                    (Some("Star Alpha"), "Requesting berth assignment for arrival at 1400."),
                ],
            ),
            tags: vec![
                tag(0, 0, Beg, 0.95, "vessel names itself to open a call"),
                tag(0, 4, End, 0.93, "addressee named; call-up complete"),
                tag(1, 0, Beg, 0.85, "station acknowledges the caller by name"),
                tag(1, 5, End, 0.82, "invitation to proceed closes the exchange opener"),
            ],
        },
        FewShotExample {
            dialogue: Dialogue::new(
                "example-2",
                [
                    (Some("Bravo Hotel"), "Roger, we will keep watch on channel one six."),
                    (Some("Bravo Hotel"), "Delta Echo, this is Bravo Hotel."),
                    (Some("Delta Echo"), "Bravo Hotel, Delta Echo, receiving you."),
                ],
            ),
            tags: vec![
                tag(1, 0, Beg, 0.94, "callee named first in a fresh call-up"),
                tag(1, 5, End, 0.92, "\"this is <station>\" closes the handshake"),
                tag(2, 0, Beg, 0.8, "reply names both stations"),
                tag(2, 5, End, 0.78, "reception confirmed"),
            ],
        },
    ]
}

const LABEL_DEFINITIONS: &str = "\
Label definitions:
- HS-BEG: first token of a handshake statement, a short call-up or acknowledgement that names stations and opens a new exchange (for example \"Star Alpha calling port control\" or \"Delta Echo, this is Bravo Hotel\").
- HS-END: last token of that handshake statement.
- O: every other token, including tokens inside a handshake.
Every HS-BEG must be paired with a later HS-END in the same utterance.";

const OUTPUT_SCHEMA: &str = "\
Output schema (return only JSON):
{\"tags\":[{\"u\":int,\"t\":int,\"label\":\"HS-BEG\"|\"HS-END\"|\"O\",\"trust\":float,\"reasoning\":str}]}
u is the utterance number, t the token number, trust a value in [0,1] expressing how reliable the label is, and reasoning a short justification. Tokens you do not list are labeled O.";

pub fn system_prompt() -> String {
    format!(
        "{}\nYou tag handshake statements in public-channel radio dialogue at the token level.",
        Stage::Handshake.marker()
    )
}

fn render_dialogue(out: &mut String, dialogue: &Dialogue) {
    for u in &dialogue.utterances {
        let _ = write!(out, "U{}", u.index);
        if let Some(s) = &u.speaker {
            let _ = write!(out, " [{s}]");
        }
        out.push(':');
        for (t, tok) in u.tokens.iter().enumerate() {
            let _ = write!(out, " {t}:{tok}");
        }
        out.push('\n');
    }
}

fn tags_json(tags: &[TokenPrediction]) -> String {
    let entries: Vec<Value> = tags
        .iter()
        .map(|p| {
            serde_json::json!({
                "u": p.utterance,
                "t": p.token,
                "label": p.label.as_str(),
                "trust": p.trust,
                "reasoning": p.reasoning,
            })
        })
        .collect();
    serde_json::json!({ "tags": entries }).to_string()
}

/// User prompt: definitions, worked examples, the numbered target dialogue
/// and the output schema. Token numbers are `tokenize()` indices.
pub fn build_hs_prompt(dialogue: &Dialogue, few_shot: &[FewShotExample]) -> String {
    let mut out = String::new();
    out.push_str(LABEL_DEFINITIONS);
    out.push_str("\n\n");
    out.push_str(OUTPUT_SCHEMA);
    out.push_str("\n\n");
    for (i, ex) in few_shot.iter().enumerate() {
        let _ = writeln!(out, "EXAMPLE {}", i + 1);
        render_dialogue(&mut out, &ex.dialogue);
        out.push_str("ANSWER:\n");
        out.push_str(&tags_json(&ex.tags));
        out.push_str("\n\n");
    }
    out.push_str("TARGET\n");
    render_dialogue(&mut out, dialogue);
    out.push_str("ANSWER:\n");
    out
}

fn schema_err(msg: impl Into<String>) -> HandshakeError {
    HandshakeError::Parse(msg.into())
}

/// Parses a tagging reply against a dialogue shape (tokens per utterance).
/// Returns one prediction per token, grouped by utterance; unlisted tokens
/// are `O` with trust 1.
pub fn parse_hs_response(
    text: &str,
    shape: &[usize],
) -> Result<Vec<Vec<TokenPrediction>>, HandshakeError> {
    let value = extract_first_json(text).map_err(|e| schema_err(e.to_string()))?;
    let entries = match &value {
        Value::Object(obj) => obj
            .get("tags")
            .and_then(Value::as_array)
            .ok_or_else(|| schema_err("missing `tags` array"))?,
        Value::Array(items) => items,
        _ => return Err(schema_err("expected an object with `tags`")),
    };

    let mut grid: Vec<Vec<TokenPrediction>> = shape
        .iter()
        .enumerate()
        .map(|(u, &n)| (0..n).map(|t| TokenPrediction::outside(u, t)).collect())
        .collect();
    let mut problems = Vec::new();
    for (i, entry) in entries.iter().enumerate() {
        let Some(obj) = entry.as_object() else {
            problems.push(format!("entry {i}: not an object"));
            continue;
        };
        let u = obj.get("u").and_then(Value::as_u64);
        let t = obj.get("t").and_then(Value::as_u64);
        let label = obj.get("label").and_then(Value::as_str);
        let trust = obj.get("trust").and_then(Value::as_f64);
        let reasoning = obj
            .get("reasoning")
            .and_then(Value::as_str)
            .unwrap_or("")
            .trim()
            .to_string();
        let (Some(u), Some(t), Some(label)) = (u, t, label) else {
            problems.push(format!("entry {i}: needs integer u, t and a string label"));
            continue;
        };
        let (u, t) = (u as usize, t as usize);
        let Some(label) = HandshakeLabel::parse(label) else {
            problems.push(format!("entry {i}: unknown label `{label}`"));
            continue;
        };
        let trust = trust.unwrap_or(1.0);
        if !(0.0..=1.0).contains(&trust) {
            problems.push(format!("entry {i} (u={u}, t={t}): trust {trust} outside [0,1]"));
            continue;
        }
        if u >= shape.len() || t >= shape[u] {
            problems.push(format!("entry {i}: index (u={u}, t={t}) out of range"));
            continue;
        }
        if label != HandshakeLabel::O && reasoning.is_empty() {
            problems.push(format!("entry {i} (u={u}, t={t}): missing reasoning"));
            continue;
        }
        grid[u][t] = TokenPrediction {
            utterance: u,
            token: t,
            label,
            trust,
            reasoning,
        };
    }
    if problems.is_empty() {
        Ok(grid)
    } else {
        Err(HandshakeError::Validation(problems))
    }
}

/// Greedy left-to-right pairing over one utterance's labels. Returns the
/// repaired labels and inclusive spans.
pub fn pair_labels(labels: &[HandshakeLabel]) -> (Vec<HandshakeLabel>, Vec<(usize, usize)>) {
    use HandshakeLabel::*;
    let mut repaired = vec![O; labels.len()];
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (t, &label) in labels.iter().enumerate() {
        match (label, open) {
            (Beg, None) => open = Some(t),
            (End, Some(start)) => {
                spans.push((start, t));
                open = None;
            }
            // nested BEG or dangling END
            _ => {}
        }
    }
    if let Some(start) = open {
        spans.push((start, labels.len() - 1));
    }
    for &(s, e) in &spans {
        repaired[s] = Beg;
        if e > s {
            repaired[e] = End;
        }
    }
    (repaired, spans)
}

/// Enforces BEG/END pairing within each utterance. An unclosed BEG closes
/// at the utterance's last token, a dangling END (or a BEG inside an open
/// span) is demoted to `O`.
pub fn enforce_pairing(
    predictions: &[Vec<TokenPrediction>],
) -> (Vec<Vec<TokenPrediction>>, Vec<HandshakeSpan>) {
    let mut repaired_all = Vec::with_capacity(predictions.len());
    let mut spans_all = Vec::new();
    for row in predictions {
        let labels: Vec<HandshakeLabel> = row.iter().map(|p| p.label).collect();
        let (repaired, spans) = pair_labels(&labels);
        let mut row = row.clone();
        for (p, label) in row.iter_mut().zip(repaired) {
            if p.label != label && label == HandshakeLabel::End && p.reasoning.is_empty() {
                p.reasoning = "span closed at end of utterance".to_string();
            }
            p.label = label;
        }
        for (s, e) in spans {
            let members = &row[s..=e];
            let trust = members.iter().map(|p| p.trust).fold(1.0f64, f64::min);
            let reasoning = members
                .iter()
                .filter(|p| !p.reasoning.is_empty())
                .map(|p| p.reasoning.as_str())
                .collect::<Vec<_>>()
                .join(" | ");
            spans_all.push(HandshakeSpan {
                utterance: row[s].utterance,
                start: s,
                end: e,
                trust,
                reasoning,
            });
        }
        repaired_all.push(row);
    }
    (repaired_all, spans_all)
}

/// Writes spans back as labels over the given shape.
pub fn spans_to_labels(spans: &[HandshakeSpan], shape: &[usize]) -> Vec<Vec<HandshakeLabel>> {
    let mut labels: Vec<Vec<HandshakeLabel>> =
        shape.iter().map(|&n| vec![HandshakeLabel::O; n]).collect();
    for s in spans {
        labels[s.utterance][s.start] = HandshakeLabel::Beg;
        if s.end > s.start {
            labels[s.utterance][s.end] = HandshakeLabel::End;
        }
    }
    labels
}

/// Prompt → model → parse → pairing. A reply that fails to parse or
/// validate is retried once with a repair instruction.
pub fn tag_handshakes(
    dialogue: &Dialogue,
    llm: &LlmClient,
    few_shot: &[FewShotExample],
    settings: &ModelSettings,
) -> Result<Vec<HandshakeSpan>, HandshakeError> {
    let shape = dialogue.shape();
    let messages = vec![
        Message::system(system_prompt()),
        Message::user(build_hs_prompt(dialogue, few_shot)),
    ];
    let grid = complete_with_repair(llm, Stage::Handshake, settings, messages, |text| {
        parse_hs_response(text, &shape)
    })
    .map_err(|e| match e {
        RepairError::Llm(e) => HandshakeError::Llm(e),
        RepairError::Parse(e) => e,
    })?;
    Ok(enforce_pairing(&grid).1)
}

/// Gap index of every utterance (after the first) that contains a span start.
pub fn spans_to_boundary_hints(spans: &[HandshakeSpan], n: usize) -> Vec<usize> {
    let mut hints: Vec<usize> = spans
        .iter()
        .map(|s| s.utterance)
        .filter(|&u| u > 0 && u < n)
        .collect();
    hints.sort_unstable();
    hints.dedup();
    hints
}

/// Per-utterance similarity weights: `weight` where a span sits, 1 elsewhere.
pub fn utterance_weights(spans: &[HandshakeSpan], n: usize, weight: f64) -> Vec<f64> {
    let mut w = vec![1.0; n];
    for s in spans {
        if s.utterance < n {
            w[s.utterance] = weight;
        }
    }
    w
}
