//! Dialogue and segmentation types, tokenization, and corpus ingestion.
//!
//! A boundary `b` is a gap index in `[1, n-1]`: it marks a topic break
//! between utterance `b - 1` and utterance `b`.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("schema error in dialogue `{dialogue}`: {message}")]
    Schema { dialogue: String, message: String },
    #[error("input is not valid UTF-8: {0}")]
    Encoding(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SegmentationError {
    #[error("dialogue length must be at least 1")]
    Empty,
    #[error("boundary {boundary} outside [1, {max}]")]
    OutOfRange { boundary: usize, max: usize },
    #[error("boundaries must be strictly increasing (saw {0} after {1})")]
    NotIncreasing(usize, usize),
}

/// Lowercases, splits on whitespace and trims non-alphanumeric characters
/// from both ends of every token. Empty tokens are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|raw| raw.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub index: usize,
    pub speaker: Option<String>,
    pub text: String,
    pub tokens: Vec<String>,
}

impl Utterance {
    pub fn new(index: usize, speaker: Option<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Self {
            index,
            speaker,
            text,
            tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub utterances: Vec<Utterance>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Dialogue {
    /// Builds a dialogue from `(speaker, text)` pairs, assigning contiguous indices.
    pub fn new<I, S>(id: impl Into<String>, turns: I) -> Self
    where
        I: IntoIterator<Item = (Option<S>, S)>,
        S: Into<String>,
    {
        let utterances = turns
            .into_iter()
            .enumerate()
            .map(|(i, (speaker, text))| Utterance::new(i, speaker.map(Into::into), text))
            .collect();
        Self {
            id: id.into(),
            utterances,
            meta: BTreeMap::new(),
        }
    }

    /// Builds a dialogue from bare utterance texts.
    pub fn from_texts<I, S>(id: impl Into<String>, texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(id, texts.into_iter().map(|t| (None::<String>, t.into())))
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Token counts per utterance.
    pub fn shape(&self) -> Vec<usize> {
        self.utterances.iter().map(|u| u.tokens.len()).collect()
    }
}

/// A set of gap-index boundaries over `n` utterances.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Segmentation {
    n: usize,
    boundaries: Vec<usize>,
}

impl Segmentation {
    pub fn new(n: usize, boundaries: Vec<usize>) -> Result<Self, SegmentationError> {
        if n == 0 {
            return Err(SegmentationError::Empty);
        }
        for (i, &b) in boundaries.iter().enumerate() {
            if b == 0 || b >= n {
                return Err(SegmentationError::OutOfRange {
                    boundary: b,
                    max: n.saturating_sub(1),
                });
            }
            if i > 0 && boundaries[i - 1] >= b {
                return Err(SegmentationError::NotIncreasing(b, boundaries[i - 1]));
            }
        }
        Ok(Self { n, boundaries })
    }

    /// Sorts and deduplicates, then validates.
    pub fn from_unsorted(
        n: usize,
        mut boundaries: Vec<usize>,
    ) -> Result<Self, SegmentationError> {
        boundaries.sort_unstable();
        boundaries.dedup();
        Self::new(n, boundaries)
    }

    pub fn single(n: usize) -> Result<Self, SegmentationError> {
        Self::new(n, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn segment_count(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn contains(&self, gap: usize) -> bool {
        self.boundaries.binary_search(&gap).is_ok()
    }

    /// Segment lengths, in order.
    pub fn to_masses(&self) -> Vec<usize> {
        let mut masses = Vec::with_capacity(self.segment_count());
        let mut start = 0;
        for &b in &self.boundaries {
            masses.push(b - start);
            start = b;
        }
        masses.push(self.n - start);
        masses
    }

    /// Inclusive `(start, end)` utterance ranges of each segment.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.segment_count());
        let mut start = 0;
        for &b in &self.boundaries {
            out.push((start, b - 1));
            start = b;
        }
        out.push((start, self.n - 1));
        out
    }

    /// Segment ordinal of every utterance.
    pub fn to_labels(&self) -> Vec<usize> {
        let mut labels = Vec::with_capacity(self.n);
        for (ordinal, mass) in self.to_masses().into_iter().enumerate() {
            labels.extend(std::iter::repeat(ordinal).take(mass));
        }
        labels
    }
}

/// Places a boundary wherever a topic label differs from its predecessor.
pub fn segmentation_from_labels<T: PartialEq>(
    labels: &[T],
) -> Result<Segmentation, SegmentationError> {
    let boundaries = labels
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(i, _)| i + 1)
        .collect();
    Segmentation::new(labels.len(), boundaries)
}

pub fn labels_from_segmentation(seg: &Segmentation) -> Vec<usize> {
    seg.to_labels()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDialogue {
    pub dialogue: Dialogue,
    pub gold: Option<Segmentation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub dialogues: Vec<LabeledDialogue>,
}

impl Corpus {
    pub fn is_fully_labeled(&self) -> bool {
        self.dialogues.iter().all(|d| d.gold.is_some())
    }

    pub fn find(&self, id: &str) -> Option<&LabeledDialogue> {
        self.dialogues.iter().find(|d| d.dialogue.id == id)
    }

    /// Serializes to the native JSON schema, writing gold labels as boundaries.
    pub fn to_native_json(&self) -> Value {
        let dialogues: Vec<Value> = self
            .dialogues
            .iter()
            .map(|ld| {
                let utterances: Vec<Value> = ld
                    .dialogue
                    .utterances
                    .iter()
                    .map(|u| serde_json::json!({"speaker": u.speaker, "text": u.text}))
                    .collect();
                let mut obj = serde_json::json!({
                    "id": ld.dialogue.id,
                    "utterances": utterances,
                });
                if let Some(gold) = &ld.gold {
                    obj["boundaries"] = serde_json::json!(gold.boundaries());
                }
                obj
            })
            .collect();
        serde_json::json!({"name": self.name, "dialogues": dialogues})
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    NativeJson,
    DialsegText,
    VhfJson,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "native-json" | "native" | "json" => Ok(Self::NativeJson),
            "dialseg-text" | "dialseg" | "text" => Ok(Self::DialsegText),
            "vhf-json" | "vhf" => Ok(Self::VhfJson),
            other => Err(format!(
                "unknown corpus format `{other}` (expected native-json, dialseg-text or vhf-json)"
            )),
        }
    }
}

pub fn parse_corpus(
    bytes: &[u8],
    format: CorpusFormat,
    name: &str,
) -> Result<Corpus, CorpusError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CorpusError::Encoding(e.to_string()))?;
    match format {
        CorpusFormat::NativeJson => parse_native(text, name),
        CorpusFormat::DialsegText => Ok(parse_dialseg(text, name)),
        CorpusFormat::VhfJson => parse_vhf(text, name),
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn json_error(text: &str, err: serde_json::Error) -> CorpusError {
    CorpusError::Parse {
        offset: byte_offset(text, err.line(), err.column()),
        message: err.to_string(),
    }
}

#[derive(Deserialize)]
struct NativeCorpus {
    #[serde(default)]
    name: Option<String>,
    dialogues: Vec<NativeDialogue>,
}

#[derive(Deserialize)]
struct NativeDialogue {
    id: String,
    utterances: Vec<NativeUtterance>,
    #[serde(default)]
    topics: Option<Vec<i64>>,
    #[serde(default)]
    boundaries: Option<Vec<usize>>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct NativeUtterance {
    #[serde(default)]
    speaker: Option<String>,
    text: String,
}

fn parse_native(text: &str, name: &str) -> Result<Corpus, CorpusError> {
    let raw: NativeCorpus = serde_json::from_str(text).map_err(|e| json_error(text, e))?;
    let mut dialogues = Vec::with_capacity(raw.dialogues.len());
    for d in raw.dialogues {
        let schema = |message: String| CorpusError::Schema {
            dialogue: d.id.clone(),
            message,
        };
        if d.utterances.is_empty() {
            return Err(schema("dialogue has no utterances".into()));
        }
        let n = d.utterances.len();
        let gold = match (&d.topics, &d.boundaries) {
            (Some(_), Some(_)) => {
                return Err(schema("both `topics` and `boundaries` present".into()))
            }
            (Some(topics), None) => {
                if topics.len() != n {
                    return Err(schema(format!(
                        "topic list has {} entries for {} utterances",
                        topics.len(),
                        n
                    )));
                }
                Some(segmentation_from_labels(topics).map_err(|e| schema(e.to_string()))?)
            }
            (None, Some(b)) => {
                Some(Segmentation::new(n, b.clone()).map_err(|e| schema(e.to_string()))?)
            }
            (None, None) => None,
        };
        let mut dialogue = Dialogue::new(
            d.id.clone(),
            d.utterances.into_iter().map(|u| (u.speaker, u.text)),
        );
        dialogue.meta = d.meta;
        dialogues.push(LabeledDialogue { dialogue, gold });
    }
    Ok(Corpus {
        name: raw.name.unwrap_or_else(|| name.to_string()),
        dialogues,
    })
}

fn is_segment_separator(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || (t.len() >= 3 && t.chars().all(|c| c == '='))
}

/// Blank lines (or `===` rules) separate segments; a line `# <id>` starts a
/// new dialogue. A file without headers is a single dialogue.
fn parse_dialseg(text: &str, name: &str) -> Corpus {
    let mut dialogues = Vec::new();
    let mut current_id: Option<String> = None;
    let mut lines: Vec<String> = Vec::new();
    let mut boundaries: Vec<usize> = Vec::new();
    let mut pending_break = false;

    let mut flush = |id: Option<String>, lines: &mut Vec<String>, boundaries: &mut Vec<usize>| {
        if lines.is_empty() {
            return;
        }
        let id = id.unwrap_or_else(|| format!("dialogue-{}", dialogues.len()));
        let n = lines.len();
        let dialogue = Dialogue::from_texts(id, lines.drain(..));
        let gold = Segmentation::new(n, std::mem::take(boundaries)).ok();
        dialogues.push(LabeledDialogue { dialogue, gold });
    };

    for line in text.lines() {
        if let Some(header) = line.trim().strip_prefix('#') {
            flush(current_id.take(), &mut lines, &mut boundaries);
            current_id = Some(header.trim().to_string());
            pending_break = false;
            continue;
        }
        if is_segment_separator(line) {
            pending_break = !lines.is_empty();
            continue;
        }
        if pending_break {
            boundaries.push(lines.len());
            pending_break = false;
        }
        lines.push(line.trim().to_string());
    }
    flush(current_id, &mut lines, &mut boundaries);
    Corpus {
        name: name.to_string(),
        dialogues,
    }
}

fn first_str<'a>(obj: &'a serde_json::Map<String, Value>, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| obj.get(*k).and_then(Value::as_str))
}

fn first_field<'a>(obj: &'a serde_json::Map<String, Value>, keys: &[&str]) -> Option<&'a Value> {
    keys.iter().find_map(|k| obj.get(*k))
}

/// Tolerant reader for released VHF dialogue dumps: accepts several common
/// key spellings and ignores anything it does not recognise.
fn parse_vhf(text: &str, name: &str) -> Result<Corpus, CorpusError> {
    let root: Value = serde_json::from_str(text).map_err(|e| json_error(text, e))?;
    let (corpus_name, items) = match &root {
        Value::Array(items) => (name.to_string(), items.clone()),
        Value::Object(obj) => {
            let items = first_field(obj, &["dialogues", "data", "conversations", "dialogs"])
                .and_then(Value::as_array)
                .cloned()
                .ok_or_else(|| CorpusError::Schema {
                    dialogue: "<root>".into(),
                    message: "no dialogue list found".into(),
                })?;
            let n = first_str(obj, &["name"]).unwrap_or(name).to_string();
            (n, items)
        }
        _ => {
            return Err(CorpusError::Schema {
                dialogue: "<root>".into(),
                message: "expected an array or object at top level".into(),
            })
        }
    };

    let mut dialogues = Vec::with_capacity(items.len());
    for (pos, item) in items.iter().enumerate() {
        let fallback_id = format!("{name}-{pos}");
        let (id, turns, dialogue_obj) = match item {
            Value::Array(turns) => (fallback_id, turns.clone(), None),
            Value::Object(obj) => {
                let id = match first_field(obj, &["id", "dialogue_id", "dialog_id", "name"]) {
                    Some(Value::String(s)) => s.clone(),
                    Some(Value::Number(n)) => n.to_string(),
                    _ => fallback_id,
                };
                let turns = first_field(
                    obj,
                    &["utterances", "turns", "dialogue", "dialog", "messages", "conversation"],
                )
                .and_then(Value::as_array)
                .cloned()
                .unwrap_or_default();
                (id, turns, Some(obj))
            }
            _ => continue,
        };
        let schema = |message: String| CorpusError::Schema {
            dialogue: id.clone(),
            message,
        };

        let mut texts = Vec::with_capacity(turns.len());
        let mut topics: Vec<Option<String>> = Vec::with_capacity(turns.len());
        for turn in &turns {
            match turn {
                Value::String(s) => {
                    texts.push((None, s.clone()));
                    topics.push(None);
                }
                Value::Object(t) => {
                    let Some(body) =
                        first_str(t, &["text", "utterance", "content", "transcript", "sentence"])
                    else {
                        continue;
                    };
                    let speaker = first_str(t, &["speaker", "role", "from", "station", "caller"])
                        .map(str::to_string);
                    let topic = first_field(t, &["topic", "topic_id", "segment", "segment_id"])
                        .map(|v| match v {
                            Value::String(s) => s.clone(),
                            other => other.to_string(),
                        });
                    texts.push((speaker, body.to_string()));
                    topics.push(topic);
                }
                _ => {}
            }
        }
        if texts.is_empty() {
            return Err(schema("dialogue has no readable utterances".into()));
        }
        let n = texts.len();

        let gold = if topics.iter().all(Option::is_some) {
            let labels: Vec<String> = topics.into_iter().flatten().collect();
            Some(segmentation_from_labels(&labels).map_err(|e| schema(e.to_string()))?)
        } else if let Some(obj) = dialogue_obj {
            if let Some(Value::Array(ts)) = obj.get("topics") {
                if ts.len() != n {
                    return Err(schema(format!(
                        "topic list has {} entries for {} utterances",
                        ts.len(),
                        n
                    )));
                }
                let labels: Vec<String> = ts.iter().map(Value::to_string).collect();
                Some(segmentation_from_labels(&labels).map_err(|e| schema(e.to_string()))?)
            } else if let Some(Value::Array(bs)) = obj.get("boundaries") {
                let bs: Vec<usize> = bs
                    .iter()
                    .filter_map(Value::as_u64)
                    .map(|b| b as usize)
                    .collect();
                Some(Segmentation::from_unsorted(n, bs).map_err(|e| schema(e.to_string()))?)
            } else {
                None
            }
        } else {
            None
        };

        dialogues.push(LabeledDialogue {
            dialogue: Dialogue::new(id.clone(), texts),
            gold,
        });
    }
    Ok(Corpus {
        name: corpus_name,
        dialogues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_examples() {
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("Star Alpha calling Port Control."),
            ["star", "alpha", "calling", "port", "control"]
        );
        assert_eq!(tokenize("OK, over."), ["ok", "over"]);
        assert_eq!(tokenize("  ... -- !"), Vec::<String>::new());
    }

    #[test]
    fn labels_to_boundaries() {
        assert_eq!(segmentation_from_labels(&[7, 7, 7]).unwrap().boundaries(), &[] as &[usize]);
        assert_eq!(segmentation_from_labels(&[0, 1, 0]).unwrap().boundaries(), &[1, 2]);
        assert_eq!(
            segmentation_from_labels(&[0, 0, 1, 1, 1, 2]).unwrap().boundaries(),
            &[2, 5]
        );
    }

    #[test]
    fn masses() {
        assert_eq!(Segmentation::new(5, vec![]).unwrap().to_masses(), [5]);
        assert_eq!(Segmentation::new(5, vec![2]).unwrap().to_masses(), [2, 3]);
        assert_eq!(Segmentation::new(6, vec![1, 4]).unwrap().to_masses(), [1, 3, 2]);
    }

    #[test]
    fn invalid_segmentations() {
        assert_eq!(Segmentation::new(0, vec![]), Err(SegmentationError::Empty));
        assert!(matches!(
            Segmentation::new(4, vec![4]),
            Err(SegmentationError::OutOfRange { boundary: 4, .. })
        ));
        assert!(Segmentation::new(4, vec![0]).is_err());
        assert!(Segmentation::new(6, vec![3, 2]).is_err());
        assert!(Segmentation::new(6, vec![2, 2]).is_err());
    }

    const NATIVE: &str = r#"{"name": "toy", "dialogues": [
        {"id": "a", "utterances": [{"speaker": "V", "text": "one"}, {"speaker": null, "text": "two"},
            {"speaker": "P", "text": "three"}, {"speaker": "P", "text": "four"}], "topics": [0,0,1,1]},
        {"id": "b", "utterances": [{"text": "x"}, {"text": "y"}, {"text": "z"}], "topics": [0,0,0]},
        {"id": "c", "utterances": [{"text": "x"}, {"text": "y"}, {"text": "z"}], "boundaries": [1]},
        {"id": "d", "utterances": [{"text": "unlabeled"}]}
    ]}"#;

    #[test]
    fn native_json() {
        let c = parse_corpus(NATIVE.as_bytes(), CorpusFormat::NativeJson, "x").unwrap();
        assert_eq!(c.name, "toy");
        assert_eq!(c.dialogues[0].gold.as_ref().unwrap().boundaries(), &[2]);
        assert_eq!(c.dialogues[1].gold.as_ref().unwrap().boundaries(), &[] as &[usize]);
        assert_eq!(c.dialogues[2].gold.as_ref().unwrap().boundaries(), &[1]);
        assert!(c.dialogues[3].gold.is_none());
        let u = &c.dialogues[0].dialogue.utterances[1];
        assert_eq!(u.index, 1);
        assert_eq!(u.speaker, None);
        assert_eq!(c.dialogues[0].dialogue.utterances[0].speaker.as_deref(), Some("V"));
        // determinism
        let again = parse_corpus(NATIVE.as_bytes(), CorpusFormat::NativeJson, "x").unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn native_json_round_trips_through_writer() {
        let c = parse_corpus(NATIVE.as_bytes(), CorpusFormat::NativeJson, "x").unwrap();
        let bytes = serde_json::to_vec(&c.to_native_json()).unwrap();
        let back = parse_corpus(&bytes, CorpusFormat::NativeJson, "x").unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn native_json_errors() {
        let bad = "{\"dialogues\": [\n  {\"id\": \"a\", ]}";
        match parse_corpus(bad.as_bytes(), CorpusFormat::NativeJson, "x") {
            Err(CorpusError::Parse { offset, .. }) => {
                assert!(offset > 15 && offset <= bad.len(), "offset {offset}")
            }
            other => panic!("unexpected {other:?}"),
        }
        let mismatch = r#"{"dialogues":[{"id":"d7","utterances":[{"text":"a"},{"text":"b"}],"topics":[0]}]}"#;
        match parse_corpus(mismatch.as_bytes(), CorpusFormat::NativeJson, "x") {
            Err(CorpusError::Schema { dialogue, .. }) => assert_eq!(dialogue, "d7"),
            other => panic!("unexpected {other:?}"),
        }
        let both = r#"{"dialogues":[{"id":"q","utterances":[{"text":"a"}],"topics":[0],"boundaries":[]}]}"#;
        assert!(matches!(
            parse_corpus(both.as_bytes(), CorpusFormat::NativeJson, "x"),
            Err(CorpusError::Schema { .. })
        ));
        assert!(matches!(
            parse_corpus(&[0xff, 0xfe], CorpusFormat::NativeJson, "x"),
            Err(CorpusError::Encoding(_))
        ));
    }

    #[test]
    fn dialseg_blocks() {
        let text = "a one\nb two\nc three\n\nd four\ne five\nf six\n";
        let c = parse_corpus(text.as_bytes(), CorpusFormat::DialsegText, "ds").unwrap();
        assert_eq!(c.dialogues.len(), 1);
        assert_eq!(c.dialogues[0].dialogue.len(), 6);
        assert_eq!(c.dialogues[0].gold.as_ref().unwrap().boundaries(), &[3]);
    }

    #[test]
    fn dialseg_multiple_dialogues_and_rules() {
        let text = "# first\nx\ny\n================\nz\n\n\n# second\np\nq\n";
        let c = parse_corpus(text.as_bytes(), CorpusFormat::DialsegText, "ds").unwrap();
        assert_eq!(c.dialogues.len(), 2);
        assert_eq!(c.dialogues[0].dialogue.id, "first");
        assert_eq!(c.dialogues[0].gold.as_ref().unwrap().boundaries(), &[2]);
        assert_eq!(c.dialogues[1].dialogue.id, "second");
        assert_eq!(c.dialogues[1].gold.as_ref().unwrap().boundaries(), &[] as &[usize]);
    }

    #[test]
    fn vhf_tolerant_reader() {
        let text = r#"[
            {"dialogue_id": 12, "extra": true, "turns": [
                {"role": "vessel", "utterance": "Port control, Star Alpha", "topic": "entry", "x": 1},
                {"role": "port", "utterance": "Star Alpha, go ahead", "topic": "entry"},
                {"role": "vessel", "utterance": "Request pilot", "topic": "pilot"}
            ]},
            {"id": "u", "utterances": ["plain one", "plain two"]}
        ]"#;
        let c = parse_corpus(text.as_bytes(), CorpusFormat::VhfJson, "vhf").unwrap();
        assert_eq!(c.dialogues.len(), 2);
        assert_eq!(c.dialogues[0].dialogue.id, "12");
        assert_eq!(c.dialogues[0].dialogue.utterances[0].speaker.as_deref(), Some("vessel"));
        assert_eq!(c.dialogues[0].gold.as_ref().unwrap().boundaries(), &[2]);
        assert!(c.dialogues[1].gold.is_none());

        let wrapped = r#"{"data": [{"id": "w", "messages": [{"content": "a"}, {"content": "b"}], "boundaries": [1]}]}"#;
        let c = parse_corpus(wrapped.as_bytes(), CorpusFormat::VhfJson, "vhf").unwrap();
        assert_eq!(c.dialogues[0].gold.as_ref().unwrap().boundaries(), &[1]);
    }

    fn arb_segmentation() -> impl Strategy<Value = Segmentation> {
        (1usize..40).prop_flat_map(|n| {
            proptest::collection::btree_set(1..n.max(2), 0..n)
                .prop_map(move |set| {
                    let b: Vec<usize> = set.into_iter().filter(|&b| b < n).collect();
                    Segmentation::new(n, b).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn labels_round_trip(seg in arb_segmentation()) {
            let labels = labels_from_segmentation(&seg);
            prop_assert_eq!(segmentation_from_labels(&labels).unwrap(), seg);
        }

        #[test]
        fn masses_partition(seg in arb_segmentation()) {
            let m = seg.to_masses();
            prop_assert_eq!(m.iter().sum::<usize>(), seg.n());
            prop_assert!(m.iter().all(|&x| x > 0));
            prop_assert_eq!(m.len(), seg.boundaries().len() + 1);
        }
    }
}
