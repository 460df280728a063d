//! Dialogue topic segmentation for maritime radio traffic, with an
//! evaluation harness.

pub mod cli;
pub mod dialogue;
pub mod embeddings;
pub mod handshake;
pub mod jsonx;
pub mod llm;
pub mod metrics;
pub mod mock;
pub mod samplegen;
pub mod segmenter;
pub mod similarity;
pub mod synthetic;
pub mod texttiling;

pub use dialogue::{Corpus, CorpusFormat, Dialogue, LabeledDialogue, Segmentation, Utterance};
pub use metrics::{default_k, pk, window_diff, EvalReport};
pub use segmenter::{Pipeline, PipelineConfig, SegmentPrediction};
