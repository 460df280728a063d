//! Dialogue-level similarity and exemplar retrieval.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::dialogue::{Dialogue, LabeledDialogue, Segmentation};
use crate::embeddings::{EmbedError, EmbeddingProvider};

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("embedding has a non-finite entry at {0}")]
    NonFinite(usize),
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("weights must be nonnegative with at least one positive entry")]
    InvalidWeights,
    #[error("dialogue has no utterances")]
    EmptyDialogue,
    #[error("exemplar `{id}` has {got} embeddings for {expected} utterances")]
    EmbeddingCount { id: String, expected: usize, got: usize },
    #[error("exemplar `{0}` has no gold segmentation")]
    UnlabeledExemplar(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, SimilarityError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SimilarityError::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self(self.0.iter().map(|v| v * alpha).collect())
    }
}

/// Cosine similarity, clamped to `[-1, 1]`. A zero vector scores 0.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, SimilarityError> {
    if u.dim() != v.dim() {
        return Err(SimilarityError::DimMismatch(u.dim(), v.dim()));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        warn!("cosine with a zero vector; scoring 0");
        return Ok(0.0);
    }
    let dot: f64 = u.values().iter().zip(v.values()).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Mean cosine over every (query utterance, exemplar utterance) pair.
pub fn mean_similarity(
    query: &[EmbeddingVector],
    exemplar: &[EmbeddingVector],
) -> Result<f64, SimilarityError> {
    if query.is_empty() || exemplar.is_empty() {
        return Err(SimilarityError::EmptyDialogue);
    }
    let mut total = 0.0;
    for q in query {
        for e in exemplar {
            total += cosine(q, e)?;
        }
    }
    Ok(total / (query.len() * exemplar.len()) as f64)
}

/// Weighted mean over query utterances of each utterance's mean cosine to
/// the exemplar.
pub fn weighted_similarity(
    query: &[EmbeddingVector],
    exemplar: &[EmbeddingVector],
    weights: &[f64],
) -> Result<f64, SimilarityError> {
    if query.is_empty() || exemplar.is_empty() {
        return Err(SimilarityError::EmptyDialogue);
    }
    if weights.len() != query.len() {
        return Err(SimilarityError::WeightCount {
            expected: query.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || !weights.iter().any(|w| *w > 0.0) {
        return Err(SimilarityError::InvalidWeights);
    }
    let mut total = 0.0;
    for (q, w) in query.iter().zip(weights) {
        let mut row = 0.0;
        for e in exemplar {
            row += cosine(q, e)?;
        }
        total += w * row / exemplar.len() as f64;
    }
    Ok(total / weights.iter().sum::<f64>())
}

pub fn embed_dialogue(
    dialogue: &Dialogue,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<EmbeddingVector>, SimilarityError> {
    let texts: Vec<&str> = dialogue.utterances.iter().map(|u| u.text.as_str()).collect();
    Ok(provider.embed_batch(&texts)?)
}

pub fn dialogue_similarity_mean(
    query: &Dialogue,
    exemplar: &Dialogue,
    provider: &dyn EmbeddingProvider,
) -> Result<f64, SimilarityError> {
    mean_similarity(
        &embed_dialogue(query, provider)?,
        &embed_dialogue(exemplar, provider)?,
    )
}

pub fn dialogue_similarity_weighted(
    query: &Dialogue,
    exemplar: &Dialogue,
    provider: &dyn EmbeddingProvider,
    weights: &[f64],
) -> Result<f64, SimilarityError> {
    weighted_similarity(
        &embed_dialogue(query, provider)?,
        &embed_dialogue(exemplar, provider)?,
        weights,
    )
}

#[derive(Debug, Clone)]
pub struct Exemplar {
    pub dialogue: Dialogue,
    pub gold: Segmentation,
    pub embeddings: Vec<EmbeddingVector>,
}

/// Gold-labeled exemplar dialogues with cached utterance embeddings.
#[derive(Debug, Clone)]
pub struct ExemplarStore {
    provider: String,
    dim: usize,
    exemplars: Vec<Exemplar>,
}

impl ExemplarStore {
    pub fn build(
        dialogues: &[LabeledDialogue],
        provider: &dyn EmbeddingProvider,
    ) -> Result<Self, SimilarityError> {
        let mut exemplars = Vec::with_capacity(dialogues.len());
        for ld in dialogues {
            let gold = ld
                .gold
                .clone()
                .ok_or_else(|| SimilarityError::UnlabeledExemplar(ld.dialogue.id.clone()))?;
            let embeddings = embed_dialogue(&ld.dialogue, provider)?;
            if let Some(bad) = embeddings.iter().find(|e| e.dim() != provider.dim()) {
                return Err(SimilarityError::DimMismatch(bad.dim(), provider.dim()));
            }
            exemplars.push(Exemplar {
                dialogue: ld.dialogue.clone(),
                gold,
                embeddings,
            });
        }
        Ok(Self {
            provider: provider.name().to_string(),
            dim: provider.dim(),
            exemplars,
        })
    }

    /// Assembles a store from precomputed embeddings, e.g. loaded from disk.
    pub fn from_exemplars(
        provider: impl Into<String>,
        dim: usize,
        exemplars: Vec<Exemplar>,
    ) -> Result<Self, SimilarityError> {
        for ex in &exemplars {
            if ex.embeddings.len() != ex.dialogue.len() {
                return Err(SimilarityError::EmbeddingCount {
                    id: ex.dialogue.id.clone(),
                    expected: ex.dialogue.len(),
                    got: ex.embeddings.len(),
                });
            }
            if let Some(bad) = ex.embeddings.iter().find(|e| e.dim() != dim) {
                return Err(SimilarityError::DimMismatch(bad.dim(), dim));
            }
        }
        Ok(Self {
            provider: provider.into(),
            dim,
            exemplars,
        })
    }

    pub fn empty(provider: &dyn EmbeddingProvider) -> Self {
        Self {
            provider: provider.name().to_string(),
            dim: provider.dim(),
            exemplars: Vec::new(),
        }
    }

    pub fn provider(&self) -> &str {
        &self.provider
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Exemplar> {
        self.exemplars.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Exemplar> {
        self.exemplars.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedExemplar {
    /// Position in the store.
    pub index: usize,
    pub score: f64,
}

/// Sorts `(index, score)` pairs by descending score; ties keep input order.
pub fn rank_scores(scores: &[f64]) -> Vec<RankedExemplar> {
    let mut ranked: Vec<RankedExemplar> = scores
        .iter()
        .enumerate()
        .map(|(index, &score)| RankedExemplar { index, score })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    ranked
}

/// Top-`m` exemplars by dialogue similarity to the query embeddings.
/// With `weights`, each query utterance's contribution is weighted.
pub fn select_exemplars(
    query: &[EmbeddingVector],
    store: &ExemplarStore,
    m: usize,
    weights: Option<&[f64]>,
) -> Result<Vec<RankedExemplar>, SimilarityError> {
    if store.is_empty() || m == 0 {
        return Ok(Vec::new());
    }
    let scores = store
        .iter()
        .map(|ex| match weights {
            Some(w) => weighted_similarity(query, &ex.embeddings, w),
            None => mean_similarity(query, &ex.embeddings),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut ranked = rank_scores(&scores);
    ranked.truncate(m);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine(&v(&[1.0, 0.0]), &v(&[1.0, 1.0])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-5);
        assert_eq!(cosine(&v(&[0.0, 0.0]), &v(&[1.0, 1.0])).unwrap(), 0.0);
        assert_eq!(
            cosine(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(SimilarityError::DimMismatch(1, 2))
        );
        assert_eq!(
            EmbeddingVector::new(vec![0.0, f64::NAN]),
            Err(SimilarityError::NonFinite(1))
        );
    }

    #[test]
    fn dialogue_level_examples() {
        let q = [v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        let e = [v(&[1.0, 0.0])];
        assert_eq!(mean_similarity(&q[..1], &e).unwrap(), 1.0);
        assert!((mean_similarity(&q, &e).unwrap() - 0.5).abs() < 1e-12);
        assert!((weighted_similarity(&q, &e, &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(weighted_similarity(&q, &e, &[0.0, 1.0]).unwrap().abs() < 1e-12);
        assert!((weighted_similarity(&q, &e, &[1.0, 1.0]).unwrap() - 0.5).abs() < 1e-12);
        let same = [v(&[1.0, 0.0]), v(&[1.0, 0.0])];
        assert_eq!(mean_similarity(&same, &same).unwrap(), 1.0);
    }

    #[test]
    fn weight_errors() {
        let q = [v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        let e = [v(&[1.0, 0.0])];
        assert_eq!(
            weighted_similarity(&q, &e, &[0.0, 0.0]),
            Err(SimilarityError::InvalidWeights)
        );
        assert_eq!(
            weighted_similarity(&q, &e, &[1.0, -1.0]),
            Err(SimilarityError::InvalidWeights)
        );
        assert_eq!(
            weighted_similarity(&q, &e, &[1.0]),
            Err(SimilarityError::WeightCount { expected: 2, got: 1 })
        );
        assert_eq!(mean_similarity(&[], &e), Err(SimilarityError::EmptyDialogue));
    }

    #[test]
    fn ranking_is_stable() {
        let ranked = rank_scores(&[0.5, 0.9, 0.5, 0.9]);
        let order: Vec<usize> = ranked.iter().map(|r| r.index).collect();
        assert_eq!(order, [1, 3, 0, 2]);
        let ranked = rank_scores(&[0.9, 0.5]);
        assert_eq!(ranked[0].index, 0);
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in proptest::collection::vec(-10.0f64..10.0, 8),
            b in proptest::collection::vec(-10.0f64..10.0, 8),
            alpha in 0.01f64..100.0,
        ) {
            let (a, b) = (v(&a), v(&b));
            let ab = cosine(&a, &b).unwrap();
            prop_assert_eq!(ab, cosine(&b, &a).unwrap());
            prop_assert!((-1.0..=1.0).contains(&ab));
            prop_assert!((cosine(&a.scaled(alpha), &b).unwrap() - ab).abs() < 1e-12);
        }

        #[test]
        fn ranking_invariant_under_monotone_transform(
            scores in proptest::collection::vec(-1.0f64..1.0, 1..30),
        ) {
            let base: Vec<usize> = rank_scores(&scores).iter().map(|r| r.index).collect();
            let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + 7.0).collect();
            let other: Vec<usize> = rank_scores(&transformed).iter().map(|r| r.index).collect();
            prop_assert_eq!(base, other);
        }
    }
}
