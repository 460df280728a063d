//! Lexical-cohesion baseline over utterance blocks, and a chance-level
//! random baseline.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::dialogue::{Dialogue, Segmentation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilingParams {
    /// Utterances per block on each side of a gap.
    pub block_size: usize,
    /// Moving-average width; odd.
    pub smoothing_width: usize,
    /// Cutoff is `mean - alpha * std` of the valley depths.
    pub alpha: f64,
}

impl Default for TilingParams {
    fn default() -> Self {
        Self {
            block_size: 2,
            smoothing_width: 3,
            alpha: 0.5,
        }
    }
}

impl TilingParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.block_size == 0 {
            return Err("block size must be at least 1".into());
        }
        if self.smoothing_width == 0 || self.smoothing_width % 2 == 0 {
            return Err("smoothing width must be odd and at least 1".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err("alpha must be finite and nonnegative".into());
        }
        Ok(())
    }
}

fn block_counts<'a>(utterances: impl Iterator<Item = &'a [String]>) -> HashMap<&'a str, u64> {
    let mut counts = HashMap::new();
    for tokens in utterances {
        for t in tokens {
            *counts.entry(t.as_str()).or_insert(0u64) += 1;
        }
    }
    counts
}

/// Integer dot products keep the score independent of token order.
fn tf_cosine(a: &HashMap<&str, u64>, b: &HashMap<&str, u64>) -> f64 {
    let dot: u64 = a
        .iter()
        .filter_map(|(t, x)| b.get(t).map(|y| x * y))
        .sum();
    let na: u64 = a.values().map(|x| x * x).sum();
    let nb: u64 = b.values().map(|x| x * x).sum();
    if na == 0 || nb == 0 {
        return 0.0;
    }
    dot as f64 / ((na as f64) * (nb as f64)).sqrt()
}

/// Gap similarities for gaps `block_size..=n-block_size`.
pub fn gap_similarities(dialogue: &Dialogue, block_size: usize) -> Vec<(usize, f64)> {
    let n = dialogue.len();
    if block_size == 0 || n < 2 * block_size {
        return Vec::new();
    }
    let tokens: Vec<&[String]> = dialogue.utterances.iter().map(|u| u.tokens.as_slice()).collect();
    (block_size..=n - block_size)
        .map(|g| {
            let left = block_counts(tokens[g - block_size..g].iter().copied());
            let right = block_counts(tokens[g..g + block_size].iter().copied());
            (g, tf_cosine(&left, &right))
        })
        .collect()
}

/// Centered moving average, truncated at the ends.
pub fn smooth(values: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(values.len() - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Depth at each valley (a point strictly below at least one neighbour and
/// not above either): climb to the nearest peak on each side. Non-valleys
/// have depth 0.
pub fn depth_scores(sims: &[f64]) -> Vec<f64> {
    let n = sims.len();
    (0..n)
        .map(|i| {
            let left_ok = i == 0 || sims[i] <= sims[i - 1];
            let right_ok = i + 1 == n || sims[i] <= sims[i + 1];
            let strictly = (i > 0 && sims[i] < sims[i - 1]) || (i + 1 < n && sims[i] < sims[i + 1]);
            if !(left_ok && right_ok && strictly) {
                return 0.0;
            }
            let mut l = i;
            while l > 0 && sims[l - 1] >= sims[l] {
                l -= 1;
            }
            let mut r = i;
            while r + 1 < n && sims[r + 1] >= sims[r] {
                r += 1;
            }
            (sims[l] - sims[i]) + (sims[r] - sims[i])
        })
        .collect()
}

/// TextTiling over utterance blocks. Dialogues shorter than two blocks
/// yield a single segment.
pub fn texttile(dialogue: &Dialogue, params: &TilingParams) -> Segmentation {
    let n = dialogue.len().max(1);
    let single = Segmentation::single(n).expect("n >= 1");
    if let Err(e) = params.validate() {
        warn!(error = %e, "invalid tiling parameters; returning one segment");
        return single;
    }
    if dialogue.len() < 2 * params.block_size {
        warn!(
            id = %dialogue.id,
            len = dialogue.len(),
            block = params.block_size,
            "dialogue too short for tiling; returning one segment"
        );
        return single;
    }
    let gaps = gap_similarities(dialogue, params.block_size);
    let raw: Vec<f64> = gaps.iter().map(|&(_, s)| s).collect();
    let smoothed = smooth(&raw, params.smoothing_width);
    let depths = depth_scores(&smoothed);

    let valleys: Vec<f64> = depths.iter().copied().filter(|&d| d > 0.0).collect();
    if valleys.is_empty() {
        return single;
    }
    let mean = valleys.iter().sum::<f64>() / valleys.len() as f64;
    let var = valleys.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / valleys.len() as f64;
    let cutoff = mean - params.alpha * var.sqrt();

    let boundaries: Vec<usize> = gaps
        .iter()
        .zip(&depths)
        .filter(|&(&(g, _), &d)| d > 0.0 && d > cutoff && g > 0 && g < dialogue.len())
        .map(|(&(g, _), _)| g)
        .collect();
    Segmentation::new(dialogue.len(), boundaries).expect("gaps are in range and increasing")
}

/// Places a boundary at each gap independently with probability
/// `1 - 0.5^(1/k)`, so that any window of `k` gaps contains a boundary with
/// probability one half.
pub fn random_segmentation<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Segmentation {
    let k = k.max(1);
    let p = 1.0 - 0.5f64.powf(1.0 / k as f64);
    let boundaries = (1..n).filter(|_| rng.gen::<f64>() < p).collect();
    Segmentation::new(n.max(1), boundaries).expect("gaps are in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn d(texts: &[&str]) -> Dialogue {
        Dialogue::from_texts("t", texts.iter().copied())
    }

    #[test]
    fn flat_dialogue_has_no_boundaries() {
        let dia = d(&["roger"; 12]);
        assert!(texttile(&dia, &TilingParams::default()).boundaries().is_empty());
    }

    #[test]
    fn two_topics_split_at_the_seam() {
        let a = ["pilot boarding ladder", "ladder starboard pilot", "boarding pilot now"];
        let b = ["weather gale warning", "gale forecast tonight", "warning weather forecast"];
        let mut texts = Vec::new();
        for i in 0..10 {
            texts.push(a[i % 3]);
        }
        for i in 0..10 {
            texts.push(b[i % 3]);
        }
        let dia = d(&texts);
        // similarity bottoms out at the gap between the two topics
        let sims = gap_similarities(&dia, 2);
        let min = sims.iter().min_by(|x, y| x.1.total_cmp(&y.1)).unwrap();
        assert_eq!(min.0, 10);
        assert_eq!(min.1, 0.0);
        let seg = texttile(&dia, &TilingParams::default());
        assert!(seg.contains(10), "{:?}", seg.boundaries());
    }

    #[test]
    fn alternating_tokens_golden() {
        // every B=1 gap scores 0, so the smoothed curve is flat
        let dia = d(&["a", "b", "a", "b"]);
        let params = TilingParams {
            block_size: 1,
            ..TilingParams::default()
        };
        assert_eq!(
            gap_similarities(&dia, 1),
            vec![(1, 0.0), (2, 0.0), (3, 0.0)]
        );
        assert_eq!(texttile(&dia, &params).boundaries(), &[] as &[usize]);
    }

    #[test]
    fn too_short_is_single_segment() {
        let seg = texttile(&d(&["a", "b", "c"]), &TilingParams::default());
        assert_eq!(seg.n(), 3);
        assert!(seg.boundaries().is_empty());
    }

    #[test]
    fn smoothing_and_depth() {
        assert_eq!(smooth(&[3.0, 0.0, 3.0], 3), vec![1.5, 2.0, 1.5]);
        assert_eq!(smooth(&[1.0, 2.0], 1), vec![1.0, 2.0]);
        let depth = depth_scores(&[0.8, 0.5, 0.2, 0.6, 0.9, 0.9]);
        assert!((depth[2] - (0.6 + 0.7)).abs() < 1e-12);
        assert_eq!(depth[1], 0.0);
        assert_eq!(depth[4], 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(TilingParams { smoothing_width: 2, ..TilingParams::default() }.validate().is_err());
        assert!(TilingParams { block_size: 0, ..TilingParams::default() }.validate().is_err());
        assert!(TilingParams { alpha: -1.0, ..TilingParams::default() }.validate().is_err());
    }

    #[test]
    fn random_baseline_rate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut hits = 0;
        let trials = 4000;
        for _ in 0..trials {
            let s = random_segmentation(6, 5, &mut rng);
            if !s.boundaries().is_empty() {
                hits += 1;
            }
        }
        let rate = hits as f64 / trials as f64;
        assert!((rate - 0.5).abs() < 0.03, "{rate}");
    }

    fn arb_dialogue() -> impl Strategy<Value = Vec<Vec<u8>>> {
        proptest::collection::vec(proptest::collection::vec(0u8..6, 1..5), 4..24)
    }

    fn render(utts: &[Vec<u8>], names: &[&str]) -> Dialogue {
        Dialogue::from_texts(
            "p",
            utts.iter().map(|u| {
                u.iter().map(|&t| names[t as usize]).collect::<Vec<_>>().join(" ")
            }),
        )
    }

    const NAMES: [&str; 6] = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot"];
    const RENAMED: [&str; 6] = ["zulu", "yankee", "xray", "whiskey", "victor", "uniform"];

    proptest! {
        #[test]
        fn valid_and_deterministic(utts in arb_dialogue()) {
            let dia = render(&utts, &NAMES);
            let a = texttile(&dia, &TilingParams::default());
            prop_assert_eq!(&a, &texttile(&dia, &TilingParams::default()));
            prop_assert!(a.boundaries().iter().all(|&b| b >= 1 && b < dia.len()));
        }

        #[test]
        fn renaming_vocabulary_is_invisible(utts in arb_dialogue()) {
            let a = texttile(&render(&utts, &NAMES), &TilingParams::default());
            let b = texttile(&render(&utts, &RENAMED), &TilingParams::default());
            prop_assert_eq!(a, b);
        }

        #[test]
        fn larger_alpha_never_removes_boundaries(utts in arb_dialogue(), lo in 0.0f64..2.0, extra in 0.0f64..2.0) {
            let dia = render(&utts, &NAMES);
            let small = texttile(&dia, &TilingParams { alpha: lo, ..TilingParams::default() });
            let large = texttile(&dia, &TilingParams { alpha: lo + extra, ..TilingParams::default() });
            prop_assert!(small.boundaries().len() <= large.boundaries().len());
            prop_assert!(small.boundaries().iter().all(|b| large.contains(*b)));
        }
    }
}
