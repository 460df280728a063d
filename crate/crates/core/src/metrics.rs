//! Pk and WindowDiff over gap-index segmentations, plus corpus reports.
//!
//! Windows are indexed by a 0-based start `s` in `0..N-k`. A window contains
//! gap `b` when `s < b <= s + k`, which gives exactly `N - k` windows and
//! lets every gap `1..N-1` fall into at least one window.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::Segmentation;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("reference has {reference} utterances but hypothesis has {hypothesis}")]
    LengthMismatch { reference: usize, hypothesis: usize },
    #[error("need at least 2 utterances, got {0}")]
    TooShort(usize),
    #[error("window size {k} invalid for {n} utterances (need 1 <= k <= {max})", max = n - 1)]
    InvalidK { k: usize, n: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("no prediction for dialogues: {}", .0.join(", "))]
    MissingPredictions(Vec<String>),
    #[error("predictions for unknown dialogues: {}", .0.join(", "))]
    UnknownPredictions(Vec<String>),
    #[error("length mismatch for dialogues: {}", .0.join(", "))]
    LengthMismatch(Vec<String>),
    #[error("metric error in dialogue `{id}`: {source}")]
    Metric {
        id: String,
        #[source]
        source: MetricError,
    },
}

/// Half the mean reference segment length, floored at 1.
pub fn default_k(reference: &Segmentation) -> usize {
    let segments = reference.boundaries().len() + 1;
    let k = (reference.n() as f64 / (2.0 * segments as f64)).round() as usize;
    k.max(1)
}

fn check(
    reference: &Segmentation,
    hypothesis: &Segmentation,
    k: Option<usize>,
) -> Result<usize, MetricError> {
    let n = reference.n();
    if hypothesis.n() != n {
        return Err(MetricError::LengthMismatch {
            reference: n,
            hypothesis: hypothesis.n(),
        });
    }
    if n < 2 {
        return Err(MetricError::TooShort(n));
    }
    let k = k.unwrap_or_else(|| default_k(reference));
    if k == 0 || k >= n {
        return Err(MetricError::InvalidK { k, n });
    }
    Ok(k)
}

/// `prefix[g]` = number of boundaries with gap index `<= g`.
fn boundary_prefix(seg: &Segmentation) -> Vec<usize> {
    let mut prefix = vec![0usize; seg.n()];
    for &b in seg.boundaries() {
        prefix[b] += 1;
    }
    for g in 1..prefix.len() {
        prefix[g] += prefix[g - 1];
    }
    prefix
}

fn window_counts(seg: &Segmentation, k: usize) -> impl Iterator<Item = usize> + '_ {
    let prefix = boundary_prefix(seg);
    (0..seg.n() - k).map(move |s| prefix[s + k] - prefix[s])
}

pub fn pk(
    reference: &Segmentation,
    hypothesis: &Segmentation,
    k: Option<usize>,
) -> Result<f64, MetricError> {
    let k = check(reference, hypothesis, k)?;
    let errors = window_counts(reference, k)
        .zip(window_counts(hypothesis, k))
        .filter(|&(r, h)| (r > 0) != (h > 0))
        .count();
    Ok(errors as f64 / (reference.n() - k) as f64)
}

pub fn window_diff(
    reference: &Segmentation,
    hypothesis: &Segmentation,
    k: Option<usize>,
) -> Result<f64, MetricError> {
    let k = check(reference, hypothesis, k)?;
    let errors = window_counts(reference, k)
        .zip(window_counts(hypothesis, k))
        .filter(|&(r, h)| r != h)
        .count();
    Ok(errors as f64 / (reference.n() - k) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueScore {
    pub id: String,
    pub n: usize,
    pub k: usize,
    pub pk: f64,
    pub wd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub corpus: String,
    pub model: String,
    pub n_dialogues: usize,
    pub mean_pk: f64,
    pub mean_wd: f64,
    pub k_values: Vec<usize>,
    pub dialogues: Vec<DialogueScore>,
}

/// Formats a fraction as a percentage with one decimal.
pub fn percent(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

/// Scores every gold dialogue against its prediction (matched by id) and
/// macro-averages. `k` overrides the per-dialogue default window size.
pub fn evaluate_corpus(
    corpus: &str,
    model: &str,
    predictions: &[(String, Segmentation)],
    golds: &[(String, Segmentation)],
    k: Option<usize>,
) -> Result<EvalReport, EvalError> {
    let by_id: BTreeMap<&str, &Segmentation> =
        predictions.iter().map(|(id, s)| (id.as_str(), s)).collect();
    let gold_ids: BTreeSet<&str> = golds.iter().map(|(id, _)| id.as_str()).collect();

    let missing: Vec<String> = golds
        .iter()
        .filter(|(id, _)| !by_id.contains_key(id.as_str()))
        .map(|(id, _)| id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingPredictions(missing));
    }
    let unknown: Vec<String> = by_id
        .keys()
        .filter(|id| !gold_ids.contains(*id))
        .map(|id| id.to_string())
        .collect();
    if !unknown.is_empty() {
        return Err(EvalError::UnknownPredictions(unknown));
    }
    let mismatched: Vec<String> = golds
        .iter()
        .filter(|(id, g)| by_id[id.as_str()].n() != g.n())
        .map(|(id, _)| id.clone())
        .collect();
    if !mismatched.is_empty() {
        return Err(EvalError::LengthMismatch(mismatched));
    }

    let mut dialogues = Vec::with_capacity(golds.len());
    for (id, gold) in golds {
        let hyp = by_id[id.as_str()];
        let dk = k.unwrap_or_else(|| default_k(gold));
        let metric = |source| EvalError::Metric {
            id: id.clone(),
            source,
        };
        dialogues.push(DialogueScore {
            id: id.clone(),
            n: gold.n(),
            k: dk,
            pk: pk(gold, hyp, Some(dk)).map_err(metric)?,
            wd: window_diff(gold, hyp, Some(dk)).map_err(metric)?,
        });
    }
    let count = dialogues.len();
    let mean = |f: fn(&DialogueScore) -> f64| {
        if count == 0 {
            0.0
        } else {
            dialogues.iter().map(f).sum::<f64>() / count as f64
        }
    };
    Ok(EvalReport {
        corpus: corpus.to_string(),
        model: model.to_string(),
        n_dialogues: count,
        mean_pk: mean(|d| d.pk),
        mean_wd: mean(|d| d.wd),
        k_values: dialogues.iter().map(|d| d.k).collect(),
        dialogues,
    })
}

/// Model rows against per-corpus `Pk`/`Wd` column pairs, values in percent.
pub fn render_table(reports: &[&EvalReport]) -> String {
    let mut corpora: Vec<&str> = Vec::new();
    let mut models: Vec<&str> = Vec::new();
    for r in reports {
        if !corpora.contains(&r.corpus.as_str()) {
            corpora.push(&r.corpus);
        }
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let model_width = models.iter().map(|m| m.len()).max().unwrap_or(0).max(5);
    let col_width = corpora.iter().map(|c| c.len()).max().unwrap_or(0).max(13);
    let cell = (col_width - 1) / 2;

    let mut out = String::new();
    let _ = write!(out, "{:<model_width$}", "Model");
    for c in &corpora {
        let _ = write!(out, " | {c:^col_width$}");
    }
    out.push('\n');
    let _ = write!(out, "{:<model_width$}", "");
    for _ in &corpora {
        let _ = write!(out, " | {:>cell$} {:>w$}", "Pk", "Wd", w = col_width - cell - 1);
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "{}",
        "-".repeat(model_width + corpora.len() * (col_width + 3))
    );
    for m in &models {
        let _ = write!(out, "{m:<model_width$}");
        for c in &corpora {
            match reports.iter().find(|r| r.model == *m && r.corpus == *c) {
                Some(r) => {
                    let _ = write!(
                        out,
                        " | {:>cell$} {:>w$}",
                        percent(r.mean_pk),
                        percent(r.mean_wd),
                        w = col_width - cell - 1
                    );
                }
                None => {
                    let _ = write!(out, " | {:>cell$} {:>w$}", "--", "--", w = col_width - cell - 1);
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Per-dialogue CSV with a trailing macro-average row.
pub fn render_csv(report: &EvalReport) -> String {
    let mut out = String::from("id,n,k,pk,wd\n");
    for d in &report.dialogues {
        let _ = writeln!(out, "{},{},{},{:.6},{:.6}", csv_field(&d.id), d.n, d.k, d.pk, d.wd);
    }
    let _ = writeln!(out, "MEAN,,,{:.6},{:.6}", report.mean_pk, report.mean_wd);
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(n: usize, b: &[usize]) -> Segmentation {
        Segmentation::new(n, b.to_vec()).unwrap()
    }

    #[test]
    fn identical_is_zero() {
        let r = seg(10, &[3, 7]);
        assert_eq!(pk(&r, &r, None).unwrap(), 0.0);
        assert_eq!(window_diff(&r, &r, None).unwrap(), 0.0);
    }

    #[test]
    fn all_gaps_vs_none() {
        let r = seg(6, &[]);
        let h = seg(6, &[1, 2, 3, 4, 5]);
        assert_eq!(pk(&r, &h, Some(2)).unwrap(), 1.0);
        assert_eq!(window_diff(&r, &h, Some(2)).unwrap(), 1.0);
    }

    // Values frozen from the exhaustive label-comparison scan in
    // tests/metrics_oracle.rs.
    #[test]
    fn shifted_boundary_n10() {
        let r = seg(10, &[5]);
        let h = seg(10, &[6]);
        assert_eq!(default_k(&r), 3);
        assert!((pk(&r, &h, None).unwrap() - 2.0 / 7.0).abs() < 1e-12);
        assert!((window_diff(&r, &h, None).unwrap() - 2.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn missed_boundary_n10() {
        let r = seg(10, &[3, 7]);
        let h = seg(10, &[3]);
        assert_eq!(default_k(&r), 2);
        assert!((window_diff(&r, &h, None).unwrap() - 2.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn default_k_examples() {
        assert_eq!(default_k(&seg(10, &[])), 5);
        assert_eq!(default_k(&seg(10, &[5])), 3);
        assert_eq!(default_k(&seg(4, &[1, 2, 3])), 1);
    }

    #[test]
    fn errors() {
        let one = seg(1, &[]);
        assert_eq!(pk(&one, &one, None), Err(MetricError::TooShort(1)));
        let r = seg(5, &[]);
        assert_eq!(pk(&r, &r, Some(5)), Err(MetricError::InvalidK { k: 5, n: 5 }));
        assert_eq!(window_diff(&r, &r, Some(0)), Err(MetricError::InvalidK { k: 0, n: 5 }));
        assert!(matches!(
            pk(&r, &seg(6, &[]), None),
            Err(MetricError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn corpus_report() {
        let gold = vec![("a".to_string(), seg(6, &[3])), ("b".to_string(), seg(6, &[3]))];
        let report = evaluate_corpus("c", "m", &gold, &gold, None).unwrap();
        assert_eq!(report.mean_pk, 0.0);
        assert_eq!(percent(report.mean_wd), "0.0");

        let single = evaluate_corpus("c", "m", &[("a".into(), seg(6, &[]))], &gold[..1], None)
            .unwrap();
        assert_eq!(single.mean_pk, single.dialogues[0].pk);
        assert_eq!(single.mean_wd, single.dialogues[0].wd);
    }

    #[test]
    fn macro_mean_renders_percent() {
        // N=10, k=5: hyp {1} vs ref {} disagrees in 1 of 5 windows (0.2);
        // hyp {1,2} disagrees in 2 of 5 (0.4).
        let golds = vec![("x".to_string(), seg(10, &[])), ("y".to_string(), seg(10, &[]))];
        let preds = vec![("x".to_string(), seg(10, &[1])), ("y".to_string(), seg(10, &[1, 2]))];
        let report = evaluate_corpus("c", "m", &preds, &golds, None).unwrap();
        assert!((report.dialogues[0].pk - 0.2).abs() < 1e-12);
        assert!((report.dialogues[1].pk - 0.4).abs() < 1e-12);
        assert!((report.mean_pk - 0.3).abs() < 1e-12);
        assert_eq!(percent(report.mean_pk), "30.0");
    }

    #[test]
    fn corpus_errors_list_ids() {
        let golds = vec![("a".to_string(), seg(4, &[])), ("b".to_string(), seg(4, &[]))];
        let err = evaluate_corpus("c", "m", &golds[..1], &golds, None).unwrap_err();
        assert_eq!(err, EvalError::MissingPredictions(vec!["b".into()]));
        let preds = vec![("a".to_string(), seg(5, &[])), ("b".to_string(), seg(4, &[]))];
        let err = evaluate_corpus("c", "m", &preds, &golds, None).unwrap_err();
        assert_eq!(err, EvalError::LengthMismatch(vec!["a".into()]));
        let preds = vec![
            ("a".to_string(), seg(4, &[])),
            ("b".to_string(), seg(4, &[])),
            ("z".to_string(), seg(4, &[])),
        ];
        let err = evaluate_corpus("c", "m", &preds, &golds, None).unwrap_err();
        assert!(err.to_string().contains('z'));
    }

    #[test]
    fn table_and_csv() {
        let golds = vec![("a".to_string(), seg(6, &[3]))];
        let mut r = evaluate_corpus("VHF-Dial", "ours", &golds, &golds, None).unwrap();
        let table = render_table(&[&r]);
        assert!(table.contains("VHF-Dial"));
        assert!(table.lines().last().unwrap().starts_with("ours"));
        assert!(table.contains("0.0"));
        r.dialogues[0].id = "a,b".into();
        let csv = render_csv(&r);
        assert!(csv.starts_with("id,n,k,pk,wd\n\"a,b\",6,"));
        assert!(csv.ends_with("MEAN,,,0.000000,0.000000\n"));
    }
}
