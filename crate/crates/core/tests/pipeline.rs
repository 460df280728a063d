//! Pipeline behaviour observed through the backend access log.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use dash_dts::dialogue::Corpus;
use dash_dts::embeddings::HashedTfidfProvider;
use dash_dts::llm::{LlmClient, Stage};
use dash_dts::mock::MockResponder;
use dash_dts::segmenter::{Pipeline, PipelineConfig, PipelineError};
use dash_dts::similarity::ExemplarStore;
use dash_dts::synthetic::vhf_corpus;

fn setup() -> (Corpus, ExemplarStore, HashedTfidfProvider) {
    let queries = vhf_corpus("q", 6, 3);
    let exemplars = vhf_corpus("s", 8, 4);
    let provider = HashedTfidfProvider::fit(exemplars.dialogues.iter().map(|d| &d.dialogue), 64);
    let store = ExemplarStore::build(&exemplars.dialogues, &provider).unwrap();
    (queries, store, provider)
}

fn stages(llm: &LlmClient) -> BTreeSet<Stage> {
    llm.access_log().iter().map(|r| r.stage).collect()
}

#[test]
fn disabled_components_make_no_calls() {
    let (queries, store, provider) = setup();
    let q = &queries.dialogues[0].dialogue;
    let cases = [
        ((true, true, true), vec![Stage::Handshake, Stage::Analysis, Stage::Synthesis, Stage::Segmentation]),
        ((false, true, true), vec![Stage::Analysis, Stage::Synthesis, Stage::Segmentation]),
        ((true, true, false), vec![Stage::Handshake, Stage::Segmentation]),
        ((false, false, false), vec![Stage::Segmentation]),
    ];
    for ((h, s, g), expected) in cases {
        let llm = MockResponder::oracle(&queries).client();
        let cfg = PipelineConfig::default().with_components(h, s, g);
        let run = Pipeline::new(cfg, &llm, &provider, &store).segment(q).unwrap();
        assert_eq!(stages(&llm), expected.into_iter().collect(), "{h} {s} {g}");
        assert_eq!(run.spans.is_empty(), !h);
        assert_eq!(run.samples.is_empty(), !g);
        assert_eq!(run.prediction.segmentation, *queries.dialogues[0].gold.as_ref().unwrap());
        assert_eq!(run.prompt.contains("HANDSHAKE HINTS"), h);
        assert_eq!(run.prompt.contains("BOUNDARY DEMONSTRATIONS"), g);
        assert_eq!(run.prompt.contains("(similarity "), s);
    }
}

#[test]
fn similarity_off_takes_store_order() {
    let (queries, store, provider) = setup();
    let llm = MockResponder::heuristic().client();
    let cfg = PipelineConfig::default().with_components(false, false, false);
    let run = Pipeline::new(cfg, &llm, &provider, &store).segment(&queries.dialogues[1].dialogue).unwrap();
    let order: Vec<usize> = run.exemplars.iter().map(|r| r.index).collect();
    assert_eq!(order, [0, 1, 2]);
}

#[test]
fn bad_segmentation_reply_is_repaired_once() {
    let (queries, store, provider) = setup();
    let calls = Arc::new(AtomicUsize::new(0));
    let seen = Arc::clone(&calls);
    let mock = MockResponder::oracle(&queries);
    let llm = LlmClient::scripted(move |req| {
        if Stage::detect(req) == Stage::Segmentation && seen.fetch_add(1, Ordering::SeqCst) == 0 {
            return Ok("I think there are two topics.".into());
        }
        mock.respond(req)
    });
    let cfg = PipelineConfig::default().with_components(false, true, false);
    let q = &queries.dialogues[2].dialogue;
    let run = Pipeline::new(cfg, &llm, &provider, &store).segment(q).unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), 2);
    assert_eq!(run.prediction.segmentation, *queries.dialogues[2].gold.as_ref().unwrap());
    let digests: Vec<String> = llm.access_log().iter().map(|r| r.digest.clone()).collect();
    assert_ne!(digests[0], digests[1], "repair turn must change the request");
}

#[test]
fn stage_failures_name_the_stage() {
    let (queries, store, provider) = setup();
    let q = &queries.dialogues[0].dialogue;
    let broken = |stage: Stage| {
        let mock = MockResponder::oracle(&queries);
        LlmClient::scripted(move |req| {
            if Stage::detect(req) == stage {
                Ok("nothing useful".into())
            } else {
                mock.respond(req)
            }
        })
    };
    for (stage, name) in [(Stage::Handshake, "handshake"), (Stage::Analysis, "samplegen"), (Stage::Segmentation, "segmentation")] {
        let llm = broken(stage);
        let err = Pipeline::new(PipelineConfig::default(), &llm, &provider, &store).segment(q).unwrap_err();
        assert_eq!(err.stage(), name);
        assert!(err.to_string().contains(&format!("stage `{name}`")), "{err}");
        assert!(!err.is_upstream());
    }
    let down = LlmClient::scripted(|_| Err("connection refused".into()));
    let err = Pipeline::new(PipelineConfig::default(), &down, &provider, &store).segment(q).unwrap_err();
    assert!(matches!(err, PipelineError::Handshake(_)) && err.is_upstream(), "{err}");
}

#[test]
fn parallel_runs_match_sequential() {
    let (queries, store, provider) = setup();
    let dialogues: Vec<_> = queries.dialogues.iter().map(|d| &d.dialogue).collect();
    let llm = MockResponder::heuristic().client();
    let pipeline = Pipeline::new(PipelineConfig::default(), &llm, &provider, &store);
    let one: Vec<_> = pipeline.segment_all(&dialogues, 1).into_iter().map(|r| r.unwrap().prediction).collect();
    let many: Vec<_> = pipeline.segment_all(&dialogues, 4).into_iter().map(|r| r.unwrap().prediction).collect();
    assert_eq!(one, many);
}

#[test]
fn replay_of_a_recorded_run_is_identical() {
    let (queries, store, provider) = setup();
    let dir = tempfile::tempdir().unwrap();
    let q = &queries.dialogues[3].dialogue;
    let live = MockResponder::heuristic().client().recording(dir.path());
    let first = Pipeline::new(PipelineConfig::default(), &live, &provider, &store).segment(q).unwrap();
    let replay = LlmClient::new(dash_dts::llm::Backend::replay(dir.path(), true));
    let second = Pipeline::new(PipelineConfig::default(), &replay, &provider, &store).segment(q).unwrap();
    assert_eq!(first.prediction, second.prediction);
    assert_eq!(first.prompt, second.prompt);
    let s = replay.summary();
    assert_eq!((s.fixture_misses, s.network_calls), (0, 0));
    assert_eq!(s.fixture_hits, live.summary().requests);
}
