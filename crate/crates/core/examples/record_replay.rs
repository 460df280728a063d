//! Recording model traffic once and replaying it offline. Fixtures are keyed
//! by a digest of the canonical request, so a changed prompt is a miss.
//!
//!     cargo run --example record_replay

use dash_dts::embeddings::HashedTfidfProvider;
use dash_dts::llm::{canonical_digest, Backend, ChatRequest, LlmClient, Message, Stage};
use dash_dts::mock::MockResponder;
use dash_dts::similarity::ExemplarStore;
use dash_dts::synthetic::vhf_corpus;
use dash_dts::{Pipeline, PipelineConfig};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let exemplars = vhf_corpus("store", 6, 1);
    let provider = HashedTfidfProvider::fit(exemplars.dialogues.iter().map(|d| &d.dialogue), 128);
    let store = ExemplarStore::build(&exemplars.dialogues, &provider).unwrap();
    let query = &vhf_corpus("query", 1, 2).dialogues[0].dialogue;

    let live = MockResponder::heuristic().client().recording(dir.path());
    let first = Pipeline::new(PipelineConfig::default(), &live, &provider, &store).segment(query).unwrap();
    println!("recorded {} fixtures into {}", live.summary().requests, dir.path().display());

    let replay = LlmClient::new(Backend::replay(dir.path(), true));
    let second = Pipeline::new(PipelineConfig::default(), &replay, &provider, &store).segment(query).unwrap();
    assert_eq!(first.prediction, second.prediction);
    let s = replay.summary();
    println!("replayed: {} hits, {} misses, {} network calls", s.fixture_hits, s.fixture_misses, s.network_calls);
    for r in replay.access_log() {
        println!("  {:<13} {:?} {}", format!("{:?}", r.stage), r.outcome, &r.digest[..16]);
    }

    let novel = ChatRequest::new("gpt-4o-mini", vec![Message::system("task: topic-segmentation"), Message::user("unseen")]);
    println!("\nunseen request {} ...", &canonical_digest(&novel)[..16]);
    match replay.complete(Stage::Segmentation, &novel) {
        Ok(_) => println!("unexpected hit"),
        Err(e) => println!("strict replay refuses it: {e}"),
    }
}
