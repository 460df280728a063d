//! The full pipeline on one dialogue: handshake hints, retrieved exemplars,
//! boundary demonstrations, then segmentation.
//!
//!     cargo run --example segment_dialogue

use dash_dts::embeddings::HashedTfidfProvider;
use dash_dts::mock::MockResponder;
use dash_dts::similarity::ExemplarStore;
use dash_dts::synthetic::vhf_corpus;
use dash_dts::{Pipeline, PipelineConfig};

fn main() {
    let exemplars = vhf_corpus("store", 12, 29);
    let provider = HashedTfidfProvider::fit(exemplars.dialogues.iter().map(|d| &d.dialogue), 256);
    let store = ExemplarStore::build(&exemplars.dialogues, &provider).unwrap();

    let query = vhf_corpus("query", 1, 42);
    let query = &query.dialogues[0];
    // swap in LlmClient::new(Backend::Http(..)) to talk to a real model
    let llm = MockResponder::heuristic().client();
    let pipeline = Pipeline::new(PipelineConfig::default(), &llm, &provider, &store);

    let run = pipeline.segment(&query.dialogue).unwrap();
    println!("handshake spans: {}", run.spans.len());
    println!(
        "exemplars: {:?}",
        run.exemplars.iter().map(|r| format!("{} ({:.3})", store.get(r.index).unwrap().dialogue.id, r.score)).collect::<Vec<_>>()
    );
    println!("demonstration pairs: {}", run.samples.len());
    println!("prompt: {} chars, {} lines\n", run.prompt.len(), run.prompt.lines().count());

    for s in &run.prediction.segments {
        println!("segment {:>2}-{:<2} conf {:.2}  {}", s.start, s.end, s.confidence, s.explanation);
        for u in &query.dialogue.utterances[s.start..=s.end] {
            println!("    {}", u.text);
        }
    }
    println!("\npredicted {:?}, gold {:?}", run.prediction.segmentation.boundaries(), query.gold.as_ref().unwrap().boundaries());
    for w in &run.prediction.warnings {
        println!("warning: {w}");
    }
    let s = llm.summary();
    println!("{} model calls", s.requests);
}
