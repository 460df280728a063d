//! Embedding dialogues and retrieving the most similar labeled exemplars.
//!
//!     cargo run --example exemplar_retrieval

use dash_dts::embeddings::{EmbeddingProvider, HashedTfidfProvider};
use dash_dts::handshake::utterance_weights;
use dash_dts::handshake::HandshakeSpan;
use dash_dts::similarity::{embed_dialogue, select_exemplars, ExemplarStore};
use dash_dts::synthetic::vhf_corpus;

fn main() {
    let store_corpus = vhf_corpus("store", 12, 29);
    let provider = HashedTfidfProvider::fit(store_corpus.dialogues.iter().map(|d| &d.dialogue), 256);
    let store = ExemplarStore::build(&store_corpus.dialogues, &provider).unwrap();
    println!("store: {} exemplars, provider {}, dim {}", store.len(), store.provider(), store.dim());

    let query = &vhf_corpus("query", 1, 7).dialogues[0].dialogue;
    println!("query {}: {} utterances, first is {:?}", query.id, query.len(), query.utterances[0].text);
    let embedded = embed_dialogue(query, &provider as &dyn EmbeddingProvider).unwrap();

    println!("\nmean similarity, top 3:");
    for r in select_exemplars(&embedded, &store, 3, None).unwrap() {
        let ex = store.get(r.index).unwrap();
        println!("  {:<12} {:.4}", ex.dialogue.id, r.score);
    }

    // handshake utterances count double when weighting is on
    let spans = vec![HandshakeSpan { utterance: 0, start: 0, end: 2, trust: 0.9, reasoning: "call-up".into() }];
    let weights = utterance_weights(&spans, query.len(), 2.0);
    println!("\nweighted similarity, top 3:");
    for r in select_exemplars(&embedded, &store, 3, Some(&weights)).unwrap() {
        let ex = store.get(r.index).unwrap();
        println!("  {:<12} {:.4}", ex.dialogue.id, r.score);
    }
}
