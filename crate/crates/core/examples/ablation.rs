//! Component ablation over a small corpus. The scripted model places
//! boundaries from the handshake hints in its prompt, so rows that drop the
//! handshake stage fall back to a cruder keyword rule.
//!
//!     cargo run --example ablation

use dash_dts::embeddings::HashedTfidfProvider;
use dash_dts::metrics::render_table;
use dash_dts::mock::MockResponder;
use dash_dts::segmenter::{render_ablation_table, run_ablation};
use dash_dts::similarity::ExemplarStore;
use dash_dts::synthetic::vhf_corpus;
use dash_dts::PipelineConfig;

fn main() {
    let queries = vhf_corpus("queries", 16, 101);
    let exemplars = vhf_corpus("store", 12, 202);
    let provider = HashedTfidfProvider::fit(exemplars.dialogues.iter().map(|d| &d.dialogue), 256);
    let store = ExemplarStore::build(&exemplars.dialogues, &provider).unwrap();

    let llm = MockResponder::heuristic().client();
    let rows = run_ablation(&queries, &store, &llm, &provider, &PipelineConfig::default(), 4, None).unwrap();
    print!("{}", render_ablation_table(&rows));
    println!();
    println!("{}", render_table(&rows.iter().map(|r| &r.report).collect::<Vec<_>>()));
    println!("{} model calls in total", llm.summary().requests);
}
