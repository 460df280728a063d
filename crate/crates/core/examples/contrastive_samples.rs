//! Context windows around gold boundaries and the contrastive pairs built
//! from them.
//!
//!     cargo run --example contrastive_samples

use dash_dts::llm::ModelSettings;
use dash_dts::mock::MockResponder;
use dash_dts::samplegen::{extract_windows, filter_by_confidence, generate_pair};
use dash_dts::synthetic::vhf_corpus;

fn main() {
    let corpus = vhf_corpus("demo", 1, 8);
    let item = &corpus.dialogues[0];
    let llm = MockResponder::heuristic().client();
    let settings = ModelSettings::default();

    let windows = extract_windows(&item.dialogue, item.gold.as_ref(), 3, 3);
    println!("{} windows from {} utterances", windows.len(), item.dialogue.len());
    let mut pairs = Vec::new();
    for w in &windows {
        println!("  gap {:>2} {:?}", w.gap, w.kind);
        pairs.push(generate_pair(w, &llm, &settings).unwrap());
    }

    let pair = &pairs[0];
    println!("\npositive (label {}, confidence {}):", pair.positive.label, pair.positive.confidence);
    for (i, line) in pair.positive.utterances.iter().enumerate() {
        println!("  {}{line}", if Some(i + 1) == pair.positive.pivot { "> " } else { "  " });
    }
    println!("negative (label {}, confidence {}):", pair.negative.label, pair.negative.confidence);
    for line in &pair.negative.utterances {
        println!("    {line}");
    }

    // both halves of a pair must clear the threshold
    for threshold in [0.5, 0.88] {
        let kept = filter_by_confidence(pairs.clone(), threshold);
        println!("threshold {threshold}: {} of {} pairs kept", kept.len(), pairs.len());
    }
    println!("\nas a JSON line:\n{}", pair.to_json_line());
}
