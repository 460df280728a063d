//! Tagging radio call-up handshakes with the scripted model.
//!
//!     cargo run --example handshake_tagging

use dash_dts::handshake::{default_few_shot, spans_to_boundary_hints, spans_to_labels, tag_handshakes};
use dash_dts::llm::ModelSettings;
use dash_dts::mock::MockResponder;
use dash_dts::synthetic::vhf_corpus;

fn main() {
    let corpus = vhf_corpus("demo", 1, 3);
    let dialogue = &corpus.dialogues[0].dialogue;
    let llm = MockResponder::heuristic().client();

    let spans = tag_handshakes(dialogue, &llm, &default_few_shot(), &ModelSettings::default()).unwrap();
    let labels = spans_to_labels(&spans, &dialogue.shape());
    for (u, row) in dialogue.utterances.iter().zip(&labels) {
        let tagged: Vec<String> = u
            .text
            .split_whitespace()
            .zip(row)
            .map(|(tok, l)| match l.as_str() {
                "O" => tok.to_string(),
                l => format!("{tok}/{l}"),
            })
            .collect();
        println!("[{:>2}] {}", u.index, tagged.join(" "));
    }
    println!("\nspans:");
    for s in &spans {
        println!("  utterance {} tokens {}..={} trust {:.2}: {}", s.utterance, s.start, s.end, s.trust, s.reasoning);
    }
    println!("boundary hints: {:?}", spans_to_boundary_hints(&spans, dialogue.len()));
    println!("gold boundaries: {:?}", corpus.dialogues[0].gold.as_ref().unwrap().boundaries());
}
