//! Reading the three supported corpus layouts.
//!
//!     cargo run --example corpus_formats

use dash_dts::dialogue::parse_corpus;
use dash_dts::CorpusFormat;

const DIALSEG: &str = "\
# booking-1
hi, I'd like a table for two
sure, what time?
seven please

by the way, is there parking?
yes, behind the building
";

const VHF: &str = r#"{
  "name": "harbour",
  "dialogues": [
    {
      "dialogue_id": 17,
      "turns": [
        {"station": "Marina", "text": "Kestrel, this is Marina, over.", "topic_id": 0},
        {"station": "Kestrel", "text": "Marina, Kestrel, go ahead.", "topic_id": 0},
        {"station": "Marina", "text": "Berth four is free, over.", "topic_id": 0},
        {"station": "Coastguard", "text": "All stations, gale warning, over.", "topic_id": 1}
      ]
    }
  ]
}"#;

fn show(format: CorpusFormat, text: &str) {
    let corpus = parse_corpus(text.as_bytes(), format, "example").unwrap();
    println!("{format:?}: corpus `{}`", corpus.name);
    for d in &corpus.dialogues {
        let gold = d.gold.as_ref().map(|g| g.segments());
        println!("  {} ({} utterances) segments {:?}", d.dialogue.id, d.dialogue.len(), gold);
        for u in &d.dialogue.utterances {
            println!("    [{}] {}: {}", u.index, u.speaker.as_deref().unwrap_or("-"), u.text);
        }
    }
}

fn main() {
    show(CorpusFormat::DialsegText, DIALSEG);
    show(CorpusFormat::VhfJson, VHF);

    // native JSON round-trips
    let corpus = parse_corpus(DIALSEG.as_bytes(), CorpusFormat::DialsegText, "booking").unwrap();
    let native = serde_json::to_string_pretty(&corpus.to_native_json()).unwrap();
    println!("\nnative form:\n{native}");
    let back = parse_corpus(native.as_bytes(), CorpusFormat::NativeJson, "booking").unwrap();
    assert_eq!(back.dialogues[0].gold, corpus.dialogues[0].gold);

    // errors point at the offending dialogue
    let bad = r#"{"dialogues": [{"id": "x", "turns": ["a", "b"], "topics": [0]}]}"#;
    println!("\n{}", parse_corpus(bad.as_bytes(), CorpusFormat::VhfJson, "bad").unwrap_err());
}
