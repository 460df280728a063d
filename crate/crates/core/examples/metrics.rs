//! Pk and WindowDiff on hand-built segmentations, then a corpus report.
//!
//!     cargo run --example metrics

use dash_dts::dialogue::Segmentation;
use dash_dts::metrics::{evaluate_corpus, render_table};
use dash_dts::{default_k, pk, window_diff};

fn seg(n: usize, boundaries: &[usize]) -> Segmentation {
    Segmentation::new(n, boundaries.to_vec()).expect("valid boundaries")
}

fn main() {
    let reference = seg(12, &[4, 8]);
    println!("reference segments: {:?}", reference.segments());
    println!("default k = {}", default_k(&reference));

    let cases = [
        ("exact", seg(12, &[4, 8])),
        ("near miss", seg(12, &[5, 8])),
        ("one missed", seg(12, &[4])),
        ("extra boundary", seg(12, &[2, 4, 8])),
        ("no boundaries", seg(12, &[])),
    ];
    println!("\n{:<16} {:>6} {:>6}", "hypothesis", "Pk", "Wd");
    for (name, hyp) in &cases {
        let p = pk(&reference, hyp, None).unwrap();
        let w = window_diff(&reference, hyp, None).unwrap();
        println!("{name:<16} {p:>6.3} {w:>6.3}");
    }

    // corpus-level: one model, scores averaged over dialogues
    let golds = vec![("a".to_string(), seg(12, &[4, 8])), ("b".to_string(), seg(9, &[3]))];
    let preds = vec![("a".to_string(), seg(12, &[5, 8])), ("b".to_string(), seg(9, &[3, 6]))];
    let report = evaluate_corpus("toy", "my-model", &preds, &golds, None).unwrap();
    println!("\n{}", render_table(&[&report]));
}
