//! Unsupervised baselines: TextTiling and a random segmenter.
//!
//!     cargo run --example texttiling

use dash_dts::metrics::{evaluate_corpus, render_table};
use dash_dts::synthetic::two_topic_corpus;
use dash_dts::texttiling::{depth_scores, gap_similarities, random_segmentation, smooth, texttile, TilingParams};
use dash_dts::default_k;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let corpus = two_topic_corpus(20, 5);
    let params = TilingParams::default();

    // walk one dialogue through the scoring steps
    let first = &corpus.dialogues[0];
    let sims = gap_similarities(&first.dialogue, params.block_size);
    let smoothed = smooth(&sims.iter().map(|&(_, s)| s).collect::<Vec<_>>(), params.smoothing_width);
    let depths = depth_scores(&smoothed);
    println!("dialogue {} (gold boundaries {:?})", first.dialogue.id, first.gold.as_ref().unwrap().boundaries());
    for ((gap, _), depth) in sims.iter().zip(&depths) {
        if *depth > 0.0 {
            println!("  gap {gap:>2}: depth {depth:.3}");
        }
    }
    println!("  predicted: {:?}\n", texttile(&first.dialogue, &params).boundaries());

    let golds: Vec<_> = corpus
        .dialogues
        .iter()
        .map(|d| (d.dialogue.id.clone(), d.gold.clone().unwrap()))
        .collect();
    let tiled: Vec<_> = corpus
        .dialogues
        .iter()
        .map(|d| (d.dialogue.id.clone(), texttile(&d.dialogue, &params)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let random: Vec<_> = golds
        .iter()
        .map(|(id, g)| (id.clone(), random_segmentation(g.n(), default_k(g), &mut rng)))
        .collect();

    let tt = evaluate_corpus(&corpus.name, "TextTiling", &tiled, &golds, None).unwrap();
    let rnd = evaluate_corpus(&corpus.name, "Random", &random, &golds, None).unwrap();
    println!("{}", render_table(&[&tt, &rnd]));
}
