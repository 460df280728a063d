//! Regenerates `fixtures/`: the query corpus, the exemplar store, replay
//! fixtures recorded from the scripted responder, and the golden reports.
//!
//!     cargo run --example record_fixtures

use std::fs;
use std::path::Path;

use dash_dts::cli::run_args;
use dash_dts::synthetic::vhf_corpus;

fn write_corpus(path: &Path, name: &str, count: usize, seed: u64) {
    let corpus = vhf_corpus(name, count, seed);
    let mut text = serde_json::to_string_pretty(&corpus.to_native_json()).unwrap();
    text.push('\n');
    fs::write(path, text).unwrap();
}

fn run(args: &[&str]) {
    let mut argv = vec!["dash-dts"];
    argv.extend_from_slice(args);
    if let Err(e) = run_args(argv) {
        panic!("{args:?} failed: {e}");
    }
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let replay = root.join("replay");
    let golden = root.join("golden");
    let _ = fs::remove_dir_all(&replay);
    fs::create_dir_all(&replay).unwrap();
    fs::create_dir_all(&golden).unwrap();

    write_corpus(&root.join("corpus.json"), "vhf-queries", 8, 11);
    write_corpus(&root.join("store.json"), "vhf-exemplars", 12, 29);

    let config = root.join("run.toml");
    let out = tempfile::tempdir().unwrap();
    let (c, r, o) = (
        config.to_str().unwrap(),
        replay.to_str().unwrap(),
        out.path().to_str().unwrap(),
    );
    let preds = out.path().join("predictions");

    run(&["segment", "--config", c, "--backend", "scripted", "--record", r, "--out", o]);
    run(&["evaluate", "--config", c, "--predictions", preds.to_str().unwrap(), "--out", o]);
    run(&["ablation", "--config", c, "--backend", "scripted", "--record", r, "--out", o]);

    for name in ["report.json", "report.txt", "ablation.txt"] {
        fs::copy(out.path().join(name), golden.join(name)).unwrap();
    }
    let fixtures = fs::read_dir(&replay).unwrap().count();
    println!("recorded {fixtures} fixtures; golden reports in {}", golden.display());
}
