//! Builds a small synthetic audio-visual corpus and summarizes its manifest.
//!
//! `cargo run --release --example build_corpus -- /tmp/avse-corpus`

use std::collections::BTreeMap;

use avse::data::{build_corpus, CorpusSpec, Split};

fn main() -> avse::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "avse-corpus".into());
    let spec = CorpusSpec {
        n_train: 12,
        n_test: 3,
        min_duration_s: 1.0,
        max_duration_s: 2.0,
        ..CorpusSpec::default()
    };
    let manifest = build_corpus(&spec, &out)?;
    let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for r in &manifest.records {
        *counts.entry((r.split.name(), r.noise_kind.name())).or_default() += 1;
    }
    println!("{} records under {out}", manifest.records.len());
    for ((split, kind), n) in counts {
        println!("  {split:<5} {kind:<8} {n}");
    }
    let test = manifest.split(Split::Test);
    println!("first test record: {}", test.records[0].id);
    Ok(())
}
