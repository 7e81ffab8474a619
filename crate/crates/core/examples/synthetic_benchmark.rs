//! Generate the synthetic benchmark and write it as JSON lines.
//!
//! `cargo run --example synthetic_benchmark -- out.jsonl`

use classdistill::data::{save_dataset, split, synth_benchmark, SynthConfig, DEFAULT_SPLIT_RATIOS};

fn main() -> classdistill::Result<()> {
    let cfg = SynthConfig { seed: 11, ..SynthConfig::default() };
    let data = synth_benchmark(&cfg)?;
    println!(
        "{} records of dimension {}: {} target on a {}-dimensional manifold, {} non-target in {} components",
        data.len(),
        data.d_in(),
        data.n_target(),
        cfg.manifold_dim,
        data.n_non_target(),
        cfg.components
    );
    let s = split(&data, DEFAULT_SPLIT_RATIOS, cfg.seed)?;
    for (name, part) in [("train", &s.train), ("dev", &s.dev), ("test", &s.test)] {
        println!("{name:<5} {:>5} records, {:>4} target", part.len(), part.n_target());
    }
    if let Some(path) = std::env::args().nth(1) {
        save_dataset(&data, &path)?;
        println!("written to {path}");
    }
    Ok(())
}
