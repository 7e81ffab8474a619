//! Train a projection head, calibrate on dev, evaluate on test and save.
//!
//! `cargo run --release --example train_pipeline -- [model-path]`

use classdistill::data::{load_model, save_model, synth_benchmark, SynthConfig};
use classdistill::pipeline::{evaluate, fit_dataset, PipelineConfig};

fn main() -> classdistill::Result<()> {
    let data = synth_benchmark(&SynthConfig::default())?;
    let cfg = PipelineConfig::default();
    let (splits, fitted) = fit_dataset(&data, &cfg)?;
    println!(
        "{} -> {} dims, beta = {:.6}",
        fitted.artifact.head.d_in(),
        fitted.artifact.head.d_out(),
        fitted.artifact.threshold.beta_level()
    );
    if let (Some(first), Some(last)) = (fitted.log.first(), fitted.log.last()) {
        println!("loss {:.4} -> {:.4} over {} batches", first.loss, last.loss, fitted.log.len());
    }
    let (_, report) = evaluate(&fitted.artifact, &splits.test)?;
    println!("test metrics:\n{report}");

    let path = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("example.model"));
    save_model(&fitted.artifact, &path)?;
    assert_eq!(load_model(&path)?.to_text(), fitted.artifact.to_text());
    println!("saved to {}", path.display());
    Ok(())
}
