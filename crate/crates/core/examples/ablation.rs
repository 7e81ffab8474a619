//! Loss and decision-rule ablation on one split.

use classdistill::cli::{ablation_table, ABLATION_COLUMNS};
use classdistill::data::{synth_benchmark, SynthConfig};
use classdistill::pipeline::PipelineConfig;

fn main() -> classdistill::Result<()> {
    let data = synth_benchmark(&SynthConfig::default())?;
    println!("{}", ABLATION_COLUMNS.join("\t"));
    for r in ablation_table(&data, &PipelineConfig::default())? {
        println!(
            "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            r.loss, r.decision, r.accuracy, r.precision, r.fpr, r.f1
        );
    }
    Ok(())
}
