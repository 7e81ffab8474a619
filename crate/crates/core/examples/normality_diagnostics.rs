//! Per-class normality after PCA, plus the class distance gap.

use classdistill::data::{synth_benchmark, SynthConfig};
use classdistill::diagnostics::{class_mean_distances, emit_distance_report, normality_report, DEFAULT_COMPONENTS};
use classdistill::pipeline::{refit_model, PipelineConfig};
use classdistill::pipeline::fit_dataset;
use classdistill::trainer::ProjectionHead;

fn main() -> classdistill::Result<()> {
    let data = synth_benchmark(&SynthConfig { n_target: 500, m_non_target: 1500, ..SynthConfig::default() })?;

    let raw = ProjectionHead::identity(data.d_in());
    for r in normality_report(&data, &raw, DEFAULT_COMPONENTS)? {
        println!("raw       {:<10} HZ = {:8.4}  mean AD = {:8.4}", r.label.to_string(), r.hz, r.mean_ad());
    }

    let (splits, fitted) = fit_dataset(&data, &PipelineConfig::default())?;
    for r in normality_report(&splits.test, &fitted.artifact.head, DEFAULT_COMPONENTS)? {
        println!("projected {:<10} HZ = {:8.4}  mean AD = {:8.4}", r.label.to_string(), r.hz, r.mean_ad());
    }

    let before = refit_model(&splits.train, &fitted.initial_head, 1e-6)?;
    let (bt, bn) = class_mean_distances(&emit_distance_report(&splits.test, &fitted.initial_head, &before)?);
    let (at, an) = class_mean_distances(&emit_distance_report(&splits.test, &fitted.artifact.head, &fitted.artifact.model)?);
    println!("mean d2 target/non-target: before {bt:.2}/{bn:.2}, after {at:.2}/{an:.2}");
    Ok(())
}
