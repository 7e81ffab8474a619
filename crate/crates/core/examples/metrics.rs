//! Confusion-matrix metrics and rank-based ROC-AUC.

use classdistill::data::Label::{NonTarget as N, Target as T};
use classdistill::metrics::{roc_auc, score};

fn main() -> classdistill::Result<()> {
    let truth = [T, T, T, N, N, N, N, T];
    let predicted = [T, T, N, N, T, N, N, T];
    let scores = [0.9, 0.8, 0.4, 0.1, 0.6, 0.3, 0.4, 0.7];

    let report = score(&predicted, &truth)?.with_auc(roc_auc(&scores, &truth)?);
    println!("{report}");

    // no positive predictions: precision is reported as degenerate
    let none = score(&[N; 8], &truth)?;
    println!("degenerate fields: {:?}", none.degenerate);
    Ok(())
}
