//! The three contrastive losses on one batch, with gradient magnitudes.

use classdistill::linalg::fit_gaussian;
use classdistill::loss::{evaluate, ContrastTriple, LossKind};

fn norm(rows: &[Vec<f64>]) -> f64 {
    rows.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn main() -> classdistill::Result<()> {
    let window = [[0.1, 0.2], [-0.3, 0.1], [0.2, -0.4], [0.0, 0.3], [-0.1, -0.2]];
    let model = fit_gaussian(&window, 1e-6)?;
    let batch = vec![
        ContrastTriple { anchor: vec![0.1, 0.0], positive: vec![-0.2, 0.1], negative: vec![1.5, 1.0] },
        ContrastTriple { anchor: vec![0.0, 0.2], positive: vec![0.1, -0.1], negative: vec![0.4, 0.5] },
    ];
    for kind in LossKind::ALL {
        let v = evaluate(kind, &batch, &model)?;
        println!(
            "{kind:<9} loss = {:.6}  |grad anchor| = {:.4}  |grad negative| = {:.4}",
            v.value,
            norm(&v.anchor_grads),
            norm(&v.negative_grads)
        );
    }
    Ok(())
}
