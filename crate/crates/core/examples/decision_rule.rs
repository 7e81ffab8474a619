//! Labelling queries with the Beta-law threshold on Mahalanobis distance.

use classdistill::linalg::fit_gaussian;
use classdistill::mahalanobis::{beta_decide, decision_statistic, sq_mahalanobis, DecisionThreshold};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> classdistill::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let d = 4;
    let targets: Vec<Vec<f64>> = (0..300)
        .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let model = fit_gaussian(&targets, 1e-6)?;
    let threshold = DecisionThreshold::for_model(&model, 0.95)?;
    println!("v_beta = {:.6e} at beta = 0.95", threshold.v_beta());

    for shift in [0.0, 1.0, 2.0, 3.0, 5.0] {
        let query = vec![shift; d];
        let score = decision_statistic(&model, &query)?;
        println!(
            "shift {shift}: d2 = {:8.3}  T = {:.4e}  -> {}",
            sq_mahalanobis(&model, &query)?,
            score.t,
            beta_decide(&model, &query, &threshold)?
        );
    }
    Ok(())
}
