//! Quantiles and tail probabilities of the Beta law behind the decision rule.

use classdistill::betadist::{beta_quantile, reg_inc_beta, BetaParams};
use classdistill::mahalanobis::decision_params;

fn main() -> classdistill::Result<()> {
    // n = 200 target samples in a 5-dimensional projection
    let params = decision_params(200, 5)?;
    println!("Beta({}, {})", params.a(), params.b());
    for p in [0.5, 0.9, 0.95, 0.99, 0.999] {
        let v = beta_quantile(params, p)?;
        println!("  p = {p:<6} v = {v:.6e}  cdf(v) = {:.12}", reg_inc_beta(params, v)?);
    }

    let skewed = BetaParams::new(0.5, 97.0)?;
    println!("Beta(0.5, 97) median = {:.6e}", skewed.quantile(0.5)?);
    Ok(())
}
