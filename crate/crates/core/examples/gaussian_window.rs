//! Streaming target statistics: one-point updates and the sliding window.

use classdistill::linalg::{fit_gaussian, SlidingWindow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> classdistill::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut draw = |n: usize| -> Vec<Vec<f64>> {
        (0..n).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(0.0..4.0)]).collect()
    };

    let points = draw(50);
    let model = fit_gaussian(&points, 1e-6)?;
    let extra = vec![0.3, 1.0];
    let appended = model.append_point(&extra)?;
    println!("n = {} -> {}, mean {:?} -> {:?}", model.n(), appended.n(), model.mean(), appended.mean());

    // capacity 8, statistics refreshed after every 4 pushed vectors
    let mut window = SlidingWindow::new(2, 8, 4, 1e-6)?;
    for step in 0..5 {
        window.push(&draw(3))?;
        match window.model() {
            Some(m) => println!("step {step}: {} buffered, model over n = {}, mean {:.3?}", window.len(), m.n(), m.mean()),
            None => println!("step {step}: {} buffered, no model yet", window.len()),
        }
    }
    Ok(())
}
