//! Verification rate at fixed false accept rates and the ROC table for two
//! simulated matchers, one scoring similarities and one distances.
//!
//! cargo run --example evaluate_roc

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segdense::eval::{gar_at_far, roc_points, Polarity, ScoreSet};

/// Approximately normal: the sum of twelve uniforms has unit variance.
fn draw(rng: &mut ChaCha8Rng, mean: f64, sd: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| mean + sd * ((0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0))
        .collect()
}

fn main() -> segdense::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let similarity = ScoreSet::new(
        draw(&mut rng, 0.8, 0.1, 500),
        draw(&mut rng, 0.4, 0.1, 5000),
        Polarity::HigherIsMatch,
    )?;
    let hamming = ScoreSet::new(
        draw(&mut rng, 0.28, 0.05, 500),
        draw(&mut rng, 0.46, 0.02, 5000),
        Polarity::LowerIsMatch,
    )?;

    for (name, scores) in [("similarity", &similarity), ("hamming distance", &hamming)] {
        println!("{name}");
        for far in [0.0001, 0.001, 0.01, 0.1] {
            let op = gar_at_far(scores, far)?;
            println!("  FAR {far:<7} GAR {:.4}  threshold {:.4}", op.gar, op.threshold);
        }
        let roc = roc_points(scores);
        println!("  {} ROC points; first three {:?}", roc.len(), &roc[..3.min(roc.len())]);
    }
    Ok(())
}
