//! Overfits the tiny network on eight synthetic eyes and reports the
//! training-set segmentation error as it falls.
//!
//! cargo run --release --example train_overfit -- [epochs] [learning_rate]

use std::time::Instant;

use segdense::data::{synthesize_sample, Phase, Sample, SynthConfig, MODEL_SIZE};
use segdense::eval::nice1_error;
use segdense::infer::{predict_masks, PredictOptions};
use segdense::model::{build_model, BackboneConfig, ModelSpec};
use segdense::train::{train_epoch, Sgd, TrainConfig, TrainPhase};

fn main() -> segdense::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(200, |a| a.parse().expect("epochs"));
    let lr: f64 = args.next().map_or(0.05, |a| a.parse().expect("learning rate"));

    let phases = [Phase::PreSurgery, Phase::PostSurgery];
    let originals: Vec<Sample> = (0..8)
        .map(|i| synthesize_sample(&SynthConfig::with_phase(phases[i % 2]), 100 + i as u64))
        .collect::<segdense::Result<_>>()?;
    let train: Vec<Sample> = originals
        .iter()
        .map(|s| s.resized(MODEL_SIZE))
        .collect::<segdense::Result<_>>()?;

    let mut model = build_model(&ModelSpec::new(BackboneConfig::tiny(), 4), 7)?;
    let config = TrainConfig {
        learning_rate: lr,
        epochs,
        phase: TrainPhase::Finetune,
        ..TrainConfig::default()
    };
    let mut sgd = Sgd::new(config.learning_rate, config.momentum);
    let images: Vec<_> = originals.iter().map(|s| &s.image).collect();
    let truth: Vec<_> = originals
        .iter()
        .map(|s| s.mask.clone().expect("synthetic mask"))
        .collect();
    let start = Instant::now();
    for epoch in 1..=epochs {
        let stats = train_epoch(&mut model, &mut sgd, &train, &config, epoch)?;
        if epoch % 10 == 0 || epoch == epochs {
            let masks = predict_masks(&model, &images, &PredictOptions::default())?;
            let err = nice1_error(&masks, &truth)?.average_error;
            println!(
                "epoch {epoch:4}  loss {:.5}  NICE-I {:.3}%  ({:.0}s)",
                stats.mean_loss,
                100.0 * err,
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
