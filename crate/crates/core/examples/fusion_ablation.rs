//! Trains one model per branch count (deepest tap only, up to all four taps)
//! on the same synthetic eyes and compares their training-set error.
//!
//! cargo run --release --example fusion_ablation -- [epochs]

use segdense::data::{synthesize_sample, Phase, Sample, SynthConfig, MODEL_SIZE};
use segdense::eval::nice1_error;
use segdense::infer::{predict_masks, PredictOptions};
use segdense::model::{build_model, BackboneConfig, ModelSpec};
use segdense::train::{train_epoch, Sgd, TrainConfig};

fn main() -> segdense::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(150, |a| a.parse().expect("epochs"));
    let originals: Vec<Sample> = (0..8)
        .map(|i| synthesize_sample(&SynthConfig::with_phase(Phase::PreSurgery), 300 + i))
        .collect::<segdense::Result<_>>()?;
    let train: Vec<Sample> = originals
        .iter()
        .map(|s| s.resized(MODEL_SIZE))
        .collect::<segdense::Result<_>>()?;
    let images: Vec<_> = originals.iter().map(|s| &s.image).collect();
    let truth: Vec<_> = originals
        .iter()
        .map(|s| s.mask.clone().expect("synthetic mask"))
        .collect();
    let config = TrainConfig {
        learning_rate: 0.05,
        epochs,
        ..TrainConfig::default()
    };

    for branches in 1..=4 {
        let mut model = build_model(&ModelSpec::new(BackboneConfig::tiny(), branches), 7)?;
        let mut sgd = Sgd::new(config.learning_rate, config.momentum);
        let mut last = 0.0;
        for epoch in 1..=epochs {
            last = train_epoch(&mut model, &mut sgd, &train, &config, epoch)?.mean_loss;
        }
        let masks = predict_masks(&model, &images, &PredictOptions::default())?;
        let err = nice1_error(&masks, &truth)?.average_error;
        println!("branches {branches}: final loss {last:.4}, NICE-I {:.3}%", 100.0 * err);
    }
    Ok(())
}
