//! Trains the tiny network briefly on synthetic eyes, then writes the
//! predicted mask, the cleaned mask and a two-band confidence overlay for an
//! unseen eye.
//!
//! cargo run --release --example predict_overlay -- [out_dir] [epochs]

use std::path::PathBuf;

use segdense::data::{synthesize_sample, Phase, Sample, SynthConfig, MODEL_SIZE};
use segdense::eval::nice1_error;
use segdense::infer::{
    binarize, confidence_bands, export_mask, export_overlay, postprocess, predict_confidence, resize_mask_nearest,
};
use segdense::model::{build_model, BackboneConfig, ModelSpec};
use segdense::train::{run_training, TrainConfig};

fn main() -> segdense::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "overlay_out".into()));
    let epochs: usize = args.next().map_or(60, |a| a.parse().expect("epochs"));

    let train: Vec<Sample> = (0..8)
        .map(|i| synthesize_sample(&SynthConfig::with_phase(Phase::ALL[i % 3]), i as u64)?.resized(MODEL_SIZE))
        .collect::<segdense::Result<_>>()?;
    let mut model = build_model(&ModelSpec::new(BackboneConfig::tiny(), 4), 1)?;
    let config = TrainConfig {
        learning_rate: 0.05,
        epochs,
        ..TrainConfig::default()
    };
    run_training(&mut model, &train, &config, &out.join("checkpoints"), |s| {
        if s.epoch % 10 == 0 {
            println!("epoch {:3} loss {:.4}", s.epoch, s.mean_loss);
        }
    })?;

    let unseen = synthesize_sample(&SynthConfig::with_phase(Phase::PostSurgery), 1234)?;
    let map = predict_confidence(&model, &[&unseen.image], MODEL_SIZE)?.remove(0);
    let raw = resize_mask_nearest(&binarize(&map, 0.5)?, unseen.image.dims());
    let cleaned = postprocess(&raw);
    let truth = unseen.mask.clone().expect("synthetic mask");
    for (label, m) in [("raw", &raw), ("postprocessed", &cleaned)] {
        let err = nice1_error(std::slice::from_ref(m), std::slice::from_ref(&truth))?.average_error;
        println!("{label:>13}: NICE-I {:.3}%", 100.0 * err);
    }
    unseen.image.save_png(&out.join("eye.png"))?;
    export_mask(&raw, &out.join("mask.png"))?;
    export_mask(&cleaned, &out.join("mask_postprocessed.png"))?;
    let bands = confidence_bands(&map, 0.5, 0.9)?;
    export_overlay(&unseen.image, &cleaned, &bands, &out.join("overlay.png"))?;
    println!("outputs in {}", out.display());
    Ok(())
}
