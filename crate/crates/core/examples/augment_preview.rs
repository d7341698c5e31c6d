//! Shows the ten variants produced for one training image, as a contact
//! sheet PNG (top row original, bottom row flipped).
//!
//! cargo run --example augment_preview -- [out.png]

use segdense::augment::{expand_dataset, AugmentConfig};
use segdense::data::{synthesize_sample, Phase, SynthConfig, MODEL_SIZE};

fn main() -> segdense::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "augment_preview.png".into());
    let sample = synthesize_sample(&SynthConfig::with_phase(Phase::PreSurgery), 5)?.resized(MODEL_SIZE)?;
    let config = AugmentConfig::default();
    let variants = expand_dataset(std::slice::from_ref(&sample), &config)?;

    let (w, h) = MODEL_SIZE;
    let mut sheet = image::GrayImage::new(5 * w as u32, 2 * h as u32);
    for (k, v) in variants.iter().enumerate() {
        let (col, row) = (k % 5, k / 5);
        for y in 0..h {
            for x in 0..w {
                sheet.put_pixel(
                    (col * w + x) as u32,
                    (row * h + y) as u32,
                    image::Luma([v.image.get(x, y)]),
                );
            }
        }
        let mean = v.image.pixels().iter().map(|&p| p as f64).sum::<f64>() / (w * h) as f64;
        println!("{:<10} mean intensity {mean:6.2}", v.id);
    }
    sheet.save(&out).map_err(|e| segdense::SegError::Image {
        path: out.clone().into(),
        message: e.to_string(),
    })?;
    println!(
        "factors {:?} around {}; sheet written to {out}",
        config.contrast_factors, config.center_value
    );
    Ok(())
}
