//! Tenfold dataset expansion: horizontal flip × (identity + four contrast factors).

use serde::{Deserialize, Serialize};

use crate::data::{IrisImage, Sample, SegmentationMask};
use crate::error::{Result, SegError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub contrast_factors: [f64; 4],
    pub center_value: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            contrast_factors: [0.8, 0.9, 1.1, 1.2],
            center_value: 127.5,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for &f in &self.contrast_factors {
            if !(f.is_finite() && f > 0.0) || f == 1.0 {
                return Err(SegError::Invalid(format!(
                    "contrast factors must be positive and differ from 1.0, got {f}"
                )));
            }
        }
        if !(0.0..=255.0).contains(&self.center_value) {
            return Err(SegError::Invalid(format!(
                "contrast center {} outside [0, 255]",
                self.center_value
            )));
        }
        Ok(())
    }
}

/// Rounds to nearest, with exact halves going toward zero.
fn round_half_toward_zero(v: f64) -> f64 {
    let r = v.round();
    if (v - v.trunc()).abs() == 0.5 {
        v.trunc()
    } else {
        r
    }
}

/// `out = round(center + factor · (in − center))`, clamped to `[0, 255]`.
pub fn contrast_normalize(image: &IrisImage, factor: f64, center: f64) -> Result<IrisImage> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(SegError::Invalid(format!(
            "contrast factor must be positive, got {factor}"
        )));
    }
    let lut: Vec<u8> = (0..=255u8)
        .map(|v| {
            let out = center + factor * (v as f64 - center);
            round_half_toward_zero(out).clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok(image.map(|v| lut[v as usize]))
}

fn flip_image(image: &IrisImage) -> IrisImage {
    let w = image.width();
    let pixels = image
        .pixels()
        .chunks(w)
        .flat_map(|row| row.iter().rev().copied())
        .collect();
    IrisImage::new(w, image.height(), pixels).expect("flip keeps dimensions")
}

fn flip_mask(mask: &SegmentationMask) -> SegmentationMask {
    let w = mask.width();
    let pixels = mask
        .pixels()
        .chunks(w)
        .flat_map(|row| row.iter().rev().copied())
        .collect();
    SegmentationMask::new(w, mask.height(), pixels).expect("flip keeps dimensions")
}

/// Mirrors image and mask left to right.
pub fn horizontal_flip(sample: &Sample) -> Sample {
    Sample {
        image: flip_image(&sample.image),
        mask: sample.mask.as_ref().map(flip_mask),
        ..sample.clone()
    }
}

/// Emits ten variants per input, in order: original, its four contrast
/// variants, flipped, then the flipped image's four contrast variants.
/// Variant ids get a `_o0`..`_o4` / `_f0`..`_f4` suffix.
pub fn expand_dataset(samples: &[Sample], config: &AugmentConfig) -> Result<Vec<Sample>> {
    config.validate()?;
    let mut out = Vec::with_capacity(samples.len() * 10);
    for sample in samples {
        for (tag, base) in [("o", sample.clone()), ("f", horizontal_flip(sample))] {
            out.push(Sample {
                id: format!("{}_{tag}0", sample.id),
                ..base.clone()
            });
            for (i, &factor) in config.contrast_factors.iter().enumerate() {
                out.push(Sample {
                    id: format!("{}_{tag}{}", sample.id, i + 1),
                    image: contrast_normalize(&base.image, factor, config.center_value)?,
                    ..base.clone()
                });
            }
        }
    }
    Ok(out)
}
