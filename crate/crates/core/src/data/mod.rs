//! Eye images, masks, manifests, subject-disjoint splits and synthetic data.

mod image;
mod manifest;
mod synth;

pub use image::{IrisImage, SegmentationMask, MIN_IMAGE_SIDE};
pub use manifest::{load_manifest, split_by_subject, DatasetManifest, Eye, ManifestEntry, Phase};
pub use synth::{synthesize_sample, synthesize_with_geometry, EyeGeometry, SynthConfig};

use crate::error::{Result, SegError};

/// Resolution of the original captures.
pub const ORIGINAL_SIZE: (usize, usize) = (640, 480);
/// Network input resolution.
pub const MODEL_SIZE: (usize, usize) = (224, 224);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub image: IrisImage,
    pub mask: Option<SegmentationMask>,
    pub subject_id: String,
    pub eye: Eye,
    pub phase: Phase,
    pub sensor: String,
}

impl Sample {
    pub fn new(
        id: String,
        image: IrisImage,
        mask: Option<SegmentationMask>,
        subject_id: String,
        eye: Eye,
        phase: Phase,
        sensor: String,
    ) -> Result<Self> {
        if let Some(m) = &mask {
            if m.dims() != image.dims() {
                return Err(SegError::Shape(format!(
                    "sample {id}: mask {:?} does not match image {:?}",
                    m.dims(),
                    image.dims()
                )));
            }
        }
        Ok(Self {
            id,
            image,
            mask,
            subject_id,
            eye,
            phase,
            sensor,
        })
    }

    /// Image resized bilinearly and mask resized nearest-neighbour to `(width, height)`.
    pub fn resized(&self, (width, height): (usize, usize)) -> Result<Self> {
        Ok(Self {
            image: resize_to_model(&self.image, (width, height))?,
            mask: self.mask.as_ref().map(|m| m.resize_nearest(width, height)),
            ..self.clone()
        })
    }
}

/// Bilinear resize of an eye image to the network resolution.
pub fn resize_to_model(image: &IrisImage, target: (usize, usize)) -> Result<IrisImage> {
    image.resize_bilinear(target.0, target.1)
}
