//! Masks from confidence maps: threshold at network resolution, resize
//! back to the capture size, optionally clean up, and render overlays.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{resize_to_model, IrisImage, SegmentationMask, MODEL_SIZE};
use crate::error::{Result, SegError};
use crate::model::{ConfidenceMap, IrisSegmenter};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub binarize: f64,
    pub band_low: f64,
    pub band_high: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            binarize: 0.5,
            band_low: 0.5,
            band_high: 0.9,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        check_threshold(self.binarize)?;
        if !(self.band_low < self.band_high) {
            return Err(SegError::Config(format!(
                "band thresholds need low < high, got {} and {}",
                self.band_low, self.band_high
            )));
        }
        Ok(())
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(SegError::Invalid(format!("threshold must be in (0, 1), got {t}")))
    }
}

/// Foreground iff confidence ≥ `threshold`.
pub fn binarize(confidence: &ConfidenceMap, threshold: f64) -> Result<SegmentationMask> {
    check_threshold(threshold)?;
    let (w, h) = confidence.dims();
    let pixels = confidence.values().iter().map(|&p| u8::from(p >= threshold)).collect();
    SegmentationMask::new(w, h, pixels)
}

pub fn resize_mask_nearest(mask: &SegmentationMask, (width, height): (usize, usize)) -> SegmentationMask {
    mask.resize_nearest(width, height)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictOptions {
    /// Network input `(width, height)`; both divisible by 32.
    pub input_size: (usize, usize),
    pub threshold: f64,
    pub postprocess: bool,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self {
            input_size: MODEL_SIZE,
            threshold: 0.5,
            postprocess: false,
        }
    }
}

/// Confidence maps at network resolution for images of any size.
pub fn predict_confidence(
    model: &IrisSegmenter,
    images: &[&IrisImage],
    input_size: (usize, usize),
) -> Result<Vec<ConfidenceMap>> {
    let resized = images
        .iter()
        .map(|img| resize_to_model(img, input_size))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = resized.iter().collect();
    model.predict_confidence(&refs)
}

/// One mask per image, each at its image's resolution.
pub fn predict_masks(
    model: &IrisSegmenter,
    images: &[&IrisImage],
    options: &PredictOptions,
) -> Result<Vec<SegmentationMask>> {
    let maps = predict_confidence(model, images, options.input_size)?;
    maps.iter()
        .zip(images)
        .map(|(map, img)| {
            let mask = resize_mask_nearest(&binarize(map, options.threshold)?, img.dims());
            Ok(if options.postprocess { postprocess(&mask) } else { mask })
        })
        .collect()
}

pub fn predict_mask(model: &IrisSegmenter, image: &IrisImage, postprocess: bool) -> Result<SegmentationMask> {
    let options = PredictOptions {
        postprocess,
        ..PredictOptions::default()
    };
    Ok(predict_masks(model, &[image], &options)?.remove(0))
}

const NEIGHBOURS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// Labels the 4-connected components of pixels where `select` holds;
/// components are numbered from 1 in raster order of their first pixel.
fn label_components(mask: &SegmentationMask, select: u8) -> (Vec<usize>, usize) {
    let (w, h) = mask.dims();
    let px = mask.pixels();
    let mut labels = vec![0usize; w * h];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if px[start] != select || labels[start] != 0 {
            continue;
        }
        count += 1;
        labels[start] = count;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for (dx, dy) in NEIGHBOURS {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if px[j] == select && labels[j] == 0 {
                    labels[j] = count;
                    queue.push_back(j);
                }
            }
        }
    }
    (labels, count)
}

/// Keeps the largest 4-connected foreground component (the first in raster
/// order on ties), then fills background regions that do not touch the border.
pub fn postprocess(mask: &SegmentationMask) -> SegmentationMask {
    let (w, h) = mask.dims();
    let (labels, count) = label_components(mask, 1);
    if count == 0 {
        return mask.clone();
    }
    let mut sizes = vec![0usize; count + 1];
    for &l in &labels {
        sizes[l] += 1;
    }
    let keep = (1..=count).fold(1, |best, l| if sizes[l] > sizes[best] { l } else { best });
    let single = SegmentationMask::new(w, h, labels.iter().map(|&l| u8::from(l == keep)).collect())
        .expect("labels cover the mask");

    let (bg, bg_count) = label_components(&single, 0);
    let mut touches_border = vec![false; bg_count + 1];
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                touches_border[bg[y * w + x]] = true;
            }
        }
    }
    let pixels = single
        .pixels()
        .iter()
        .zip(&bg)
        .map(|(&v, &l)| u8::from(v == 1 || !touches_border[l]))
        .collect();
    SegmentationMask::new(w, h, pixels).expect("same dimensions")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Band {
    Background,
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceBands {
    width: usize,
    height: usize,
    bands: Vec<Band>,
    pub thresholds: (f64, f64),
}

impl ConfidenceBands {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn get(&self, x: usize, y: usize) -> Band {
        self.bands[y * self.width + x]
    }

    /// Nearest-neighbour rescale, same mapping as masks.
    pub fn resize_nearest(&self, (width, height): (usize, usize)) -> Self {
        let (w, h) = (self.width, self.height);
        let bands = (0..height)
            .flat_map(|y| {
                let sy = (((y as f64 + 0.5) * h as f64 / height as f64) as usize).min(h - 1);
                (0..width).map(move |x| {
                    let sx = (((x as f64 + 0.5) * w as f64 / width as f64) as usize).min(w - 1);
                    sy * w + sx
                })
            })
            .map(|i| self.bands[i])
            .collect();
        Self {
            width,
            height,
            bands,
            thresholds: self.thresholds,
        }
    }
}

/// `< low` background, `[low, high)` low confidence, `≥ high` high confidence.
pub fn confidence_bands(confidence: &ConfidenceMap, low: f64, high: f64) -> Result<ConfidenceBands> {
    if !(low < high) {
        return Err(SegError::Invalid(format!(
            "band thresholds need low < high, got {low} and {high}"
        )));
    }
    let (width, height) = confidence.dims();
    let bands = confidence
        .values()
        .iter()
        .map(|&p| {
            if p >= high {
                Band::High
            } else if p >= low {
                Band::Low
            } else {
                Band::Background
            }
        })
        .collect();
    Ok(ConfidenceBands {
        width,
        height,
        bands,
        thresholds: (low, high),
    })
}

pub const LOW_BAND_COLOR: [u8; 3] = [255, 170, 0];
pub const HIGH_BAND_COLOR: [u8; 3] = [0, 200, 255];
pub const BOUNDARY_COLOR: [u8; 3] = [255, 0, 0];
const BAND_ALPHA: f64 = 0.45;

pub fn export_mask(mask: &SegmentationMask, path: &Path) -> Result<()> {
    mask.save_png(path)
}

/// RGB rendering of `image` with tinted confidence bands and the mask
/// boundary (foreground pixels with a 4-neighbour outside the mask).
pub fn render_overlay(image: &IrisImage, mask: &SegmentationMask, bands: &ConfidenceBands) -> Result<image::RgbImage> {
    let (w, h) = image.dims();
    if mask.dims() != (w, h) {
        return Err(SegError::Shape(format!("mask {:?} vs image {:?}", mask.dims(), (w, h))));
    }
    let bands = if bands.dims() == (w, h) {
        bands.clone()
    } else {
        bands.resize_nearest((w, h))
    };
    let mut out = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let g = image.get(x, y) as f64;
            let tint = match bands.get(x, y) {
                Band::Background => None,
                Band::Low => Some(LOW_BAND_COLOR),
                Band::High => Some(HIGH_BAND_COLOR),
            };
            let edge = mask.get(x, y)
                && NEIGHBOURS.iter().any(|&(dx, dy)| {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize || !mask.get(nx as usize, ny as usize)
                });
            let rgb = if edge {
                BOUNDARY_COLOR
            } else if let Some(c) = tint {
                c.map(|c| ((1.0 - BAND_ALPHA) * g + BAND_ALPHA * c as f64).round() as u8)
            } else {
                [g as u8; 3]
            };
            out.put_pixel(x as u32, y as u32, image::Rgb(rgb));
        }
    }
    Ok(out)
}

pub fn export_overlay(image: &IrisImage, mask: &SegmentationMask, bands: &ConfidenceBands, path: &Path) -> Result<()> {
    let rgb = render_overlay(image, mask, bands)?;
    rgb.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| SegError::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, BackboneConfig, ModelSpec};
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn cmap(w: usize, h: usize, v: &[f64]) -> ConfidenceMap {
        ConfidenceMap::new(w, h, v.to_vec()).unwrap()
    }

    fn mask_from(rows: &[&str]) -> SegmentationMask {
        let h = rows.len();
        let w = rows[0].len();
        SegmentationMask::from_fn(w, h, |x, y| rows[y].as_bytes()[x] == b'#')
    }

    /// Components by repeated relaxation to a fixpoint: each pixel's label
    /// becomes the minimum index over itself and its 4-neighbours.
    fn oracle_components(mask: &SegmentationMask, value: bool) -> Vec<HashSet<(usize, usize)>> {
        let (w, h) = mask.dims();
        let mut label: Vec<Option<usize>> = (0..w * h)
            .map(|i| (mask.get(i % w, i / w) == value).then_some(i))
            .collect();
        loop {
            let mut changed = false;
            for y in 0..h {
                for x in 0..w {
                    let Some(mut best) = label[y * w + x] else { continue };
                    let mut nbrs = vec![];
                    if x > 0 {
                        nbrs.push(y * w + x - 1)
                    }
                    if x + 1 < w {
                        nbrs.push(y * w + x + 1)
                    }
                    if y > 0 {
                        nbrs.push((y - 1) * w + x)
                    }
                    if y + 1 < h {
                        nbrs.push((y + 1) * w + x)
                    }
                    for n in nbrs {
                        if let Some(l) = label[n] {
                            best = best.min(l);
                        }
                    }
                    if Some(best) != label[y * w + x] {
                        label[y * w + x] = Some(best);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut groups: std::collections::BTreeMap<usize, HashSet<(usize, usize)>> = Default::default();
        for (i, l) in label.iter().enumerate() {
            if let Some(l) = l {
                groups.entry(*l).or_default().insert((i % w, i / w));
            }
        }
        groups.into_values().collect()
    }

    /// Brute-force postprocess: largest component by the oracle, then every
    /// background component off the border becomes foreground.
    fn oracle_postprocess(mask: &SegmentationMask) -> SegmentationMask {
        let (w, h) = mask.dims();
        let comps = oracle_components(mask, true);
        let Some(largest) = comps.iter().max_by_key(|c| c.len()) else {
            return mask.clone();
        };
        let n = largest.len();
        // first largest component in raster order of its top-left pixel
        let keep = comps
            .iter()
            .filter(|c| c.len() == n)
            .min_by_key(|c| c.iter().map(|&(x, y)| y * w + x).min().unwrap())
            .unwrap();
        let single = SegmentationMask::from_fn(w, h, |x, y| keep.contains(&(x, y)));
        let holes: HashSet<(usize, usize)> = oracle_components(&single, false)
            .into_iter()
            .filter(|c| !c.iter().any(|&(x, y)| x == 0 || y == 0 || x == w - 1 || y == h - 1))
            .flatten()
            .collect();
        SegmentationMask::from_fn(w, h, |x, y| single.get(x, y) || holes.contains(&(x, y)))
    }

    #[test]
    fn binarize_examples() {
        let m = binarize(&cmap(4, 1, &[0.2, 0.7, 0.5, 0.49]), 0.5).unwrap();
        assert_eq!(m.pixels(), &[0, 1, 1, 0]);
        let all = binarize(&cmap(2, 2, &[0.5; 4]), 0.5).unwrap();
        assert_eq!(all.count_ones(), 4);
        assert!(binarize(&cmap(1, 1, &[0.5]), 0.0).is_err());
        assert!(binarize(&cmap(1, 1, &[0.5]), 1.0).is_err());
    }

    #[test]
    fn binarize_is_idempotent_on_binary_maps() {
        let m = binarize(&cmap(4, 1, &[0.2, 0.7, 0.5, 0.49]), 0.5).unwrap();
        let as_conf = cmap(4, 1, &m.pixels().iter().map(|&v| v as f64).collect::<Vec<_>>());
        assert_eq!(binarize(&as_conf, 0.5).unwrap(), m);
    }

    #[test]
    fn nearest_resize_keeps_binary_values() {
        let checker: Vec<f64> = (0..224 * 224).map(|i| ((i % 224 + i / 224) % 2) as f64).collect();
        let m = binarize(&cmap(224, 224, &checker), 0.5).unwrap();
        let big = resize_mask_nearest(&m, (640, 480));
        assert_eq!(big.dims(), (640, 480));
        assert!(big.pixels().iter().all(|&v| v <= 1));
        assert_eq!(resize_mask_nearest(&m, (224, 224)), m);
        let ones = SegmentationMask::from_fn(7, 5, |_, _| true);
        assert_eq!(resize_mask_nearest(&ones, (33, 2)).count_ones(), 66);
    }

    #[test]
    fn postprocess_examples() {
        let empty = SegmentationMask::zeros(9, 9);
        assert_eq!(postprocess(&empty), empty);

        let annulus_and_blob = mask_from(&[
            "..........",
            ".#####....",
            ".#...#....",
            ".#...#....",
            ".#####....",
            "..........",
            "........##",
            ".........#",
        ]);
        let expected = mask_from(&[
            "..........",
            ".#####....",
            ".#####....",
            ".#####....",
            ".#####....",
            "..........",
            "..........",
            "..........",
        ]);
        assert_eq!(postprocess(&annulus_and_blob), expected);
        assert_eq!(oracle_postprocess(&annulus_and_blob), expected);

        let mut disk = SegmentationMask::from_fn(11, 11, |x, y| {
            let (dx, dy) = (x as f64 - 5.0, y as f64 - 5.0);
            dx * dx + dy * dy <= 16.0
        });
        let full = disk.clone();
        disk.set(5, 5, false);
        assert_eq!(postprocess(&disk), full);
    }

    #[test]
    fn border_touching_background_stays() {
        let m = mask_from(&["#.#", "#.#", "###"]);
        assert_eq!(postprocess(&m), m);
    }

    #[test]
    fn bands_examples() {
        let b = confidence_bands(&cmap(3, 1, &[0.1, 0.6, 0.95]), 0.5, 0.9).unwrap();
        assert_eq!(b.bands(), &[Band::Background, Band::Low, Band::High]);
        let b = confidence_bands(&cmap(3, 1, &[0.1, 0.6, 0.999]), 0.5, 1.0).unwrap();
        assert!(!b.bands().contains(&Band::High));
        assert!(confidence_bands(&cmap(1, 1, &[0.1]), 0.9, 0.9).is_err());
    }

    #[test]
    fn export_round_trip_and_overlay_colors() {
        let dir = tempfile::tempdir().unwrap();
        let img = IrisImage::new(40, 32, (0..40 * 32).map(|i| (i % 200) as u8).collect()).unwrap();
        let mask = SegmentationMask::from_fn(40, 32, |x, y| (8..30).contains(&x) && (6..26).contains(&y));
        let p = dir.path().join("m.png");
        export_mask(&mask, &p).unwrap();
        assert_eq!(SegmentationMask::load_png(&p).unwrap(), mask);

        let conf: Vec<f64> = (0..40 * 32).map(|i| if i % 40 < 15 { 0.7 } else { 0.95 }).collect();
        let bands = confidence_bands(&cmap(40, 32, &conf), 0.5, 0.9).unwrap();
        let rgb = render_overlay(&img, &mask, &bands).unwrap();
        assert_eq!(rgb.dimensions(), (40, 32));
        let low = rgb.get_pixel(10, 10).0;
        let high = rgb.get_pixel(20, 10).0;
        assert_ne!(low, high);
        assert_eq!(rgb.get_pixel(8, 10).0, BOUNDARY_COLOR);
        let o = dir.path().join("o.png");
        export_overlay(&img, &mask, &bands, &o).unwrap();
        let back = image::open(&o).unwrap();
        assert_eq!(back.color(), image::ColorType::Rgb8);
    }

    #[test]
    fn predicted_masks_match_input_dimensions() {
        let model = build_model(&ModelSpec::new(BackboneConfig::tiny(), 4), 2).unwrap();
        let img = IrisImage::new(80, 60, (0..80 * 60).map(|i| (i * 13 % 256) as u8).collect()).unwrap();
        let opts = PredictOptions {
            input_size: (64, 64),
            ..PredictOptions::default()
        };
        let a = predict_masks(&model, &[&img, &img], &opts).unwrap();
        assert_eq!(a[0].dims(), (80, 60));
        assert_eq!(a[0], a[1]);
        assert!(a[0].pixels().iter().all(|&v| v <= 1));
    }

    fn random_mask() -> impl Strategy<Value = SegmentationMask> {
        (2usize..10, 2usize..10).prop_flat_map(|(w, h)| {
            proptest::collection::vec(0u8..2, w * h).prop_map(move |px| SegmentationMask::new(w, h, px).unwrap())
        })
    }

    proptest! {
        #[test]
        fn postprocess_matches_oracle(m in random_mask()) {
            let p = postprocess(&m);
            prop_assert_eq!(&p, &oracle_postprocess(&m));
            prop_assert_eq!(postprocess(&p), p.clone());
            prop_assert!(oracle_components(&p, true).len() <= 1);
        }

        #[test]
        fn bands_union_is_binarized_foreground(v in proptest::collection::vec(0.0f64..=1.0, 16)) {
            let c = cmap(4, 4, &v);
            let b = confidence_bands(&c, 0.5, 0.9).unwrap();
            let m = binarize(&c, 0.5).unwrap();
            for (band, &px) in b.bands().iter().zip(m.pixels()) {
                prop_assert_eq!(*band != Band::Background, px == 1);
            }
        }
    }
}
