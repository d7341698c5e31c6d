use std::path::Path;

use crate::error::{Result, SegError};

/// Smallest side accepted for an eye image.
pub const MIN_IMAGE_SIDE: usize = 32;

/// Single-channel 8-bit eye image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrisImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl IrisImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width < MIN_IMAGE_SIDE || height < MIN_IMAGE_SIDE {
            return Err(SegError::Invalid(format!(
                "image {width}x{height} is smaller than {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}"
            )));
        }
        if pixels.len() != width * height {
            return Err(SegError::Shape(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(u8) -> u8) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Bilinear resampling with half-pixel centers; output rounded and clamped to `[0, 255]`.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<Self> {
        if (width, height) == self.dims() {
            return Ok(self.clone());
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let axis = |dst: usize, scale: f64, len: usize| -> (usize, usize, f64) {
            let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            (lo, hi, src - lo as f64)
        };
        let cols: Vec<_> = (0..width).map(|x| axis(x, sx, self.width)).collect();
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            let (y0, y1, fy) = axis(y, sy, self.height);
            for &(x0, x1, fx) in &cols {
                let top = self.get(x0, y0) as f64 * (1.0 - fx) + self.get(x1, y0) as f64 * fx;
                let bottom = self.get(x0, y1) as f64 * (1.0 - fx) + self.get(x1, y1) as f64 * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| SegError::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
            .to_luma8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        save_gray(path, self.width, self.height, self.pixels.clone())
    }
}

/// Binary per-pixel iris map; every pixel is 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMask {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl SegmentationMask {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(SegError::Shape(format!(
                "{width}x{height} mask needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|&&v| v > 1) {
            return Err(SegError::Invalid(format!("mask pixel value {v} is not 0 or 1")));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(u8::from(f(x, y)));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x] == 1
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.pixels[y * self.width + x] = u8::from(value);
    }

    pub fn count_ones(&self) -> usize {
        self.pixels.iter().filter(|&&v| v == 1).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| 1 - v).collect(),
        }
    }

    /// Nearest-neighbour resampling (pixel-center mapping); output stays binary.
    pub fn resize_nearest(&self, width: usize, height: usize) -> Self {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let src_index = |dst: usize, src_len: usize, dst_len: usize| -> usize {
            let s = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64).floor() as usize;
            s.min(src_len - 1)
        };
        let cols: Vec<usize> = (0..width).map(|x| src_index(x, self.width, width)).collect();
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = src_index(y, self.height, height);
            let row = &self.pixels[sy * self.width..(sy + 1) * self.width];
            pixels.extend(cols.iter().map(|&sx| row[sx]));
        }
        Self { width, height, pixels }
    }

    /// Reads a mask PNG; on-disk values `>= 128` are foreground.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| SegError::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
            .to_luma8();
        let (w, h) = img.dimensions();
        let pixels = img.into_raw().into_iter().map(|v| u8::from(v >= 128)).collect();
        Self::new(w as usize, h as usize, pixels)
    }

    /// Writes the mask as a `{0, 255}` grayscale PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let pixels = self.pixels.iter().map(|&v| v * 255).collect();
        save_gray(path, self.width, self.height, pixels)
    }
}

fn save_gray(path: &Path, width: usize, height: usize, pixels: Vec<u8>) -> Result<()> {
    let img = image::GrayImage::from_raw(width as u32, height as u32, pixels).expect("pixel buffer matches dimensions");
    img.save(path).map_err(|e| SegError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
