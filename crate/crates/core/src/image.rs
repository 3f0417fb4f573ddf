//! Planar RGB images with values in `[0, 1]`.

use crate::error::{Result, ScrError};
use crate::tensor::{LatentTensor, Shape};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    /// Planar `(3, height, width)`.
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ScrError::InvalidValue("image dimensions must be positive".into()));
        }
        if data.len() != 3 * width * height {
            return Err(ScrError::LengthMismatch {
                expected: 3 * width * height,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ScrError::InvalidValue("non-finite pixel".into()));
        }
        Ok(Image { width, height, data })
    }

    /// From interleaved 8-bit RGB.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != 3 * width * height {
            return Err(ScrError::LengthMismatch {
                expected: 3 * width * height,
                actual: rgb.len(),
            });
        }
        let plane = width * height;
        let mut data = vec![0.0; 3 * plane];
        for (i, px) in rgb.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + i] = f64::from(px[c]) / 255.0;
            }
        }
        Image::new(width, height, data)
    }

    /// Interleaved 8-bit RGB, rounding after clipping to `[0, 1]`.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let plane = self.width * self.height;
        let mut out = Vec::with_capacity(3 * plane);
        for i in 0..plane {
            for c in 0..3 {
                out.push(to_u8(self.data[c * plane + i]));
            }
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_tensor(&self) -> LatentTensor {
        LatentTensor::from_raw(Shape::new(3, self.height, self.width), self.data.clone())
    }

    pub fn from_tensor(t: LatentTensor) -> Result<Self> {
        let s = t.shape();
        if s.channels != 3 {
            return Err(ScrError::ShapeMismatch {
                expected: vec![3],
                actual: vec![s.channels],
            });
        }
        Image::new(s.width, s.height, t.into_data())
    }

    /// Replicate-pads the right and bottom edges up to multiples of
    /// `multiple`.
    pub fn padded_to(&self, multiple: usize) -> Image {
        let w = self.width.div_ceil(multiple) * multiple;
        let h = self.height.div_ceil(multiple) * multiple;
        if w == self.width && h == self.height {
            return self.clone();
        }
        let mut data = Vec::with_capacity(3 * w * h);
        for c in 0..3 {
            let plane = &self.data[c * self.width * self.height..(c + 1) * self.width * self.height];
            for y in 0..h {
                let row = &plane[y.min(self.height - 1) * self.width..][..self.width];
                data.extend_from_slice(row);
                data.extend(std::iter::repeat_n(row[self.width - 1], w - self.width));
            }
        }
        Image {
            width: w,
            height: h,
            data,
        }
    }

    /// Top-left `width x height` crop.
    pub fn cropped(&self, width: usize, height: usize) -> Result<Image> {
        if width > self.width || height > self.height {
            return Err(ScrError::InvalidValue(format!(
                "crop {width}x{height} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(3 * width * height);
        for c in 0..3 {
            for y in 0..height {
                let start = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[start..start + width]);
            }
        }
        Image::new(width, height, data)
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// PSNR in dB between the 8-bit quantizations of two images.
pub fn psnr(original: &Image, reconstructed: &Image) -> Result<f64> {
    if original.width != reconstructed.width || original.height != reconstructed.height {
        return Err(ScrError::ShapeMismatch {
            expected: vec![original.height, original.width],
            actual: vec![reconstructed.height, reconstructed.width],
        });
    }
    let se: f64 = original
        .data
        .iter()
        .zip(&reconstructed.data)
        .map(|(&a, &b)| {
            let d = f64::from(to_u8(a)) - f64::from(to_u8(b));
            d * d
        })
        .sum();
    let mse = se / original.data.len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / mse).log10()
    })
}
