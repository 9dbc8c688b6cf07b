/// Luminance weights (ITU-R BT.601).
pub const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {height}x{width}")]
    EmptyDimensions { height: usize, width: usize },
    #[error("channels must be 1 or 3, got {0}")]
    Channels(usize),
    #[error("expected {expected} samples, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("sample {index} is {value}, outside [0, 1]")]
    Range { index: usize, value: f32 },
}

/// Row-major `H x W x C` image with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::EmptyDimensions { height, width });
        }
        if channels != 1 && channels != 3 {
            return Err(ImageError::Channels(channels));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(ImageError::Length {
                expected,
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ImageError::Range { index, value });
        }
        Ok(ImageBuffer {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds an image, clamping every sample into `[0, 1]` (NaN becomes 0).
    pub(crate) fn from_clamped(height: usize, width: usize, channels: usize, mut data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        ImageBuffer {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self, ImageError> {
        ImageBuffer::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[self.index(y, x, c)]
    }

    /// Same shape, new samples.
    pub(crate) fn with_data(&self, data: Vec<f32>) -> Self {
        ImageBuffer::from_clamped(self.height, self.width, self.channels, data)
    }

    /// Per-pixel luminance plane.
    pub fn luminance(&self) -> Vec<f32> {
        match self.channels {
            1 => self.data.clone(),
            _ => self
                .data
                .chunks_exact(3)
                .map(|p| LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2])
                .collect(),
        }
    }

    pub fn to_grayscale(&self) -> ImageBuffer {
        if self.channels == 1 {
            return self.clone();
        }
        ImageBuffer::from_clamped(self.height, self.width, 1, self.luminance())
    }

    /// Bilinear sample at fractional coordinates with edge-clamp padding.
    #[inline]
    pub fn sample_bilinear(&self, y: f64, x: f64, c: usize) -> f32 {
        let maxx = (self.width - 1) as f64;
        let maxy = (self.height - 1) as f64;
        let x = if x.is_finite() { x.clamp(0.0, maxx) } else { 0.0 };
        let y = if y.is_finite() { y.clamp(0.0, maxy) } else { 0.0 };
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        let v00 = self.get(y0, x0, c);
        let v01 = self.get(y0, x1, c);
        let v10 = self.get(y1, x0, c);
        let v11 = self.get(y1, x1, c);
        let top = v00 + (v01 - v00) * fx;
        let bottom = v10 + (v11 - v10) * fx;
        top + (bottom - top) * fy
    }

    /// Bilinear resize with corner-aligned sampling.
    pub fn resize(&self, height: usize, width: usize) -> ImageBuffer {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let sy = if height > 1 {
            (self.height - 1) as f64 / (height - 1) as f64
        } else {
            0.0
        };
        let sx = if width > 1 {
            (self.width - 1) as f64 / (width - 1) as f64
        } else {
            0.0
        };
        let mut data = Vec::with_capacity(height * width * self.channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..self.channels {
                    data.push(self.sample_bilinear(y as f64 * sy, x as f64 * sx, c));
                }
            }
        }
        ImageBuffer::from_clamped(height, width, self.channels, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(ImageBuffer::new(0, 1, 1, vec![]).is_err());
        assert!(ImageBuffer::new(1, 1, 2, vec![0.0; 2]).is_err());
        assert!(ImageBuffer::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageBuffer::new(1, 1, 1, vec![1.5]).is_err());
        assert!(ImageBuffer::new(1, 1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn bilinear_is_exact_on_grid() {
        let img = ImageBuffer::new(2, 2, 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(img.sample_bilinear(1.0, 0.0, 0), 0.3);
        assert_eq!(img.sample_bilinear(-5.0, 9.0, 0), 0.2);
        assert!((img.sample_bilinear(0.5, 0.5, 0) - 0.25).abs() < 1e-6);
    }

    #[test]
    fn resize_keeps_corners() {
        let img = ImageBuffer::new(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let big = img.resize(5, 5);
        assert_eq!(big.get(0, 0, 0), 0.0);
        assert_eq!(big.get(0, 4, 0), 1.0);
        assert_eq!(big.get(4, 4, 0), 0.0);
    }
}
