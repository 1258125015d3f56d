//! Planar image buffers shared by the codecs, the JSCC model and the tasks.

use crate::error::{Error, Result};

pub const MIN_IMAGE_DIM: usize = 8;

/// Channel-planar image with values in `[0, 1]`. Channel 0 is the visual
/// plane; channel 1, when present, is thermal.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    /// Builds an image, clamping every value into `[0, 1]`.
    pub fn new(height: usize, width: usize, channels: usize, mut data: Vec<f32>) -> Result<Self> {
        if height < MIN_IMAGE_DIM || width < MIN_IMAGE_DIM {
            return Err(Error::invalid(format!("image {height}x{width} is below the 8x8 minimum")));
        }
        if !(1..=2).contains(&channels) {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "expected {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
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

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn sample_count(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v.clamp(0.0, 1.0);
    }

    /// Single-channel copy of plane `c`.
    pub fn channel_image(&self, c: usize) -> ImageTensor {
        Self { height: self.height, width: self.width, channels: 1, data: self.plane(c).to_vec() }
    }

    /// Stacks single-plane images into one multi-channel image.
    pub fn stack(planes: &[&ImageTensor]) -> Result<ImageTensor> {
        let first = planes.first().ok_or_else(|| Error::invalid("no planes to stack"))?;
        let mut data = Vec::new();
        for p in planes {
            if p.height != first.height || p.width != first.width {
                return Err(Error::invalid("planes differ in size"));
            }
            data.extend_from_slice(&p.data);
        }
        Self::new(first.height, first.width, data.len() / (first.height * first.width), data)
    }

    /// Rectangular window of all channels; coordinates must lie inside.
    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<ImageTensor> {
        if y0 + height > self.height || x0 + width > self.width {
            return Err(Error::invalid("crop window outside image"));
        }
        let mut data = Vec::with_capacity(height * width * self.channels);
        for c in 0..self.channels {
            for y in y0..y0 + height {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + width]);
            }
        }
        Self::new(height, width, self.channels, data)
    }

    /// Replicates the last row/column so both sides become multiples of `block`.
    pub fn pad_to_multiple(&self, block: usize) -> ImageTensor {
        let h = self.height.div_ceil(block) * block;
        let w = self.width.div_ceil(block) * block;
        if h == self.height && w == self.width {
            return self.clone();
        }
        let mut data = Vec::with_capacity(h * w * self.channels);
        for c in 0..self.channels {
            for y in 0..h {
                for x in 0..w {
                    data.push(self.get(c, y.min(self.height - 1), x.min(self.width - 1)));
                }
            }
        }
        Self { height: h, width: w, channels: self.channels, data }
    }

    /// Mean of each `factor` x `factor` cell. Both sides must divide evenly.
    pub fn box_downsample(&self, factor: usize) -> Result<ImageTensor> {
        if factor == 0 || self.height % factor != 0 || self.width % factor != 0 {
            return Err(Error::invalid(format!("cannot downsample {}x{} by {factor}", self.height, self.width)));
        }
        let (h, w) = (self.height / factor, self.width / factor);
        let norm = (factor * factor) as f32;
        let mut data = Vec::with_capacity(h * w * self.channels);
        for c in 0..self.channels {
            for y in 0..h {
                for x in 0..w {
                    let mut sum = 0.0;
                    for dy in 0..factor {
                        for dx in 0..factor {
                            sum += self.get(c, y * factor + dy, x * factor + dx);
                        }
                    }
                    data.push(sum / norm);
                }
            }
        }
        Self::new(h, w, self.channels, data)
    }

    /// Pixel replication by `factor` along both axes.
    pub fn upsample_nearest(&self, factor: usize) -> Result<ImageTensor> {
        if factor == 0 {
            return Err(Error::invalid("upsampling factor must be positive"));
        }
        let (h, w) = (self.height * factor, self.width * factor);
        let mut data = Vec::with_capacity(h * w * self.channels);
        for c in 0..self.channels {
            for y in 0..h {
                for x in 0..w {
                    data.push(self.get(c, y / factor, x / factor));
                }
            }
        }
        Self::new(h, w, self.channels, data)
    }

    /// Rounds every value to the nearest multiple of 1/255.
    pub fn quantize_8bit(&self) -> ImageTensor {
        let data = self.data.iter().map(|v| (v * 255.0).round() / 255.0).collect();
        Self { data, ..*self }
    }
}
