//! 8-bit RGB rasters and the operations applied to them before they reach
//! the classifier: square padding, colour conversion, resampling, rotation
//! augmentation and per-image pixel statistics.

mod color;
mod pad;
mod pnm;
mod resample;
mod stats;

pub use color::{lab_to_rgb, rgb_to_lab, Lab};
pub use pad::{pad_square, reflect_index, PadAxis, PadGeometry, PaddingScheme};
pub use pnm::{read_pgm, read_ppm, write_pgm, write_ppm};
pub use resample::{random_rotation, resize_bilinear, rotate, MAX_ROTATION_DEGREES};
pub use stats::{histogram, mean_pixel};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// Row-major, interleaved RGB image with 8 bits per channel.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ImageU8 {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageU8 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageU8")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish_non_exhaustive()
    }
}

impl ImageU8 {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {height}x{width}"
            )));
        }
        let expected = height * width * CHANNELS;
        if data.len() != expected {
            return Err(Error::InvalidImage(format!(
                "{height}x{width}x3 image needs {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {height}x{width}"
            )));
        }
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(height * width * CHANNELS)
            .collect();
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub(crate) fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Self {
        assert!(height > 0 && width > 0);
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.height == self.width
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * CHANNELS;
        self.data[i..i + CHANNELS].copy_from_slice(&rgb);
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u8] {
        let stride = self.width * CHANNELS;
        &self.data[y * stride..(y + 1) * stride]
    }

    /// Per-channel sums over all pixels.
    pub fn channel_sums(&self) -> [u64; 3] {
        let mut sums = [0u64; 3];
        for px in self.data.chunks_exact(CHANNELS) {
            for c in 0..CHANNELS {
                sums[c] += u64::from(px[c]);
            }
        }
        sums
    }

    /// Converts to planar (CHW) reals, mapping 8-bit values through
    /// `(v / 255 - mean) / std`.
    pub fn to_planar(&self, mean: f64, std: f64, out: &mut [f64]) {
        let plane = self.height * self.width;
        assert_eq!(out.len(), plane * CHANNELS);
        for (p, px) in self.data.chunks_exact(CHANNELS).enumerate() {
            for c in 0..CHANNELS {
                out[c * plane + p] = (f64::from(px[c]) / 255.0 - mean) / std;
            }
        }
    }
}

/// Rounds half away from zero and saturates to the 8-bit range.
#[inline]
pub(crate) fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}
