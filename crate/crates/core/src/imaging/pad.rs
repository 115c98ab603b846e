use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::color::{lab_to_rgb, rgb_to_lab};
use super::{ImageU8, CHANNELS};
use crate::error::Error;

/// Fill rule for the band added when a rectangular crop is squared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaddingScheme {
    Zero,
    RgbMean,
    LabMean,
    White,
    Grey,
    Reflection,
}

impl PaddingScheme {
    pub const ALL: [PaddingScheme; 6] = [
        PaddingScheme::Zero,
        PaddingScheme::RgbMean,
        PaddingScheme::LabMean,
        PaddingScheme::White,
        PaddingScheme::Grey,
        PaddingScheme::Reflection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PaddingScheme::Zero => "zero",
            PaddingScheme::RgbMean => "rgb-mean",
            PaddingScheme::LabMean => "lab-mean",
            PaddingScheme::White => "white",
            PaddingScheme::Grey => "grey",
            PaddingScheme::Reflection => "reflection",
        }
    }

    /// Constant fill colour for `img`, or `None` for reflection.
    pub fn fill_value(self, img: &ImageU8) -> Option<[u8; 3]> {
        match self {
            PaddingScheme::Zero => Some([0, 0, 0]),
            PaddingScheme::White => Some([255, 255, 255]),
            PaddingScheme::Grey => Some([128, 128, 128]),
            PaddingScheme::RgbMean => Some(rgb_mean(img)),
            PaddingScheme::LabMean => Some(lab_mean(img)),
            PaddingScheme::Reflection => None,
        }
    }
}

impl fmt::Display for PaddingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PaddingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PaddingScheme::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown padding scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadAxis {
    /// Rows are added above and below (H < W).
    Vertical,
    /// Columns are added left and right (W < H).
    Horizontal,
    /// Already square.
    None,
}

/// Where the crop lands inside its square canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadGeometry {
    pub pad_top: usize,
    pub pad_bottom: usize,
    pub axis: PadAxis,
}

impl PadGeometry {
    pub fn for_dims(height: usize, width: usize) -> Self {
        let diff = height.abs_diff(width);
        let pad_top = diff / 2;
        let axis = match height.cmp(&width) {
            std::cmp::Ordering::Less => PadAxis::Vertical,
            std::cmp::Ordering::Greater => PadAxis::Horizontal,
            std::cmp::Ordering::Equal => PadAxis::None,
        };
        Self {
            pad_top,
            pad_bottom: diff - pad_top,
            axis,
        }
    }

    pub fn total(&self) -> usize {
        self.pad_top + self.pad_bottom
    }
}

/// Symmetric-extension fold of a signed offset onto `[0, len)`.
///
/// The sequence is periodic with period `2 * len`: `..., 1, 0 | 0, 1, ..., len-1 | len-1, ...`.
/// Offsets more than one period away fold repeatedly.
pub fn reflect_index(offset: i64, len: usize) -> usize {
    assert!(len >= 1, "reflect_index needs a non-empty extent");
    let period = 2 * len as i64;
    let m = offset.rem_euclid(period);
    if m < len as i64 {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Pads the shorter axis of `img` symmetrically so the result is `S x S`
/// with `S = max(H, W)`. The crop is copied verbatim into the centre band.
pub fn pad_square(img: &ImageU8, scheme: PaddingScheme) -> ImageU8 {
    let (h, w) = (img.height(), img.width());
    let geom = PadGeometry::for_dims(h, w);
    if geom.axis == PadAxis::None {
        return img.clone();
    }
    let side = h.max(w);
    let fill = scheme.fill_value(img);
    let mut data = Vec::with_capacity(side * side * CHANNELS);
    match geom.axis {
        PadAxis::Vertical => {
            for y in 0..side {
                let offset = y as i64 - geom.pad_top as i64;
                let inside = (0..h as i64).contains(&offset);
                match (inside, fill) {
                    (true, _) => data.extend_from_slice(img.row(offset as usize)),
                    (false, Some(rgb)) => {
                        for _ in 0..w {
                            data.extend_from_slice(&rgb);
                        }
                    }
                    (false, None) => data.extend_from_slice(img.row(reflect_index(offset, h))),
                }
            }
        }
        PadAxis::Horizontal => {
            for y in 0..side {
                for x in 0..side {
                    let offset = x as i64 - geom.pad_top as i64;
                    let inside = (0..w as i64).contains(&offset);
                    let px = match (inside, fill) {
                        (true, _) => img.pixel(y, offset as usize),
                        (false, Some(rgb)) => rgb,
                        (false, None) => img.pixel(y, reflect_index(offset, w)),
                    };
                    data.extend_from_slice(&px);
                }
            }
        }
        PadAxis::None => unreachable!(),
    }
    ImageU8::new(side, side, data).expect("padded canvas has consistent dimensions")
}

fn rgb_mean(img: &ImageU8) -> [u8; 3] {
    let n = (img.height() * img.width()) as u64;
    let sums = img.channel_sums();
    // round half away from zero on non-negative integers
    sums.map(|s| ((2 * s + n) / (2 * n)) as u8)
}

fn lab_mean(img: &ImageU8) -> [u8; 3] {
    let mut acc = [0.0f64; 3];
    for px in img.data().chunks_exact(CHANNELS) {
        let lab = rgb_to_lab([px[0], px[1], px[2]]);
        acc[0] += lab.l;
        acc[1] += lab.a;
        acc[2] += lab.b;
    }
    let n = (img.height() * img.width()) as f64;
    lab_to_rgb(super::Lab {
        l: acc[0] / n,
        a: acc[1] / n,
        b: acc[2] / n,
    })
}
