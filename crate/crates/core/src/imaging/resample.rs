use rand::Rng;

use super::{to_u8, ImageU8, CHANNELS};
use crate::error::{Error, Result};

/// Half-range of the augmentation rotation angle, in degrees.
pub const MAX_ROTATION_DEGREES: f64 = 15.0;

#[inline]
fn bilinear(img: &ImageU8, sy: f64, sx: f64) -> [f64; 3] {
    let (h, w) = (img.height(), img.width());
    let sy = sy.clamp(0.0, (h - 1) as f64);
    let sx = sx.clamp(0.0, (w - 1) as f64);
    let y0 = sy.floor() as usize;
    let x0 = sx.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = sy - y0 as f64;
    let fx = sx - x0 as f64;
    let (p00, p01, p10, p11) = (
        img.pixel(y0, x0),
        img.pixel(y0, x1),
        img.pixel(y1, x0),
        img.pixel(y1, x1),
    );
    [0, 1, 2].map(|c| {
        let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p01[c]) * fx;
        let bottom = f64::from(p10[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Scales a square image to `side x side` with half-pixel-centre bilinear
/// sampling and edge clamping.
pub fn resize_bilinear(img: &ImageU8, side: usize) -> Result<ImageU8> {
    if !img.is_square() {
        return Err(Error::InvalidImage(format!(
            "resize expects a square image, got {}x{}",
            img.height(),
            img.width()
        )));
    }
    if side == 0 {
        return Err(Error::InvalidArgument("resize side must be positive".into()));
    }
    if side == img.height() {
        return Ok(img.clone());
    }
    let scale = img.height() as f64 / side as f64;
    let coords: Vec<f64> = (0..side).map(|d| (d as f64 + 0.5) * scale - 0.5).collect();
    let mut data = Vec::with_capacity(side * side * CHANNELS);
    for &sy in &coords {
        for &sx in &coords {
            data.extend(bilinear(img, sy, sx).map(to_u8));
        }
    }
    ImageU8::new(side, side, data)
}

/// Rotates counter-clockwise by `degrees` about the image centre. Samples
/// falling outside the source are clamped to the nearest edge pixel.
pub fn rotate(img: &ImageU8, degrees: f64) -> ImageU8 {
    let (h, w) = (img.height(), img.width());
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    ImageU8::from_fn(h, w, |y, x| {
        let dy = y as f64 - cy;
        let dx = x as f64 - cx;
        // inverse mapping: rotate the destination offset back by -angle
        let sx = cos * dx - sin * dy + cx;
        let sy = sin * dx + cos * dy + cy;
        bilinear(img, sy, sx).map(to_u8)
    })
}

/// Rotation by an angle drawn uniformly from `[-15, 15]` degrees.
pub fn random_rotation<R: Rng + ?Sized>(img: &ImageU8, rng: &mut R) -> ImageU8 {
    let angle = rng.random_range(-MAX_ROTATION_DEGREES..=MAX_ROTATION_DEGREES);
    rotate(img, angle)
}
