use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{Gaussian, GenConfig};
use super::DatasetId;
use crate::imaging::{to_u8, ImageU8};
use crate::nn::Label;

const BACKGROUND: [f64; 3] = [206.0, 199.0, 186.0];
const INK: [f64; 3] = [38.0, 40.0, 58.0];
const DOT_PRESENCE: f64 = 0.75;

fn draw<R: Rng + ?Sized>(g: Gaussian, rng: &mut R) -> f64 {
    if g.sd == 0.0 {
        return g.mean;
    }
    Normal::new(g.mean, g.sd).expect("finite sd").sample(rng)
}

pub(super) fn render<R: Rng + ?Sized>(cfg: &GenConfig, id: DatasetId, label: Label, rng: &mut R) -> ImageU8 {
    let dist = cfg.pattern(id, label);
    let height = rng.random_range(cfg.crop_height[0]..=cfg.crop_height[1]);
    let aspect = rng.random_range(cfg.aspect_ratio[0]..=cfg.aspect_ratio[1]);
    let width = ((height as f64 * aspect).round() as usize).max(height + 1);
    let pitch = draw(dist.pitch, rng).max(2.0);
    let radius = draw(dist.radius, rng).clamp(0.3, pitch / 2.0);
    let noise = draw(dist.noise, rng).max(0.0);
    let gain = rng.random_range(cfg.gain[0]..=cfg.gain[1]);
    let (ox, oy) = (rng.random_range(0.0..pitch), rng.random_range(0.0..pitch));

    let cols = (width as f64 / pitch).ceil() as usize + 2;
    let rows = (height as f64 / pitch).ceil() as usize + 2;
    let present: Vec<bool> = (0..rows * cols).map(|_| rng.random_bool(DOT_PRESENCE)).collect();

    // ink coverage per pixel from the nearest grid node, anti-aliased
    let mut cover = vec![0.0f64; height * width];
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (x as f64 + 0.5 - ox, y as f64 + 0.5 - oy);
            let (gi, gj) = ((fy / pitch).round(), (fx / pitch).round());
            let (ri, cj) = (gi as i64 + 1, gj as i64 + 1);
            if ri < 0 || cj < 0 || ri as usize >= rows || cj as usize >= cols {
                continue;
            }
            if !present[ri as usize * cols + cj as usize] {
                continue;
            }
            let d = ((fx - gj * pitch).powi(2) + (fy - gi * pitch).powi(2)).sqrt();
            cover[y * width + x] = (radius + 0.5 - d).clamp(0.0, 1.0);
        }
    }
    let cover = box_blur(&cover, height, width, cfg.blur_radius);

    let jitter = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("finite noise");
    let mut data = Vec::with_capacity(height * width * 3);
    for &c in &cover {
        for ch in 0..3 {
            let v = gain * (BACKGROUND[ch] * (1.0 - c) + INK[ch] * c);
            let n = if noise > 0.0 { jitter.sample(rng) } else { 0.0 };
            data.push(to_u8(v + n));
        }
    }
    ImageU8::new(height, width, data).expect("positive dimensions")
}

/// Separable box blur with edge clamping.
fn box_blur(src: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    if r == 0 {
        return src.to_vec();
    }
    let k = (2 * r + 1) as f64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let s: f64 = (-(r as i64)..=r as i64)
                .map(|d| src[y * w + clamp(x as i64 + d, w)])
                .sum();
            tmp[y * w + x] = s / k;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let s: f64 = (-(r as i64)..=r as i64)
                .map(|d| tmp[clamp(y as i64 + d, h) * w + x])
                .sum();
            out[y * w + x] = s / k;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_preserves_constants() {
        let src = vec![0.4; 12];
        assert!(box_blur(&src, 3, 4, 1).iter().all(|&v| (v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn blur_radius_zero_is_identity() {
        let src: Vec<f64> = (0..6).map(f64::from).collect();
        assert_eq!(box_blur(&src, 2, 3, 0), src);
    }
}
