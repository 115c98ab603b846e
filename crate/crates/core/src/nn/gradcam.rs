use super::model::{CamLayer, ModelState, Mode};
use super::tensor::Tensor;
use super::train::images_to_tensor;
use super::Label;
use crate::error::{Error, Result};
use crate::imaging::ImageU8;

/// Class-activation heatmap for `target` at `layer`, upsampled to the input
/// side and min-max normalised to `[0, 1]`. Row-major, `side * side`.
pub fn gradcam(state: &ModelState, image: &ImageU8, target: Label, layer: CamLayer) -> Result<Vec<f64>> {
    state.check_layer(layer)?;
    let pass = state.forward(&images_to_tensor(&[image]), Mode::Eval)?;
    let mut dlogits = [0.0; 2];
    dlogits[target.index()] = 1.0;
    let grads = state.activation_gradient(&pass.cache, &dlogits, layer)?;
    let acts = pass
        .cache
        .activation(layer)
        .ok_or_else(|| Error::InvalidArgument(format!("no activation for {layer:?}")))?;
    Ok(gradcam_from_maps(acts, &grads, state.spec().input_side))
}

/// `ReLU(sum_k alpha_k A_k)` with `alpha_k` the spatial mean of
/// `dA_k`, for the first sample of the batch.
pub fn gradcam_from_maps(acts: &Tensor, grads: &Tensor, side: usize) -> Vec<f64> {
    assert!(acts.same_shape(grads));
    let plane = acts.plane();
    let a = acts.sample(0);
    let g = grads.sample(0);
    let mut cam = vec![0.0; plane];
    for k in 0..acts.c {
        let alpha = g[k * plane..(k + 1) * plane].iter().sum::<f64>() / plane as f64;
        for (c, v) in cam.iter_mut().zip(&a[k * plane..(k + 1) * plane]) {
            *c += alpha * v;
        }
    }
    cam.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut up = upsample(&cam, acts.h, acts.w, side);
    normalize(&mut up);
    up
}

fn upsample(map: &[f64], h: usize, w: usize, side: usize) -> Vec<f64> {
    let sy_scale = h as f64 / side as f64;
    let sx_scale = w as f64 / side as f64;
    let mut out = Vec::with_capacity(side * side);
    for dy in 0..side {
        let sy = ((dy as f64 + 0.5) * sy_scale - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for dx in 0..side {
            let sx = ((dx as f64 + 0.5) * sx_scale - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            let top = map[y0 * w + x0] * (1.0 - fx) + map[y0 * w + x1] * fx;
            let bottom = map[y1 * w + x0] * (1.0 - fx) + map[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Min-max to `[0, 1]`. An all-zero map stays zero; any other constant map
/// becomes all ones.
fn normalize(map: &mut [f64]) {
    let max = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = map.iter().copied().fold(f64::INFINITY, f64::min);
    if max <= 0.0 {
        map.fill(0.0);
    } else if max - min <= f64::EPSILON * max {
        map.fill(1.0);
    } else {
        map.iter_mut().for_each(|v| *v = (*v - min) / (max - min));
    }
}
