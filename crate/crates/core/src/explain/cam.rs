use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{pad_square, resize_bilinear, to_u8, write_pgm, write_ppm, ImageU8, PaddingScheme};
use crate::nn::{gradcam, predict, CamLayer, Label, ModelState};

pub const INDEX_FILE: &str = "index.json";

const GREY: [f64; 3] = [128.0, 128.0, 128.0];
const RED: [f64; 3] = [255.0, 0.0, 0.0];

pub struct Sample<'a> {
    pub id: String,
    pub image: &'a ImageU8,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcamEntry {
    pub sample: String,
    pub true_label: Label,
    pub predicted_label: Label,
    pub confidence: f64,
    pub input: String,
    pub heatmap: String,
    pub overlay: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcamIndex {
    pub scheme: PaddingScheme,
    /// Residual block (0-based) whose output the maps are taken from.
    pub block: usize,
    pub entries: Vec<GradcamEntry>,
}

/// Grey-to-red ramp scaled by intensity; `h = 0` is black.
pub fn colorize(h: f64) -> [f64; 3] {
    let h = h.clamp(0.0, 1.0);
    std::array::from_fn(|c| h * ((1.0 - h) * GREY[c] + h * RED[c]))
}

/// `0.5 * input + 0.5 * colorize(heatmap)`, per pixel.
pub fn overlay(input: &ImageU8, heatmap: &[f64]) -> ImageU8 {
    assert_eq!(heatmap.len(), input.height() * input.width());
    let data = input
        .data()
        .chunks_exact(3)
        .zip(heatmap)
        .flat_map(|(px, &h)| {
            let col = colorize(h);
            [0, 1, 2].map(|c| to_u8(0.5 * px[c] as f64 + 0.5 * col[c]))
        })
        .collect();
    ImageU8::new(input.height(), input.width(), data).expect("same dimensions")
}

/// Writes, per sample, the model input, its heatmap for the predicted
/// class at the last residual block, and an overlay, plus an index file.
pub fn gradcam_report(state: &ModelState, samples: &[Sample], scheme: PaddingScheme, out_dir: &Path) -> Result<GradcamIndex> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let side = state.spec().input_side;
    let block = state.depth() - 1;
    let rendered: Vec<Result<(ImageU8, Vec<f64>, Label, f64)>> = samples
        .par_iter()
        .map(|s| {
            let input = resize_bilinear(&pad_square(s.image, scheme), side)?;
            let pred = predict(state, &input)?;
            let map = gradcam(state, &input, pred.label, CamLayer::Block(block))?;
            Ok((input, map, pred.label, pred.confidence))
        })
        .collect();

    let mut entries = Vec::with_capacity(samples.len());
    for (s, r) in samples.iter().zip(rendered) {
        let (input, map, predicted, confidence) = r?;
        let name = |suffix: &str| format!("{}_{suffix}", s.id);
        let file = |n: &str| -> PathBuf { out_dir.join(n) };
        let (inp, heat, over) = (name("input.ppm"), name("heatmap.pgm"), name("overlay.ppm"));
        write_ppm(&file(&inp), &input)?;
        let grey: Vec<u8> = map.iter().map(|&h| to_u8(255.0 * h)).collect();
        write_pgm(&file(&heat), side, side, &grey)?;
        write_ppm(&file(&over), &overlay(&input, &map))?;
        entries.push(GradcamEntry {
            sample: s.id.clone(),
            true_label: s.label,
            predicted_label: predicted,
            confidence,
            input: inp,
            heatmap: heat,
            overlay: over,
        });
    }
    let index = GradcamIndex { scheme, block, entries };
    let path = out_dir.join(INDEX_FILE);
    let text = serde_json::to_string_pretty(&index).expect("index serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(index)
}
