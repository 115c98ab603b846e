//! Explanation reports: mean-pixel/confidence tables over correct
//! predictions, per-label pixel histograms of padded inputs, and GradCAM
//! image exports.

mod cam;
mod profile;
mod quant;

pub use cam::{colorize, gradcam_report, overlay, GradcamEntry, GradcamIndex, Sample, INDEX_FILE};
pub use profile::{padding_profile, write_profile_csv, LabelProfile};
pub use quant::{quant_table, write_quant_csv, QuantRow, TestSet};
