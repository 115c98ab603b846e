use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{histogram, pad_square, PaddingScheme};
use crate::nn::Label;
use crate::synthdata::Item;

/// Summed histograms of padded crops, one per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelProfile {
    pub scheme: PaddingScheme,
    pub bins: usize,
    pub f1: Vec<u64>,
    pub f2: Vec<u64>,
}

impl LabelProfile {
    pub fn counts(&self, label: Label) -> &[u64] {
        match label {
            Label::F1 => &self.f1,
            Label::F2 => &self.f2,
        }
    }
}

/// Histograms are taken on the padded crop at its native size.
pub fn padding_profile(items: &[Item], scheme: PaddingScheme, bins: usize) -> Result<LabelProfile> {
    if bins == 0 || 256 % bins != 0 {
        return Err(Error::InvalidArgument(format!("bin count {bins} must divide 256")));
    }
    let mut f1 = vec![0u64; bins];
    let mut f2 = vec![0u64; bins];
    for item in items {
        let h = histogram(&pad_square(&item.image, scheme), bins)?;
        let dst = match item.label {
            Label::F1 => &mut f1,
            Label::F2 => &mut f2,
        };
        dst.iter_mut().zip(&h).for_each(|(d, c)| *d += c);
    }
    Ok(LabelProfile { scheme, bins, f1, f2 })
}

/// Columns: bin, count_F1, count_F2.
pub fn write_profile_csv(path: &Path, profile: &LabelProfile) -> Result<()> {
    let fail = |e: csv::Error| Error::Format {
        kind: "csv",
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    w.write_record(["bin", "count_F1", "count_F2"]).map_err(fail)?;
    for (i, (a, b)) in profile.f1.iter().zip(&profile.f2).enumerate() {
        w.write_record([i.to_string(), a.to_string(), b.to_string()]).map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
