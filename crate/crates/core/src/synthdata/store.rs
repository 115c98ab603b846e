use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Item, TemporalDataset};
use crate::error::{Error, Result};
use crate::imaging::{read_ppm, write_ppm};
use crate::nn::Label;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub file: String,
    pub label: Label,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    pub items: Vec<ManifestItem>,
}

/// Writes `<root>/<name>/img_<idx>.ppm` and `<root>/<name>/manifest.json`.
pub fn save_dataset(ds: &TemporalDataset, root: &Path) -> Result<Manifest> {
    let dir = root.join(&ds.name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut items = Vec::with_capacity(ds.len());
    for (idx, item) in ds.items.iter().enumerate() {
        let file = format!("img_{idx:05}.ppm");
        write_ppm(&dir.join(&file), &item.image)?;
        items.push(ManifestItem {
            file,
            label: item.label,
            timestamp: item.timestamp,
        });
    }
    let manifest = Manifest {
        name: ds.name.clone(),
        seed: ds.seed,
        items,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn load_dataset(root: &Path, name: &str) -> Result<TemporalDataset> {
    let dir = root.join(name);
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    let items = manifest
        .items
        .iter()
        .map(|m| {
            Ok(Item {
                image: read_ppm(&dir.join(&m.file))?,
                label: m.label,
                timestamp: m.timestamp,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ds = TemporalDataset {
        name: manifest.name,
        seed: manifest.seed,
        items,
    };
    ds.validate()?;
    Ok(ds)
}
