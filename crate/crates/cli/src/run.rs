//! Run directories: content-addressed location, writer lock, top-level
//! manifest and log file.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use dcf_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.json";
pub const LOG: &str = "run.log";
pub const FAILED: &str = "FAILED";
const LOCK: &str = ".lock";

/// Hex prefix of SHA-256 over the canonical config JSON with the output
/// directory blanked, so relocating outputs keeps the id.
pub fn run_id(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.output_dir = PathBuf::new();
    let json = serde_json::to_vec(&c).expect("config serializes");
    let digest = Sha256::digest(&json);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: String,
    pub log: String,
    /// Dataset manifests the run read, by dataset name.
    pub datasets: BTreeMap<String, PathBuf>,
    pub stages: BTreeMap<String, StageEntry>,
}

pub struct RunDir {
    pub id: String,
    pub path: PathBuf,
    _lock: Lock,
}

struct Lock(PathBuf);

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

impl RunDir {
    /// Creates (or reopens) the run directory for `cfg`, takes the writer
    /// lock and persists the effective config.
    pub fn open(cfg: &RunConfig) -> Result<Self> {
        let id = run_id(cfg);
        let path = cfg.output_dir.join(&id);
        fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
        let lock_path = path.join(LOCK);
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock_path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => Error::InvalidArgument(format!(
                    "run directory {} is locked by another process (remove {} if stale)",
                    path.display(),
                    lock_path.display()
                )),
                _ => Error::io(&lock_path, e),
            })?;
        let _ = writeln!(f, "{}", std::process::id());
        let lock = Lock(lock_path);
        write_json(&path.join(CONFIG), cfg)?;
        let run = Self { id, path, _lock: lock };
        run.update_manifest(|m| {
            m.run_id = run.id.clone();
            m.config = CONFIG.into();
            m.log = LOG.into();
        })?;
        Ok(run)
    }

    pub fn update_manifest(&self, f: impl FnOnce(&mut RunManifest)) -> Result<()> {
        let mut m = read_manifest(&self.path).unwrap_or_default();
        f(&mut m);
        write_json(&self.path.join(MANIFEST), &m)
    }

    pub fn stage_dir(&self, stage: &str) -> Result<PathBuf> {
        let dir = self.path.join(stage);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let failed = dir.join(FAILED);
        if failed.exists() {
            fs::remove_file(&failed).map_err(|e| Error::io(&failed, e))?;
        }
        Ok(dir)
    }

    /// Relative path of `p` inside the run directory.
    pub fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.path).unwrap_or(p).to_string_lossy().replace('\\', "/")
    }

    pub fn set_stage(&self, name: &str, entry: StageEntry) -> Result<()> {
        self.update_manifest(|m| {
            m.stages.insert(name.to_string(), entry);
        })
    }

    /// Writes the `FAILED` marker and records the failure in the manifest.
    pub fn fail_stage(&self, name: &str, err: &Error, artifacts: Vec<String>) -> Result<()> {
        let marker = self.path.join(name).join(FAILED);
        fs::write(&marker, format!("{err}\n")).map_err(|e| Error::io(&marker, e))?;
        let mut artifacts = artifacts;
        artifacts.push(self.rel(&marker));
        self.set_stage(
            name,
            StageEntry {
                status: Status::Failed,
                chosen: None,
                error: Some(err.to_string()),
                artifacts,
            },
        )
    }
}

pub fn read_manifest(run_dir: &Path) -> Result<RunManifest> {
    read_json(&run_dir.join(MANIFEST))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        kind: "json",
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Routes tracing output to `path` (appending). Only the first call in a
/// process installs the subscriber.
pub fn init_logging(path: &Path) -> Result<()> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let _ = tracing_subscriber::fmt()
        .with_writer(Mutex::new(file))
        .with_ansi(false)
        .with_max_level(tracing::Level::INFO)
        .try_init();
    Ok(())
}

/// Appends one JSON line per record.
pub struct JsonLines(File);

impl JsonLines {
    pub fn create(path: &Path) -> Result<Self> {
        File::create(path).map(Self).map_err(|e| Error::io(path, e))
    }

    pub fn push<T: Serialize>(&mut self, value: &T) -> std::io::Result<()> {
        let line = serde_json::to_string(value).expect("record serializes");
        writeln!(self.0, "{line}")?;
        self.0.flush()
    }
}
