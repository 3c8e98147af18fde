use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::can::parse_can_log;
use crate::data::frames::parse_frames_csv;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// One recording: a frame index and a CAN log, plus dataset metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingManifest {
    /// Relative paths are resolved against `base_dir`.
    pub frames_csv: PathBuf,
    pub can_csv: PathBuf,
    pub dataset_name: String,
    pub max_steering_rad: f64,
    #[serde(default)]
    pub segment_id: Option<String>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RecordingManifest {
    /// Reads a manifest JSON file, or `manifest.json` inside a directory.
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let mut manifest: RecordingManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: file.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        manifest.base_dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn frames_csv_path(&self) -> PathBuf {
        self.base_dir.join(&self.frames_csv)
    }

    pub fn can_csv_path(&self) -> PathBuf {
        self.base_dir.join(&self.can_csv)
    }

    /// Checks that both files exist and parse with strictly increasing
    /// timestamps, and that every referenced frame exists.
    pub fn validate(&self) -> Result<()> {
        if !(self.max_steering_rad > 0.0 && self.max_steering_rad.is_finite()) {
            return Err(Error::Config(format!(
                "max_steering_rad must be positive, got {}",
                self.max_steering_rad
            )));
        }
        parse_can_log(&self.can_csv_path())?;
        for frame in parse_frames_csv(&self.frames_csv_path(), &self.base_dir)? {
            if !frame.path.is_file() {
                return Err(Error::io(
                    &frame.path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "frame file missing"),
                ));
            }
        }
        Ok(())
    }
}

/// Finds every manifest under `root`: the directory itself or its direct
/// subdirectories, sorted by path.
pub fn discover_manifests(root: &Path) -> Result<Vec<RecordingManifest>> {
    if root.is_file() {
        return Ok(vec![RecordingManifest::load(root)?]);
    }
    if root.join(MANIFEST_FILE).is_file() {
        return Ok(vec![RecordingManifest::load(root)?]);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Config(format!("no {MANIFEST_FILE} found under {}", root.display())));
    }
    dirs.iter().map(|d| RecordingManifest::load(d)).collect()
}
