use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{CellKey, ExperimentConfig};
use crate::error::{Error, Result};
use crate::probe::DelaySweep;
use crate::segmentation::DialogueStats;
use crate::similarity::{CkaCurve, CurveStats};

pub const STORE_MANIFEST: &str = "store.json";
pub const CELL_RESULT: &str = "cell.json";
pub const STORE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellStatus {
    pub state: CellState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub numeric_fault: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub format_version: u32,
    pub toolkit_version: String,
    pub config: ExperimentConfig,
    /// Seconds since the Unix epoch; absent in deterministic runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
    pub cells: BTreeMap<String, CellStatus>,
}

impl StoreManifest {
    pub fn new(config: ExperimentConfig, deterministic: bool) -> Self {
        let created_unix = (!deterministic).then(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        });
        Self {
            format_version: STORE_FORMAT_VERSION,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            created_unix,
            cells: BTreeMap::new(),
        }
    }

    pub fn read(root: &Path) -> Result<Self> {
        let path = root.join(STORE_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        write_json_atomic(&root.join(STORE_MANIFEST), self)
    }

    pub fn is_done(&self, id: &str) -> bool {
        self.cells
            .get(id)
            .is_some_and(|s| s.state == CellState::Done)
    }
}

/// Per-dialogue summary, traceable to its trace directory and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub seed: u64,
    /// Relative to the store root.
    pub trace_dir: String,
    pub stats: DialogueStats,
    pub holds: usize,
    pub non_holds: usize,
    pub excluded: usize,
    pub peak_lag_frames: Option<i64>,
    pub peak_value: Option<f64>,
    pub baseline_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub id: String,
    pub key: CellKey,
    pub dialogues: Vec<DialogueRecord>,
    /// One curve per dialogue, in `dialogues` order.
    pub curves: Vec<CkaCurve>,
    pub cka: CurveStats,
    pub probes: Vec<DelaySweep>,
}

impl CellResult {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
    }
}

/// A grid run on disk: the manifest plus every completed cell, in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsStore {
    pub root: PathBuf,
    pub manifest: StoreManifest,
    pub cells: Vec<CellResult>,
}

impl ResultsStore {
    pub fn open(root: &Path) -> Result<Self> {
        let manifest = StoreManifest::read(root)?;
        let mut cells = Vec::new();
        for key in manifest.config.grid.cells() {
            let id = key.id();
            if manifest.is_done(&id) {
                cells.push(CellResult::read(&cell_dir(root, &id).join(CELL_RESULT))?);
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            cells,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.manifest.config
    }

    /// Cells of the grid without a completed result.
    pub fn missing_cells(&self) -> Vec<String> {
        self.config()
            .grid
            .cells()
            .iter()
            .map(CellKey::id)
            .filter(|id| !self.manifest.is_done(id))
            .collect()
    }
}

pub fn cell_dir(root: &Path, id: &str) -> PathBuf {
    root.join("cells").join(id)
}

/// Write to a sibling temporary file, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = parent.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Manifest(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
