use std::fs;
use std::path::{Path, PathBuf};

use super::{PipelineError, Result, RunResult};

/// Environment variable naming the data root; runs live under `<root>/runs`.
pub const DATA_DIR_ENV: &str = "TABLELIFT_DATA_DIR";

/// One JSON document per run, keyed by run id.
#[derive(Debug, Clone)]
pub struct RunStore {
    dir: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn store_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Store(format!("{}: {e}", path.display()))
}

impl RunStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let dir = root.as_ref().join("runs");
        fs::create_dir_all(&dir).map_err(|e| store_err(&dir, e))?;
        Ok(Self { dir })
    }

    /// Root from `TABLELIFT_DATA_DIR`, else `./tablelift-data`.
    pub fn from_env() -> Result<Self> {
        let root = std::env::var_os(DATA_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("tablelift-data"));
        Self::open(root)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> Result<PathBuf> {
        if !valid_id(id) {
            return Err(PipelineError::Store(format!("invalid run id '{id}'")));
        }
        Ok(self.dir.join(format!("{id}.json")))
    }

    /// Writes through a temporary file so readers never see a partial document.
    pub fn save<T: serde::Serialize>(&self, id: &str, record: &T) -> Result<PathBuf> {
        let path = self.path(id)?;
        let tmp = self.dir.join(format!(".{id}.json.tmp"));
        let body = serde_json::to_vec_pretty(record).map_err(|e| store_err(&path, e))?;
        fs::write(&tmp, body).map_err(|e| store_err(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| store_err(&path, e))?;
        Ok(path)
    }

    pub fn load<T: serde::de::DeserializeOwned>(&self, id: &str) -> Result<Option<T>> {
        let path = self.path(id)?;
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| store_err(&path, e)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(store_err(&path, e)),
        }
    }

    pub fn load_run(&self, id: &str) -> Result<Option<RunResult>> {
        self.load(id)
    }

    /// Stored run ids, sorted.
    pub fn list(&self) -> Result<Vec<String>> {
        let mut ids: Vec<String> = fs::read_dir(&self.dir)
            .map_err(|e| store_err(&self.dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().to_string();
                name.strip_suffix(".json")
                    .filter(|s| valid_id(s))
                    .map(str::to_string)
            })
            .collect();
        ids.sort();
        Ok(ids)
    }
}
