//! Datasets stored as UCR files in a directory, keyed by file stem.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use cobras_ts::{load_ucr, parse_ucr, DatasetF64, EngineConfig, EngineError, Prepared, PreparedF64};

use super::ApiError;

const EXTENSIONS: [&str; 4] = ["txt", "tsv", "csv", "ucr"];

/// Ids double as file names, so they are restricted to a safe alphabet.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

#[derive(Debug)]
pub struct DatasetRegistry {
    dir: PathBuf,
    /// Most recently prepared form of each dataset, so sessions on the same
    /// data share the DTW matrix.
    prepared: Mutex<HashMap<String, Arc<PreparedF64>>>,
}

impl DatasetRegistry {
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            prepared: Mutex::new(HashMap::new()),
        })
    }

    fn path_of(&self, id: &str) -> Option<PathBuf> {
        if !valid_id(id) {
            return None;
        }
        EXTENSIONS
            .iter()
            .map(|ext| self.dir.join(format!("{id}.{ext}")))
            .find(|p| p.is_file())
    }

    pub fn load(&self, id: &str) -> Result<DatasetF64, ApiError> {
        let path = self
            .path_of(id)
            .ok_or_else(|| ApiError::NotFound(format!("unknown dataset {id:?}")))?;
        load_ucr(&path, None).map_err(|e| ApiError::Internal(e.to_string()))
    }

    /// The dataset prepared for `config`, reusing cached matrices when possible.
    pub fn prepare(&self, id: &str, config: &EngineConfig) -> Result<Arc<PreparedF64>, ApiError> {
        let cached = self.lock().get(id).cloned();
        let prepared = match cached {
            Some(p) if p.config() == config => return Ok(p),
            Some(p) => p.reconfigure(config),
            None => Prepared::new(&self.load(id)?, config),
        }
        .map_err(|e| match e {
            EngineError::BadConfig(_) => ApiError::BadRequest(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        })?;
        let prepared = Arc::new(prepared);
        self.lock().insert(id.to_string(), Arc::clone(&prepared));
        Ok(prepared)
    }

    /// Store UCR text under `id`. Existing datasets are never replaced, since
    /// saved sessions refer to them.
    pub fn add(&self, id: &str, text: &str) -> Result<DatasetF64, ApiError> {
        if !valid_id(id) {
            return Err(ApiError::BadRequest(format!("invalid dataset id {id:?}")));
        }
        if self.path_of(id).is_some() {
            return Err(ApiError::Conflict(format!("dataset {id:?} already exists")));
        }
        let ds = parse_ucr(text, id, None).map_err(|e| ApiError::BadRequest(e.to_string()))?;
        let path = self.dir.join(format!("{id}.txt"));
        fs::write(&path, text).map_err(|e| ApiError::Internal(format!("{}: {e}", path.display())))?;
        Ok(ds)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, Arc<PreparedF64>>> {
        self.prepared.lock().unwrap_or_else(|p| p.into_inner())
    }
}
