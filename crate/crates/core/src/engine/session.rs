use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{run, run_observed, Checkpoint, EngineConfig, EngineState, Observer, Prepared, RunOutcome, RunResult};
use crate::error::EngineError;
use crate::oracle::{Oracle, QueryRecord, ReplayOracle, ReplayThen};
use crate::scalar::Scalar;

pub const SESSION_FORMAT_VERSION: u32 = 1;

/// Everything needed to suspend an interactive run and pick it up again.
///
/// The answer log is authoritative: resuming replays it through the engine,
/// and the stored state is only used to check that the replay agrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFile {
    pub version: u32,
    pub config: EngineConfig,
    pub train_mask: Vec<bool>,
    pub log: Vec<QueryRecord>,
    pub state: EngineState,
    pub rng_counter: u64,
    /// Pair waiting for an answer when the file was written.
    pub pending: Option<(usize, usize)>,
    /// Set once the run has ended.
    pub outcome: Option<RunOutcome>,
}

impl SessionFile {
    pub fn from_checkpoint(config: &EngineConfig, train_mask: &[bool], cp: &Checkpoint<'_>) -> Self {
        Self {
            version: SESSION_FORMAT_VERSION,
            config: config.clone(),
            train_mask: train_mask.to_vec(),
            log: cp.log.to_vec(),
            state: cp.state.clone(),
            rng_counter: cp.rng_counter,
            pending: cp.pending,
            outcome: cp.outcome,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        let file: Self = serde_json::from_str(text).map_err(|e| EngineError::Session(e.to_string()))?;
        if file.version != SESSION_FORMAT_VERSION {
            return Err(EngineError::Session(format!(
                "unsupported session format version {}",
                file.version
            )));
        }
        Ok(file)
    }

    /// Write atomically: a temporary sibling file is renamed over `path`.
    pub fn save(&self, path: &Path) -> Result<(), EngineError> {
        let io = |e: std::io::Error| EngineError::Session(format!("{}: {e}", path.display()));
        let tmp = path.with_extension("json.tmp");
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(self.to_json().as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let text = fs::read_to_string(path).map_err(|e| EngineError::Session(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Continue a saved session. The recorded answers are replayed first, then
/// `live` answers whatever comes next, starting with the query that was
/// pending when the file was written.
pub fn resume<T: Scalar, O: Oracle, B: Observer>(
    prepared: &Prepared<T>,
    file: &SessionFile,
    live: O,
    observer: B,
) -> Result<RunResult, EngineError> {
    if prepared.config() != &file.config {
        return Err(EngineError::Session(
            "session was recorded with a different configuration".into(),
        ));
    }
    let replayed = run(prepared, ReplayOracle::new(file.log.clone()), &file.train_mask)?;
    if replayed.log != file.log || replayed.state != file.state || replayed.rng_counter != file.rng_counter {
        return Err(EngineError::Session(
            "replaying the answer log does not reproduce the saved state".into(),
        ));
    }
    run_observed(
        prepared,
        ReplayThen::new(file.log.clone(), live),
        &file.train_mask,
        observer,
    )
}
