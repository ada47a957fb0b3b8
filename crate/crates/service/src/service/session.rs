//! One interactive engine run per session, on its own thread.
//!
//! The engine parks on a [`Mailbox`] while a query waits for a human answer.
//! Every engine checkpoint is mirrored into a shared view for request
//! handlers and written to the session file, so a restarted service resumes
//! at the same pending query.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread;
use std::time::Duration;

use cobras_ts::engine::SESSION_FORMAT_VERSION;
use cobras_ts::{
    resume, run_observed, Checkpoint, Clustering, EngineState, Mailbox, MailboxError, MailboxOracle, PendingQuery,
    PreparedF64, QueryRecord, RunOutcome, SessionFile,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingAnswer,
    Running,
    Finished,
    Aborted,
}

/// On-disk form of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSession {
    pub id: String,
    pub dataset_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub session: SessionFile,
}

impl StoredSession {
    pub fn path_in(dir: &Path, id: &str) -> PathBuf {
        dir.join(format!("{id}.json"))
    }

    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        let path = Self::path_in(dir, &self.id);
        let tmp = path.with_extension("json.tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(serde_json::to_string_pretty(self)?.as_bytes())?;
        f.sync_all()?;
        fs::rename(tmp, path)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
        let stored: Self = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        if stored.session.version != SESSION_FORMAT_VERSION {
            return Err(format!("unsupported session format version {}", stored.session.version));
        }
        Ok(stored)
    }
}

#[derive(Debug, Default)]
struct Live {
    /// Latest checkpoint; `None` until the engine reaches its first one.
    file: Option<SessionFile>,
    /// `snapshots[q]` is the clustering before query `q + 1`.
    snapshots: Vec<Clustering>,
    error: Option<String>,
    /// Set when the service shuts down; the engine thread stops persisting.
    detached: bool,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub dataset_id: String,
    prepared: Arc<PreparedF64>,
    mailbox: Arc<Mailbox>,
    live: Mutex<Live>,
    session_dir: PathBuf,
}

impl Session {
    /// Start a fresh session, or resume `saved`. Sessions saved after they
    /// ended are replayed to rebuild their history and then stay finished.
    pub fn start(
        id: String,
        dataset_id: String,
        prepared: Arc<PreparedF64>,
        saved: Option<SessionFile>,
        session_dir: PathBuf,
        answer_timeout: Option<Duration>,
    ) -> Arc<Self> {
        let first_seq = saved.as_ref().map_or(0, |f| f.log.len());
        let mailbox = Mailbox::starting_at(first_seq, answer_timeout);
        if saved.as_ref().is_some_and(|f| f.outcome.is_some()) {
            mailbox.close();
        }
        let session = Arc::new(Self {
            id,
            dataset_id,
            prepared,
            mailbox,
            live: Mutex::new(Live {
                file: saved.clone(),
                ..Default::default()
            }),
            session_dir,
        });
        let worker = Arc::clone(&session);
        thread::Builder::new()
            .name(format!("session-{}", session.id))
            .spawn(move || worker.drive(saved))
            .expect("spawn session thread");
        session
    }

    /// A session whose file records an engine error; it is shown but not run.
    pub fn failed(stored: StoredSession, prepared: Arc<PreparedF64>, session_dir: PathBuf) -> Arc<Self> {
        let mailbox = Mailbox::new(None);
        mailbox.close();
        mailbox.mark_finished();
        Arc::new(Self {
            id: stored.id,
            dataset_id: stored.dataset_id,
            prepared,
            mailbox,
            live: Mutex::new(Live {
                file: Some(stored.session),
                error: stored.error,
                ..Default::default()
            }),
            session_dir,
        })
    }

    fn drive(&self, saved: Option<SessionFile>) {
        let n = self.prepared.len();
        let mask = saved.as_ref().map_or_else(|| vec![true; n], |f| f.train_mask.clone());
        // A session saved after it ended is only replayed to rebuild its
        // history; its saved view stays authoritative.
        let replayed = match &saved {
            Some(f) if f.outcome.is_some() => usize::MAX,
            Some(f) => f.log.len(),
            None => 0,
        };
        let oracle = MailboxOracle::new(Arc::clone(&self.mailbox));
        let observer = |cp: &Checkpoint<'_>| self.on_checkpoint(cp, &mask, replayed);
        let result = match &saved {
            Some(file) => resume(&self.prepared, file, oracle, observer),
            None => run_observed(&self.prepared, oracle, &mask, observer),
        };
        if let Err(e) = result {
            tracing::warn!(session = %self.id, "engine stopped: {e}");
            let mut live = self.lock();
            live.error = Some(e.to_string());
            if let Some(file) = live.file.clone().or(saved) {
                self.persist(&live, file);
            }
        }
        self.mailbox.mark_finished();
    }

    fn on_checkpoint(&self, cp: &Checkpoint<'_>, mask: &[bool], replayed: usize) {
        let mut live = self.lock();
        let q = cp.log.len();
        live.snapshots.truncate(q);
        live.snapshots.push(cp.state.clustering());
        // While a resumed session replays, the saved file is ahead.
        if q >= replayed {
            let file = SessionFile::from_checkpoint(self.prepared.config(), mask, cp);
            live.file = Some(file.clone());
            self.persist(&live, file);
        }
    }

    fn persist(&self, live: &Live, session: SessionFile) {
        if live.detached {
            return;
        }
        let stored = StoredSession {
            id: self.id.clone(),
            dataset_id: self.dataset_id.clone(),
            error: live.error.clone(),
            session,
        };
        if let Err(e) = stored.save(&self.session_dir) {
            tracing::error!(session = %self.id, "cannot save session: {e}");
        }
    }

    fn lock(&self) -> MutexGuard<'_, Live> {
        self.live.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn prepared(&self) -> &PreparedF64 {
        &self.prepared
    }

    pub fn budget(&self) -> usize {
        self.prepared.config().budget
    }

    pub fn phase(&self) -> Phase {
        let live = self.lock();
        match live.file.as_ref().and_then(|f| f.outcome) {
            Some(RunOutcome::Aborted) => Phase::Aborted,
            Some(_) => Phase::Finished,
            None if live.error.is_some() || self.mailbox.is_closed() => Phase::Aborted,
            None if self.mailbox.pending().is_some() => Phase::AwaitingAnswer,
            None => Phase::Running,
        }
    }

    pub fn pending(&self) -> Option<PendingQuery> {
        if self.mailbox.is_closed() {
            return None;
        }
        self.mailbox.pending()
    }

    /// Block up to `limit` until a query is pending or the run has ended.
    pub fn wait(&self, limit: Duration) {
        self.mailbox.wait_for_query(0, limit);
    }

    pub fn answer(&self, for_seq: Option<usize>, kind: cobras_ts::ConstraintKind) -> Result<usize, MailboxError> {
        self.mailbox.answer(for_seq, kind)
    }

    /// Abort the run. The engine stops at its current or next query.
    pub fn abort(&self) {
        self.mailbox.close();
    }

    /// Stop without recording an abort, so the saved file stays resumable.
    pub fn detach(&self) {
        self.lock().detached = true;
        self.mailbox.close();
    }

    pub fn is_finished(&self) -> bool {
        self.mailbox.is_finished()
    }

    pub fn error(&self) -> Option<String> {
        self.lock().error.clone()
    }

    pub fn log(&self) -> Vec<QueryRecord> {
        self.lock().file.as_ref().map(|f| f.log.clone()).unwrap_or_default()
    }

    pub fn state(&self) -> Option<EngineState> {
        self.lock().file.as_ref().map(|f| f.state.clone())
    }

    pub fn outcome(&self) -> Option<RunOutcome> {
        self.lock().file.as_ref().and_then(|f| f.outcome)
    }

    pub fn snapshot(&self, q: usize) -> Option<Clustering> {
        self.lock().snapshots.get(q).cloned()
    }
}
