//! Answer sources for pairwise queries.
//!
//! The engine blocks on [`Oracle::query`]. Experiments use [`LabelOracle`],
//! recorded sessions use [`ReplayOracle`], and the interactive service bridges
//! a human through a [`Mailbox`].

use std::io::{BufRead, Write};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintKind, Origin};
use crate::error::{DataError, OracleError};

/// One answered query, in the order it was asked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub i: usize,
    pub j: usize,
    pub answer: ConstraintKind,
    pub seq: usize,
    /// Time the human took to answer, in milliseconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
}

pub trait Oracle {
    fn query(&mut self, i: usize, j: usize) -> Result<ConstraintKind, OracleError>;

    /// Milliseconds the most recent answer took, for oracles backed by a person.
    fn last_latency_ms(&self) -> Option<f64> {
        None
    }
}

impl<O: Oracle + ?Sized> Oracle for &mut O {
    fn query(&mut self, i: usize, j: usize) -> Result<ConstraintKind, OracleError> {
        (**self).query(i, j)
    }

    fn last_latency_ms(&self) -> Option<f64> {
        (**self).last_latency_ms()
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn query(&mut self, i: usize, j: usize) -> Result<ConstraintKind, OracleError> {
        (**self).query(i, j)
    }

    fn last_latency_ms(&self) -> Option<f64> {
        (**self).last_latency_ms()
    }
}

/// Must-link iff both instances carry the same label.
pub fn label_answer(i: usize, j: usize, labels: &[String]) -> Result<ConstraintKind, OracleError> {
    let li = labels.get(i).ok_or(OracleError::MissingLabel(i))?;
    let lj = labels.get(j).ok_or(OracleError::MissingLabel(j))?;
    Ok(if li == lj {
        ConstraintKind::MustLink
    } else {
        ConstraintKind::CannotLink
    })
}

/// Ground truth from class labels.
#[derive(Debug, Clone)]
pub struct LabelOracle<'a> {
    labels: &'a [String],
}

impl<'a> LabelOracle<'a> {
    pub fn new(labels: &'a [String]) -> Self {
        Self { labels }
    }
}

impl Oracle for LabelOracle<'_> {
    fn query(&mut self, i: usize, j: usize) -> Result<ConstraintKind, OracleError> {
        label_answer(i, j, self.labels)
    }
}

/// Answers from a recorded log. Runs out with [`OracleError::Abort`], and
/// fails if the engine asks a different pair than the one recorded.
#[derive(Debug, Clone)]
pub struct ReplayOracle {
    log: Vec<QueryRecord>,
    pos: usize,
}

impl ReplayOracle {
    pub fn new(log: Vec<QueryRecord>) -> Self {
        Self { log, pos: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }

    pub fn is_exhausted(&self) -> bool {
        self.pos >= self.log.len()
    }
}

impl Oracle for ReplayOracle {
    fn query(&mut self, i: usize, j: usize) -> Result<ConstraintKind, OracleError> {
        let Some(rec) = self.log.get(self.pos) else {
            return Err(OracleError::Abort);
        };
        if (rec.i.min(rec.j), rec.i.max(rec.j)) != (i.min(j), i.max(j)) {
            return Err(OracleError::ReplayDiverged {
                seq: self.pos,
                log_i: rec.i,
                log_j: rec.j,
                i,
                j,
            });
        }
        self.pos += 1;
        Ok(rec.answer)
    }

    /// The latency recorded with the last replayed answer.
    fn last_latency_ms(&self) -> Option<f64> {
        self.pos.checked_sub(1).and_then(|p| self.log[p].latency_ms)
    }
}

/// Replays a log, then hands over to a live oracle.
#[derive(Debug)]
pub struct ReplayThen<O> {
    replay: ReplayOracle,
    live: O,
    live_latency: bool,
}

impl<O: Oracle> ReplayThen<O> {
    pub fn new(log: Vec<QueryRecord>, live: O) -> Self {
        Self {
            replay: ReplayOracle::new(log),
            live,
            live_latency: false,
        }
    }

    pub fn into_live(self) -> O {
        self.live
    }
}

impl<O: Oracle> Oracle for ReplayThen<O> {
    fn query(&mut self, i: usize, j: usize) -> Result<ConstraintKind, OracleError> {
        if self.replay.is_exhausted() {
            self.live_latency = true;
            self.live.query(i, j)
        } else {
            self.live_latency = false;
            self.replay.query(i, j)
        }
    }

    fn last_latency_ms(&self) -> Option<f64> {
        if self.live_latency {
            self.live.last_latency_ms()
        } else {
            self.replay.last_latency_ms()
        }
    }
}

/// Read the queried rows of a constraint CSV (`i,j,kind,origin,sequence_number`)
/// as a replay log. Derived rows are skipped.
pub fn read_query_log_csv<R: BufRead>(reader: R) -> Result<Vec<QueryRecord>, DataError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DataError::BadRow {
            line: line_no,
            reason: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("i,")) {
            continue;
        }
        let bad = |reason: String| DataError::BadRow { line: line_no, reason };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", fields.len())));
        }
        let parse_idx = |s: &str, column: usize| {
            s.parse::<usize>().map_err(|_| DataError::BadNumber {
                line: line_no,
                column,
                token: s.to_string(),
            })
        };
        let i = parse_idx(fields[0], 1)?;
        let j = parse_idx(fields[1], 2)?;
        let answer: ConstraintKind = fields[2].parse().map_err(bad)?;
        let origin = match fields[3] {
            "queried" => Origin::Queried,
            "derived" => Origin::Derived,
            other => return Err(bad(format!("unknown origin {other:?}"))),
        };
        parse_idx(fields[4], 5)?;
        if origin == Origin::Queried {
            out.push(QueryRecord {
                i,
                j,
                answer,
                seq: out.len(),
                latency_ms: None,
            });
        }
    }
    Ok(out)
}

/// Write a query log in the constraint CSV layout, every row `queried`.
pub fn write_query_log_csv<W: Write>(log: &[QueryRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "i,j,kind,origin,sequence_number")?;
    for q in log {
        writeln!(w, "{},{},{},queried,{}", q.i, q.j, q.answer, q.seq)?;
    }
    Ok(())
}

/// Query currently waiting for a human answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingQuery {
    pub i: usize,
    pub j: usize,
    /// Zero-based index of this query within the session.
    pub seq: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MailboxError {
    #[error("no query is waiting for an answer")]
    NoPending,
    #[error("the pending query has already been answered")]
    AlreadyAnswered,
    #[error("answer is for query {given}, but query {pending} is pending")]
    Stale { given: usize, pending: usize },
    #[error("the session is closed")]
    Closed,
}

#[derive(Debug, Default)]
struct MailboxState {
    pending: Option<PendingQuery>,
    posted_at: Option<Instant>,
    answer: Option<ConstraintKind>,
    asked: usize,
    closed: bool,
    finished: bool,
}

/// Single-slot handoff between an engine thread and request handlers.
///
/// The engine posts one query at a time and parks until it is answered, the
/// mailbox is closed, or the optional timeout elapses.
#[derive(Debug)]
pub struct Mailbox {
    state: Mutex<MailboxState>,
    changed: Condvar,
    timeout: Option<Duration>,
}

impl Mailbox {
    pub fn new(timeout: Option<Duration>) -> Arc<Self> {
        Self::starting_at(0, timeout)
    }

    /// Mailbox whose first query gets sequence number `first_seq`, for
    /// sessions resumed after some answers were replayed.
    pub fn starting_at(first_seq: usize, timeout: Option<Duration>) -> Arc<Self> {
        Arc::new(Self {
            state: Mutex::new(MailboxState {
                asked: first_seq,
                ..Default::default()
            }),
            changed: Condvar::new(),
            timeout,
        })
    }

    fn lock(&self) -> MutexGuard<'_, MailboxState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn pending(&self) -> Option<PendingQuery> {
        let s = self.lock();
        s.pending.filter(|_| s.answer.is_none())
    }

    pub fn is_finished(&self) -> bool {
        self.lock().finished
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }

    /// Answer the pending query and return its sequence number. With
    /// `for_seq`, the answer is only accepted by that query, which makes
    /// retried requests safe.
    pub fn answer(&self, for_seq: Option<usize>, kind: ConstraintKind) -> Result<usize, MailboxError> {
        let mut s = self.lock();
        if s.closed {
            return Err(MailboxError::Closed);
        }
        let pending = s.pending.ok_or(MailboxError::NoPending)?;
        if let Some(given) = for_seq.filter(|&g| g != pending.seq) {
            return Err(MailboxError::Stale {
                given,
                pending: pending.seq,
            });
        }
        if s.answer.is_some() {
            return Err(MailboxError::AlreadyAnswered);
        }
        s.answer = Some(kind);
        self.changed.notify_all();
        Ok(pending.seq)
    }

    /// Abort: the engine's current or next query returns [`OracleError::Abort`].
    pub fn close(&self) {
        let mut s = self.lock();
        s.closed = true;
        self.changed.notify_all();
    }

    /// Called by the engine thread once the run is over.
    pub fn mark_finished(&self) {
        let mut s = self.lock();
        s.finished = true;
        s.pending = None;
        self.changed.notify_all();
    }

    /// Block until a query with sequence number at least `min_seq` is pending
    /// or the run has finished, up to `limit`.
    pub fn wait_for_query(&self, min_seq: usize, limit: Duration) -> Option<PendingQuery> {
        let guard = self.lock();
        let (s, _) = self
            .changed
            .wait_timeout_while(guard, limit, |s| {
                !s.finished && !matches!(s.pending, Some(p) if p.seq >= min_seq && s.answer.is_none())
            })
            .unwrap_or_else(|p| p.into_inner());
        s.pending.filter(|p| p.seq >= min_seq && s.answer.is_none())
    }

    fn ask(&self, i: usize, j: usize) -> Result<(ConstraintKind, Duration), OracleError> {
        let mut s = self.lock();
        if s.closed {
            return Err(OracleError::Abort);
        }
        let posted = Instant::now();
        s.pending = Some(PendingQuery { i, j, seq: s.asked });
        s.posted_at = Some(posted);
        s.answer = None;
        self.changed.notify_all();
        let keep_waiting = |s: &mut MailboxState| s.answer.is_none() && !s.closed;
        s = match self.timeout {
            Some(t) => {
                self.changed
                    .wait_timeout_while(s, t, keep_waiting)
                    .unwrap_or_else(|p| p.into_inner())
                    .0
            }
            None => self
                .changed
                .wait_while(s, keep_waiting)
                .unwrap_or_else(|p| p.into_inner()),
        };
        let answer = s.answer.take();
        s.pending = None;
        s.posted_at = None;
        // An answer that arrived before the close still counts.
        match answer {
            Some(kind) => {
                s.asked += 1;
                Ok((kind, posted.elapsed()))
            }
            _ => {
                s.closed = true;
                self.changed.notify_all();
                Err(OracleError::Abort)
            }
        }
    }
}

/// Engine-side handle of a [`Mailbox`].
#[derive(Debug, Clone)]
pub struct MailboxOracle {
    mailbox: Arc<Mailbox>,
    last_latency: Option<Duration>,
}

impl MailboxOracle {
    pub fn new(mailbox: Arc<Mailbox>) -> Self {
        Self {
            mailbox,
            last_latency: None,
        }
    }
}

impl Oracle for MailboxOracle {
    fn query(&mut self, i: usize, j: usize) -> Result<ConstraintKind, OracleError> {
        let (kind, latency) = self.mailbox.ask(i, j)?;
        self.last_latency = Some(latency);
        Ok(kind)
    }

    fn last_latency_ms(&self) -> Option<f64> {
        self.last_latency.map(|d| d.as_secs_f64() * 1e3)
    }
}
