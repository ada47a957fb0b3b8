//! The active clustering loop.
//!
//! Starting from one super-instance holding every instance, the engine
//! repeatedly picks the largest splittable super-instance, decides how many
//! pieces to split it into by probing with queries, refines it, and then
//! queries representatives until every pair of clusters is known to be
//! linked or separated. It stops when the budget runs out, the oracle
//! aborts, or nothing is left to split.

mod config;
mod prepared;
mod session;
mod state;

pub use config::{EngineConfig, Refiner};
pub use prepared::Prepared;
pub use session::{resume, SessionFile, SESSION_FORMAT_VERSION};
pub use state::{Cluster, Clustering, EngineState, SuperInstance};

use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintKind, ConstraintStore, Origin, Relation};
use crate::error::{EngineError, OracleError};
use crate::oracle::{Oracle, QueryRecord};
use crate::scalar::{total_cmp, Scalar};
use prepared::DistanceCache;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    /// A query was needed but the budget was spent.
    BudgetExhausted,
    /// No super-instance can be split further and all relations are known.
    Converged,
    /// The oracle aborted.
    Aborted,
}

/// Engine progress handed to an [`Observer`].
#[derive(Debug, Clone, Copy)]
pub struct Checkpoint<'a> {
    pub state: &'a EngineState,
    pub log: &'a [QueryRecord],
    pub rng_counter: u64,
    /// The pair about to be asked; `None` once the run is over.
    pub pending: Option<(usize, usize)>,
    pub outcome: Option<RunOutcome>,
}

/// Hook called right before every query and once at the end of a run.
pub trait Observer {
    fn checkpoint(&mut self, cp: &Checkpoint<'_>);
}

impl<F: FnMut(&Checkpoint<'_>)> Observer for F {
    fn checkpoint(&mut self, cp: &Checkpoint<'_>) {
        self(cp)
    }
}

/// Observer that ignores everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoObserver;

impl Observer for NoObserver {
    fn checkpoint(&mut self, _: &Checkpoint<'_>) {}
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub clustering: Clustering,
    pub log: Vec<QueryRecord>,
    /// `snapshots[q]` is the clustering right before query `q + 1` was asked;
    /// the last entry is the final clustering. Always `log.len() + 1` long.
    pub snapshots: Vec<Clustering>,
    pub outcome: RunOutcome,
    pub state: EngineState,
    pub constraints: ConstraintStore,
    pub rng_counter: u64,
}

impl RunResult {
    pub fn queries_used(&self) -> usize {
        self.log.len()
    }
}

/// Run the engine with `oracle`. Only instances with `train_mask[i]` set are
/// ever queried or used as representatives.
pub fn run<T: Scalar, O: Oracle>(
    prepared: &Prepared<T>,
    oracle: O,
    train_mask: &[bool],
) -> Result<RunResult, EngineError> {
    run_observed(prepared, oracle, train_mask, NoObserver)
}

pub fn run_observed<T: Scalar, O: Oracle, B: Observer>(
    prepared: &Prepared<T>,
    oracle: O,
    train_mask: &[bool],
    observer: B,
) -> Result<RunResult, EngineError> {
    Engine::new(prepared, oracle, train_mask, observer)?.execute()
}

/// Why a run stopped early, or an error.
enum Halt {
    Budget,
    Aborted,
    Error(EngineError),
}

impl From<EngineError> for Halt {
    fn from(e: EngineError) -> Self {
        Halt::Error(e)
    }
}

/// A refined child before it is given an id: sorted members, train members
/// and representative.
struct Child {
    members: Vec<usize>,
    train: Vec<usize>,
    representative: usize,
}

struct Engine<'p, T: Scalar, O, B> {
    p: &'p Prepared<T>,
    train_mask: Vec<bool>,
    oracle: O,
    observer: B,
    store: ConstraintStore,
    state: EngineState,
    log: Vec<QueryRecord>,
    snapshots: Vec<Clustering>,
    rng_counter: u64,
    cache: DistanceCache<T>,
}

impl<'p, T: Scalar, O: Oracle, B: Observer> Engine<'p, T, O, B> {
    fn new(p: &'p Prepared<T>, oracle: O, train_mask: &[bool], observer: B) -> Result<Self, EngineError> {
        let n = p.len();
        if train_mask.len() != n {
            return Err(EngineError::MaskLength {
                mask: train_mask.len(),
                n,
            });
        }
        let train: Vec<usize> = (0..n).filter(|&i| train_mask[i]).collect();
        if train.is_empty() {
            return Err(EngineError::EmptyTrainMask);
        }
        let representative = p.representative(&train);
        Ok(Self {
            p,
            train_mask: train_mask.to_vec(),
            oracle,
            observer,
            store: ConstraintStore::new(n, p.config().budget),
            state: EngineState::initial(n, train, representative),
            log: Vec::new(),
            snapshots: Vec::new(),
            rng_counter: 0,
            cache: DistanceCache::default(),
        })
    }

    fn execute(mut self) -> Result<RunResult, EngineError> {
        self.check();
        let outcome = loop {
            match self.step() {
                Ok(true) => {}
                Ok(false) => break RunOutcome::Converged,
                Err(Halt::Budget) => break RunOutcome::BudgetExhausted,
                Err(Halt::Aborted) => break RunOutcome::Aborted,
                Err(Halt::Error(e)) => return Err(e),
            }
        };
        self.check();
        let clustering = self.state.clustering();
        self.snapshots.push(clustering.clone());
        self.observer.checkpoint(&Checkpoint {
            state: &self.state,
            log: &self.log,
            rng_counter: self.rng_counter,
            pending: None,
            outcome: Some(outcome),
        });
        debug_assert_eq!(self.snapshots.len(), self.log.len() + 1);
        debug_assert_eq!(self.store.queries_used(), self.log.len());
        Ok(RunResult {
            clustering,
            log: self.log,
            snapshots: self.snapshots,
            outcome,
            state: self.state,
            constraints: self.store,
            rng_counter: self.rng_counter,
        })
    }

    fn check(&self) {
        if cfg!(debug_assertions) {
            if let Err(e) = self.state.check_invariants(&self.train_mask) {
                panic!("engine invariant violated: {e}");
            }
        }
    }

    fn next_seed(&mut self) -> u64 {
        let seed = splitmix64(self.p.config().rng_seed.wrapping_add(self.rng_counter));
        self.rng_counter += 1;
        seed
    }

    fn train_of(&self, members: &[usize]) -> Vec<usize> {
        members.iter().copied().filter(|&i| self.train_mask[i]).collect()
    }

    /// One refinement round. `Ok(false)` when nothing is splittable.
    fn step(&mut self) -> Result<bool, Halt> {
        let Some(sid) = self.select() else {
            return Ok(false);
        };
        let si = self.state.si(sid).clone();
        let k = self.split_level(&si)?;
        let children = self.refine(&si, k)?;
        if children.len() < 2 {
            self.state.si_mut(sid).tried_splitting = true;
            self.check();
            return Ok(true);
        }

        let ci = self.state.cluster_index_of(sid);
        self.state.clusters[ci].super_instances.retain(|&s| s != sid);
        if self.state.clusters[ci].super_instances.is_empty() {
            self.state.clusters.remove(ci);
        }
        self.state.super_instances.retain(|s| s.id != sid);
        for child in children {
            let id = self.state.fresh_id();
            self.state.super_instances.push(SuperInstance {
                id,
                members: child.members,
                train_members: child.train,
                representative: child.representative,
                tried_splitting: false,
            });
            let cid = self.state.fresh_id();
            self.state.clusters.push(Cluster {
                id: cid,
                super_instances: vec![id],
            });
        }
        self.check();
        self.determine_relations()?;
        Ok(true)
    }

    /// Largest splittable super-instance; ties go to the lowest representative.
    fn select(&self) -> Option<usize> {
        self.state
            .super_instances
            .iter()
            .filter(|s| s.members.len() >= 2 && s.train_members.len() >= 2 && !s.tried_splitting)
            .max_by(|a, b| {
                a.members
                    .len()
                    .cmp(&b.members.len())
                    .then(b.representative.cmp(&a.representative))
            })
            .map(|s| s.id)
    }

    /// Probe by halving: each cannot-link between the halves' representatives
    /// doubles the split level and descends into the larger half.
    fn split_level(&mut self, si: &SuperInstance) -> Result<usize, Halt> {
        let mut cannot_links = 0u32;
        let mut current = si.members.clone();
        loop {
            if current.len() < 2 || self.train_of(&current).len() < 2 {
                break;
            }
            let seed = self.next_seed();
            let halves = self.p.split(&current, 2, seed)?;
            if halves.len() < 2 {
                break;
            }
            let (t0, t1) = (self.train_of(&halves[0]), self.train_of(&halves[1]));
            if t0.is_empty() || t1.is_empty() {
                break;
            }
            let (r0, r1) = (self.p.representative(&t0), self.p.representative(&t1));
            if self.relation(r0, r1)? == ConstraintKind::MustLink {
                break;
            }
            cannot_links += 1;
            current = if halves[0].len() >= halves[1].len() {
                halves[0].clone()
            } else {
                halves[1].clone()
            };
        }
        let level = 1usize.checked_shl(cannot_links.max(1)).unwrap_or(usize::MAX);
        Ok(level.min(si.members.len()))
    }

    /// Split into `k` children. Children without train members join the child
    /// whose representative is closest to their own medoid over all members.
    fn refine(&mut self, si: &SuperInstance, k: usize) -> Result<Vec<Child>, Halt> {
        let seed = self.next_seed();
        let groups = self.p.split(&si.members, k, seed)?;
        let mut children = Vec::new();
        let mut orphans = Vec::new();
        for mut members in groups {
            members.sort_unstable();
            let train = self.train_of(&members);
            if train.is_empty() {
                orphans.push(members);
            } else {
                let representative = self.p.representative(&train);
                children.push(Child {
                    members,
                    train,
                    representative,
                });
            }
        }
        debug_assert!(!children.is_empty(), "a splittable super-instance has train members");
        for orphan in orphans {
            let anchor = self.p.representative(&orphan);
            let target = (0..children.len())
                .map(|c| (c, self.cache.get(self.p, anchor, children[c].representative)))
                .min_by(|a, b| total_cmp(a.1, b.1).then(a.0.cmp(&b.0)))
                .map(|(c, _)| c)
                .expect("at least one child has train members");
            let members = &mut children[target].members;
            members.extend(orphan);
            members.sort_unstable();
        }
        Ok(children)
    }

    /// Resolve cluster relations: merge clusters linked through any pair of
    /// representatives, skip pairs known to be separated, and query the
    /// closest representatives of the nearest undecided pair.
    fn determine_relations(&mut self) -> Result<(), Halt> {
        loop {
            let reps: Vec<Vec<usize>> = self
                .state
                .clusters
                .iter()
                .map(|c| {
                    c.super_instances
                        .iter()
                        .map(|&s| self.state.si(s).representative)
                        .collect()
                })
                .collect();
            let mut merge = None;
            let mut best: Option<(T, usize, usize)> = None;
            'pairs: for a in 0..reps.len() {
                for b in (a + 1)..reps.len() {
                    let mut separated = false;
                    for &x in &reps[a] {
                        for &y in &reps[b] {
                            match self.store.relation_of(x, y) {
                                Relation::MustLink => {
                                    merge = Some((a, b));
                                    break 'pairs;
                                }
                                Relation::CannotLink => separated = true,
                                Relation::Unknown => {}
                            }
                        }
                    }
                    if separated {
                        continue;
                    }
                    for &x in &reps[a] {
                        for &y in &reps[b] {
                            let d = self.cache.get(self.p, x, y);
                            if best.is_none_or(|(bd, _, _)| total_cmp(d, bd).is_lt()) {
                                best = Some((d, x, y));
                            }
                        }
                    }
                }
            }
            if let Some((a, b)) = merge {
                let moved = self.state.clusters.remove(b);
                self.state.clusters[a].super_instances.extend(moved.super_instances);
                self.check();
                continue;
            }
            let Some((_, x, y)) = best else {
                return Ok(());
            };
            // A must-link is merged by the next pass.
            self.ask(x, y)?;
        }
    }

    fn relation(&mut self, i: usize, j: usize) -> Result<ConstraintKind, Halt> {
        match self.store.relation_of(i, j) {
            Relation::MustLink => Ok(ConstraintKind::MustLink),
            Relation::CannotLink => Ok(ConstraintKind::CannotLink),
            Relation::Unknown => self.ask(i, j),
        }
    }

    fn ask(&mut self, i: usize, j: usize) -> Result<ConstraintKind, Halt> {
        assert!(
            self.train_mask[i] && self.train_mask[j],
            "queried pair ({i}, {j}) includes a non-train instance"
        );
        assert_eq!(
            self.store.relation_of(i, j),
            Relation::Unknown,
            "queried pair ({i}, {j}) was derivable"
        );
        if self.store.budget_remaining() == 0 {
            return Err(Halt::Budget);
        }
        self.snapshots.push(self.state.clustering());
        self.observer.checkpoint(&Checkpoint {
            state: &self.state,
            log: &self.log,
            rng_counter: self.rng_counter,
            pending: Some((i, j)),
            outcome: None,
        });
        match self.oracle.query(i, j) {
            Ok(kind) => {
                if let Err(source) = self.store.record(i, j, kind, Origin::Queried) {
                    return Err(Halt::Error(EngineError::Inconsistent {
                        source,
                        log: self.log.clone(),
                    }));
                }
                self.log.push(QueryRecord {
                    i,
                    j,
                    answer: kind,
                    seq: self.log.len(),
                    latency_ms: self.oracle.last_latency_ms(),
                });
                Ok(kind)
            }
            Err(OracleError::Abort) => {
                self.snapshots.pop();
                Err(Halt::Aborted)
            }
            Err(e) => Err(Halt::Error(EngineError::Oracle(e))),
        }
    }
}

/// Seed mixer so consecutive counters give unrelated refiner seeds.
pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{LabelOracle, ReplayOracle};
    use crate::series::{Dataset, TimeSeries};

    /// Three tight groups of flat-ish series at levels 0, 5 and 10.
    fn blobs(per: usize) -> Dataset<f64> {
        let mut series = Vec::new();
        let mut labels = Vec::new();
        for (g, level) in [0.0, 5.0, 10.0].into_iter().enumerate() {
            for k in 0..per {
                let v: Vec<f64> = (0..16)
                    .map(|t| level + 0.01 * ((t * 7 + k * 3) % 5) as f64 + 0.1 * (t as f64 / 4.0).sin())
                    .collect();
                series.push(TimeSeries::new(v).unwrap());
                labels.push(format!("g{g}"));
            }
        }
        Dataset::new("blobs", series, Some(labels)).unwrap()
    }

    fn raw_config(budget: usize) -> EngineConfig {
        EngineConfig {
            budget,
            normalize: false,
            ..Default::default()
        }
    }

    #[test]
    fn splitmix_is_a_bijection_sample() {
        let outs: std::collections::HashSet<u64> = (0..1000).map(splitmix64).collect();
        assert_eq!(outs.len(), 1000);
    }

    #[test]
    fn recovers_blobs_with_labels() {
        let ds = blobs(5);
        let p = Prepared::new(&ds, &raw_config(30)).unwrap();
        let res = run(&p, LabelOracle::new(ds.labels().unwrap()), &[true; 15]).unwrap();
        assert_eq!(res.clustering.n_clusters(), 3);
        let truth: Vec<usize> = (0..15).map(|i| i / 5).collect();
        assert_eq!(res.clustering, Clustering::from_labels(&truth));
        assert_eq!(res.snapshots.len(), res.log.len() + 1);
        assert_eq!(res.snapshots[0].n_clusters(), 1);
        assert!(res.log.len() <= 30);
    }

    #[test]
    fn budget_of_one_stops_after_first_probe() {
        let ds = blobs(4);
        let p = Prepared::new(&ds, &raw_config(1)).unwrap();
        let res = run(&p, LabelOracle::new(ds.labels().unwrap()), &[true; 12]).unwrap();
        assert_eq!(res.log.len(), 1);
        assert_eq!(res.outcome, RunOutcome::BudgetExhausted);
        // Probing does not change the clustering.
        assert_eq!(res.clustering.n_clusters(), 1);
    }

    #[test]
    fn only_train_instances_are_queried() {
        let ds = blobs(5);
        let mask: Vec<bool> = (0..15).map(|i| i % 3 != 0).collect();
        let p = Prepared::new(&ds, &raw_config(20)).unwrap();
        let res = run(&p, LabelOracle::new(ds.labels().unwrap()), &mask).unwrap();
        for q in &res.log {
            assert!(mask[q.i] && mask[q.j]);
        }
        for si in &res.state.super_instances {
            assert!(mask[si.representative]);
        }
    }

    #[test]
    fn abort_keeps_current_clustering() {
        let ds = blobs(4);
        let p = Prepared::new(&ds, &raw_config(30)).unwrap();
        let full = run(&p, LabelOracle::new(ds.labels().unwrap()), &[true; 12]).unwrap();
        let cut = full.log[..2].to_vec();
        let res = run(&p, ReplayOracle::new(cut), &[true; 12]).unwrap();
        assert_eq!(res.outcome, RunOutcome::Aborted);
        assert_eq!(res.log.len(), 2);
        assert_eq!(res.snapshots[..2], full.snapshots[..2]);
        assert_eq!(res.snapshots[2], full.snapshots[2]);
    }

    #[test]
    fn mask_errors() {
        let ds = blobs(2);
        let p = Prepared::new(&ds, &raw_config(5)).unwrap();
        let labels = ds.labels().unwrap();
        assert!(matches!(
            run(&p, LabelOracle::new(labels), &[true; 3]),
            Err(EngineError::MaskLength { mask: 3, n: 6 })
        ));
        assert!(matches!(
            run(&p, LabelOracle::new(labels), &[false; 6]),
            Err(EngineError::EmptyTrainMask)
        ));
    }

    #[test]
    fn observer_sees_every_query_and_the_end() {
        let ds = blobs(4);
        let p = Prepared::new(&ds, &raw_config(30)).unwrap();
        let mut seen = Vec::new();
        let res = run_observed(
            &p,
            LabelOracle::new(ds.labels().unwrap()),
            &[true; 12],
            |cp: &Checkpoint<'_>| seen.push((cp.log.len(), cp.pending, cp.outcome)),
        )
        .unwrap();
        assert_eq!(seen.len(), res.log.len() + 1);
        for (q, &(len, pending, outcome)) in seen.iter().enumerate().take(res.log.len()) {
            assert_eq!(len, q);
            assert_eq!(pending, Some((res.log[q].i, res.log[q].j)));
            assert!(outcome.is_none());
        }
        assert_eq!(seen.last().unwrap().2, Some(res.outcome));
    }

    /// Answers from a fixed script; panics if asked more.
    struct Script(std::collections::VecDeque<ConstraintKind>, Vec<(usize, usize)>);

    impl Script {
        fn new(answers: &[ConstraintKind]) -> Self {
            Self(answers.iter().copied().collect(), Vec::new())
        }
    }

    impl Oracle for Script {
        fn query(&mut self, i: usize, j: usize) -> Result<ConstraintKind, OracleError> {
            self.1.push((i, j));
            self.0.pop_front().ok_or(OracleError::Abort)
        }
    }

    /// Eight distinct flat series at levels 0..8, far apart on the raw scale.
    fn ladder() -> Dataset<f64> {
        let series = (0..8)
            .map(|k| TimeSeries::new(vec![k as f64 * 10.0; 8]).unwrap())
            .collect();
        Dataset::new("ladder", series, None).unwrap()
    }

    use ConstraintKind::{CannotLink as CL, MustLink as ML};

    fn split_level_with(answers: &[ConstraintKind], n: usize) -> (usize, usize) {
        let ds = ladder();
        let series = ds.series()[..n].to_vec();
        let ds = Dataset::new("ladder", series, None).unwrap();
        let p = Prepared::new(&ds, &raw_config(10)).unwrap();
        let mut e = Engine::new(&p, Script::new(answers), &vec![true; n], NoObserver).unwrap();
        let si = e.state.super_instances[0].clone();
        let k = e.split_level(&si).ok().expect("script covers the probes");
        (k, e.log.len())
    }

    #[test]
    fn split_level_examples() {
        assert_eq!(split_level_with(&[ML], 8), (2, 1));
        assert_eq!(split_level_with(&[CL, CL, ML], 8), (4, 3));
        // Three members: two cannot-links exhaust the halves, capped at 3.
        assert_eq!(split_level_with(&[CL, CL, ML], 3).0, 3);
    }

    #[test]
    fn refine_merges_trainless_children() {
        let ds = ladder();
        let p = Prepared::new(&ds, &raw_config(10)).unwrap();
        let mut mask = vec![false; 8];
        mask[1] = true;
        mask[6] = true;
        let mut e = Engine::new(&p, Script::new(&[]), &mask, NoObserver).unwrap();
        let si = SuperInstance {
            id: 0,
            members: vec![0, 1, 2, 3],
            train_members: vec![1],
            representative: 1,
            tried_splitting: false,
        };
        let children = e.refine(&si, 2).ok().unwrap();
        assert_eq!(children.len(), 1);
        assert_eq!(children[0].members, vec![0, 1, 2, 3]);

        let all = e.state.super_instances[0].clone();
        let children = e.refine(&all, 4).ok().unwrap();
        assert!(children.len() >= 2);
        for c in &children {
            assert!(!c.train.is_empty());
            assert!(c.train.contains(&c.representative));
        }
        let total: usize = children.iter().map(|c| c.members.len()).sum();
        assert_eq!(total, 8);
    }

    fn three_singletons(e: &mut Engine<'_, f64, Script, NoObserver>) {
        let mut state = EngineState {
            n: 8,
            super_instances: Vec::new(),
            clusters: Vec::new(),
            next_id: 0,
        };
        for (k, members) in [vec![0, 1, 2], vec![3, 4, 5], vec![6, 7]].into_iter().enumerate() {
            let id = state.fresh_id();
            state.super_instances.push(SuperInstance {
                id,
                representative: members[0],
                train_members: members.clone(),
                members,
                tried_splitting: false,
            });
            let cid = state.fresh_id();
            state.clusters.push(Cluster {
                id: cid,
                super_instances: vec![id],
            });
            assert_eq!(state.clusters.len(), k + 1);
        }
        e.state = state;
    }

    #[test]
    fn relations_use_entailment() {
        let ds = ladder();
        let p = Prepared::new(&ds, &raw_config(10)).unwrap();
        // Nearest pair first: (0, 3) must-link; then the merged cluster
        // against {6, 7}: (3, 6) cannot-link. Nothing else is asked.
        let mut e = Engine::new(&p, Script::new(&[ML, CL]), &[true; 8], NoObserver).unwrap();
        three_singletons(&mut e);
        e.determine_relations().ok().unwrap();
        assert_eq!(e.oracle.1, vec![(0, 3), (3, 6)]);
        assert_eq!(e.state.clusters.len(), 2);
        assert_eq!(e.state.clustering().assignment, vec![0, 0, 0, 0, 0, 0, 1, 1]);
    }

    #[test]
    fn relations_stop_on_budget_and_keep_clusters_apart() {
        let ds = ladder();
        let p = Prepared::new(&ds, &raw_config(1)).unwrap();
        let mut e = Engine::new(&p, Script::new(&[CL, CL]), &[true; 8], NoObserver).unwrap();
        three_singletons(&mut e);
        assert!(matches!(e.determine_relations(), Err(Halt::Budget)));
        assert_eq!(e.oracle.1.len(), 1);
        assert_eq!(e.state.clusters.len(), 3);
    }

    #[test]
    fn single_cluster_needs_no_queries() {
        let ds = ladder();
        let p = Prepared::new(&ds, &raw_config(10)).unwrap();
        let mut e = Engine::new(&p, Script::new(&[]), &[true; 8], NoObserver).unwrap();
        e.determine_relations().ok().unwrap();
        assert!(e.oracle.1.is_empty());
    }
}
