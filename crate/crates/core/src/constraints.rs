//! Must-link / cannot-link store with transitive closure, entailment and a
//! query budget.
//!
//! Must-link components live in a union-find over instances. Cannot-link
//! edges join component roots and are re-homed whenever two components merge,
//! so `relation_of` is a pair of `find` calls plus a set lookup.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConstraintError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    MustLink,
    CannotLink,
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintKind::MustLink => "must_link",
            ConstraintKind::CannotLink => "cannot_link",
        })
    }
}

impl FromStr for ConstraintKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "must_link" | "ml" => Ok(ConstraintKind::MustLink),
            "cannot_link" | "cl" => Ok(ConstraintKind::CannotLink),
            other => Err(format!("unknown relation {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Queried,
    Derived,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Queried => "queried",
            Origin::Derived => "derived",
        })
    }
}

/// Relation between two instances as far as the store can tell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    MustLink,
    CannotLink,
    Unknown,
}

impl From<ConstraintKind> for Relation {
    fn from(k: ConstraintKind) -> Self {
        match k {
            ConstraintKind::MustLink => Relation::MustLink,
            ConstraintKind::CannotLink => Relation::CannotLink,
        }
    }
}

/// A recorded constraint; the pair is stored as `(min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Constraint {
    pub i: usize,
    pub j: usize,
    pub kind: ConstraintKind,
    pub origin: Origin,
    pub seq: usize,
}

#[derive(Debug, Clone)]
pub struct ConstraintStore {
    parent: Vec<usize>,
    size: Vec<usize>,
    /// Cannot-link adjacency between component roots.
    cl: HashMap<usize, HashSet<usize>>,
    /// Must-link adjacency between instances, for explaining conflicts.
    ml_graph: HashMap<usize, Vec<usize>>,
    constraints: Vec<Constraint>,
    queries_used: usize,
    budget: usize,
}

impl ConstraintStore {
    pub fn new(n: usize, budget: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
            cl: HashMap::new(),
            ml_graph: HashMap::new(),
            constraints: Vec::new(),
            queries_used: 0,
            budget,
        }
    }

    pub fn n(&self) -> usize {
        self.parent.len()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn queries_used(&self) -> usize {
        self.queries_used
    }

    pub fn budget_remaining(&self) -> usize {
        self.budget - self.queries_used
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    fn find(&self, mut x: usize) -> usize {
        while self.parent[x] != x {
            x = self.parent[x];
        }
        x
    }

    fn find_compress(&mut self, x: usize) -> usize {
        let root = self.find(x);
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn check(&self, i: usize, j: usize) -> Result<(), ConstraintError> {
        let n = self.n();
        for idx in [i, j] {
            if idx >= n {
                return Err(ConstraintError::OutOfRange { index: idx, n });
            }
        }
        if i == j {
            return Err(ConstraintError::SelfPair(i));
        }
        Ok(())
    }

    /// Known relation between `i` and `j`. Never consumes budget.
    ///
    /// Panics on out-of-range indices.
    pub fn relation_of(&self, i: usize, j: usize) -> Relation {
        let (ri, rj) = (self.find(i), self.find(j));
        if ri == rj {
            Relation::MustLink
        } else if self.cl.get(&ri).is_some_and(|s| s.contains(&rj)) {
            Relation::CannotLink
        } else {
            Relation::Unknown
        }
    }

    /// Record a new constraint. The pair's relation must currently be unknown.
    /// Queried constraints count against the budget.
    pub fn record(
        &mut self,
        i: usize,
        j: usize,
        kind: ConstraintKind,
        origin: Origin,
    ) -> Result<&Constraint, ConstraintError> {
        self.check(i, j)?;
        match self.relation_of(i, j) {
            Relation::Unknown => {}
            known if known == Relation::from(kind) => return Err(ConstraintError::AlreadyKnown { i, j }),
            _ => {
                return Err(ConstraintError::Inconsistent {
                    i,
                    j,
                    chain: self.explain(i, j, kind),
                })
            }
        }
        if origin == Origin::Queried && self.queries_used >= self.budget {
            return Err(ConstraintError::BudgetExhausted);
        }

        let ri = self.find_compress(i);
        let rj = self.find_compress(j);
        match kind {
            ConstraintKind::MustLink => {
                self.union_roots(ri, rj);
                self.ml_graph.entry(i).or_default().push(j);
                self.ml_graph.entry(j).or_default().push(i);
            }
            ConstraintKind::CannotLink => {
                self.cl.entry(ri).or_default().insert(rj);
                self.cl.entry(rj).or_default().insert(ri);
            }
        }
        if origin == Origin::Queried {
            self.queries_used += 1;
        }
        let seq = self.constraints.len();
        self.constraints.push(Constraint {
            i: i.min(j),
            j: i.max(j),
            kind,
            origin,
            seq,
        });
        Ok(self.constraints.last().expect("just pushed"))
    }

    fn union_roots(&mut self, a: usize, b: usize) {
        let (keep, gone) = if self.size[a] >= self.size[b] { (a, b) } else { (b, a) };
        self.parent[gone] = keep;
        self.size[keep] += self.size[gone];
        if let Some(neigh) = self.cl.remove(&gone) {
            for r in neigh {
                let set = self.cl.get_mut(&r).expect("cl adjacency is symmetric");
                set.remove(&gone);
                set.insert(keep);
                self.cl.entry(keep).or_default().insert(r);
            }
        }
        debug_assert!(!self.cl.get(&keep).is_some_and(|s| s.contains(&keep)));
    }

    /// Must-link path from `a` to `b` through recorded must-links.
    fn ml_path(&self, a: usize, b: usize) -> Vec<(usize, usize)> {
        if a == b {
            return vec![];
        }
        let mut prev: HashMap<usize, usize> = HashMap::new();
        let mut queue = VecDeque::from([a]);
        prev.insert(a, a);
        while let Some(x) = queue.pop_front() {
            if x == b {
                break;
            }
            for &y in self.ml_graph.get(&x).into_iter().flatten() {
                if let std::collections::hash_map::Entry::Vacant(e) = prev.entry(y) {
                    e.insert(x);
                    queue.push_back(y);
                }
            }
        }
        let mut path = Vec::new();
        let mut cur = b;
        while cur != a {
            let p = prev[&cur];
            path.push((p.min(cur), p.max(cur)));
            cur = p;
        }
        path.reverse();
        path
    }

    fn lookup(&self, pair: (usize, usize), kind: ConstraintKind) -> Constraint {
        *self
            .constraints
            .iter()
            .find(|c| (c.i, c.j) == pair && c.kind == kind)
            .expect("path edges are recorded constraints")
    }

    /// Recorded constraints that entail the opposite of `kind` for `(i, j)`.
    fn explain(&self, i: usize, j: usize, kind: ConstraintKind) -> Vec<Constraint> {
        let ml = |path: Vec<(usize, usize)>| -> Vec<Constraint> {
            path.into_iter()
                .map(|p| self.lookup(p, ConstraintKind::MustLink))
                .collect()
        };
        match kind {
            ConstraintKind::CannotLink => ml(self.ml_path(i, j)),
            ConstraintKind::MustLink => {
                let (ri, rj) = (self.find(i), self.find(j));
                let witness = self
                    .constraints
                    .iter()
                    .find(|c| {
                        c.kind == ConstraintKind::CannotLink && {
                            let (a, b) = (self.find(c.i), self.find(c.j));
                            (a, b) == (ri, rj) || (a, b) == (rj, ri)
                        }
                    })
                    .copied()
                    .expect("a derivable cannot-link has a witness");
                let (near_i, near_j) = if self.find(witness.i) == ri {
                    (witness.i, witness.j)
                } else {
                    (witness.j, witness.i)
                };
                let mut chain = ml(self.ml_path(i, near_i));
                chain.push(witness);
                chain.extend(ml(self.ml_path(near_j, j)));
                chain
            }
        }
    }

    /// Write the log as CSV: `i,j,kind,origin,sequence_number`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,j,kind,origin,sequence_number")?;
        for c in &self.constraints {
            writeln!(w, "{},{},{},{},{}", c.i, c.j, c.kind, c.origin, c.seq)?;
        }
        Ok(())
    }
}
