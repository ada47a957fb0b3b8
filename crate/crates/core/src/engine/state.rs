use serde::{Deserialize, Serialize};

/// Instances temporarily assumed to share a cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuperInstance {
    pub id: usize,
    /// Sorted member indices.
    pub members: Vec<usize>,
    /// Sorted members that may be queried.
    pub train_members: Vec<usize>,
    pub representative: usize,
    /// Set once a split attempt produced a single child.
    #[serde(default)]
    pub tried_splitting: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    /// Ids of the super-instances in this cluster.
    pub super_instances: Vec<usize>,
}

/// Instance-level view of a clustering: one cluster label per instance,
/// numbered by first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    pub assignment: Vec<usize>,
}

impl Clustering {
    /// Normalize arbitrary labels to first-appearance numbering.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self { assignment }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.assignment.iter().max().map_or(0, |m| m + 1)
    }

    /// Member lists, one per cluster label.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters()];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

/// The three-level hierarchy: instances in super-instances in clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineState {
    pub n: usize,
    pub super_instances: Vec<SuperInstance>,
    pub clusters: Vec<Cluster>,
    pub next_id: usize,
}

impl EngineState {
    pub(crate) fn initial(n: usize, train: Vec<usize>, representative: usize) -> Self {
        Self {
            n,
            super_instances: vec![SuperInstance {
                id: 0,
                members: (0..n).collect(),
                train_members: train,
                representative,
                tried_splitting: false,
            }],
            clusters: vec![Cluster {
                id: 1,
                super_instances: vec![0],
            }],
            next_id: 2,
        }
    }

    pub(crate) fn fresh_id(&mut self) -> usize {
        self.next_id += 1;
        self.next_id - 1
    }

    pub fn si(&self, id: usize) -> &SuperInstance {
        self.super_instances
            .iter()
            .find(|s| s.id == id)
            .unwrap_or_else(|| panic!("no live super-instance {id}"))
    }

    pub(crate) fn si_mut(&mut self, id: usize) -> &mut SuperInstance {
        self.super_instances
            .iter_mut()
            .find(|s| s.id == id)
            .unwrap_or_else(|| panic!("no live super-instance {id}"))
    }

    pub(crate) fn cluster_index_of(&self, si_id: usize) -> usize {
        self.clusters
            .iter()
            .position(|c| c.super_instances.contains(&si_id))
            .unwrap_or_else(|| panic!("super-instance {si_id} is in no cluster"))
    }

    /// Instance-level assignment; cluster order follows `clusters`.
    pub fn clustering(&self) -> Clustering {
        let mut labels = vec![usize::MAX; self.n];
        for (c, cluster) in self.clusters.iter().enumerate() {
            for &sid in &cluster.super_instances {
                for &i in &self.si(sid).members {
                    labels[i] = c;
                }
            }
        }
        Clustering::from_labels(&labels)
    }

    /// Live super-instances partition the instances and clusters partition
    /// the live super-instances. Returns a description of the first violation.
    pub fn check_invariants(&self, train_mask: &[bool]) -> Result<(), String> {
        let mut seen = vec![false; self.n];
        for si in &self.super_instances {
            if si.members.is_empty() {
                return Err(format!("super-instance {} is empty", si.id));
            }
            if !si.members.windows(2).all(|w| w[0] < w[1]) {
                return Err(format!("super-instance {} members are not sorted", si.id));
            }
            for &i in &si.members {
                if i >= self.n || std::mem::replace(&mut seen[i], true) {
                    return Err(format!("instance {i} is duplicated or out of range"));
                }
            }
            let expected: Vec<usize> = si.members.iter().copied().filter(|&i| train_mask[i]).collect();
            if expected != si.train_members {
                return Err(format!("super-instance {} has stale train members", si.id));
            }
            if !si.train_members.contains(&si.representative) {
                return Err(format!("super-instance {} representative is not a train member", si.id));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(format!("instance {missing} belongs to no super-instance"));
        }
        let mut si_seen: Vec<usize> = Vec::new();
        for c in &self.clusters {
            if c.super_instances.is_empty() {
                return Err(format!("cluster {} is empty", c.id));
            }
            si_seen.extend(&c.super_instances);
        }
        si_seen.sort_unstable();
        let mut live: Vec<usize> = self.super_instances.iter().map(|s| s.id).collect();
        live.sort_unstable();
        if si_seen != live {
            return Err("clusters do not partition the live super-instances".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_assigns_everyone_together() {
        let s = EngineState::initial(4, vec![0, 1, 2, 3], 1);
        assert_eq!(s.clustering().assignment, vec![0, 0, 0, 0]);
        s.check_invariants(&[true; 4]).unwrap();
    }

    #[test]
    fn first_appearance_numbering() {
        let c = Clustering::from_labels(&[7, 7, 2, 9, 2]);
        assert_eq!(c.assignment, vec![0, 0, 1, 2, 1]);
        assert_eq!(c.n_clusters(), 3);
        assert_eq!(c.clusters(), vec![vec![0, 1], vec![2, 4], vec![3]]);
    }

    #[test]
    fn invariant_violations_are_reported() {
        let mut s = EngineState::initial(3, vec![0, 2], 0);
        s.super_instances[0].members = vec![0, 1];
        s.super_instances[0].train_members = vec![0];
        assert!(s.check_invariants(&[true, false, true]).is_err());
        let s = EngineState::initial(3, vec![0, 2], 1);
        assert!(s.check_invariants(&[true, false, true]).is_err());
    }
}
