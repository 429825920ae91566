//! Pipeline computation DAGs.
//!
//! A [`NodeDag`] has forward, backward and constant computations as nodes and
//! their dependencies as edges. Entry and exit computations are implicitly
//! attached to a virtual zero-duration source and sink, whose ids are
//! `len()` and `len() + 1`.
//!
//! The frontier search works on the edge-centric form ([`EdgeDag`]), where
//! every computation becomes an edge between two dependency events.

mod build;
mod edge;
mod partition;

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use build::{build_1f1b, build_gpipe, parse_dag_spec};
pub use edge::{annotate_slack, critical_subdag, to_edge_centric, EdgeArc, EdgeDag, SlackAnnotation};
pub use partition::{min_imbalance_partition, PartitionResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Forward,
    Backward,
    Constant,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Forward => "forward",
            Kind::Backward => "backward",
            Kind::Constant => "constant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Computation {
    pub id: usize,
    pub stage: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub microbatch: Option<usize>,
    pub kind: Kind,
    /// Fixed duration of a constant-time operation (e.g. communication).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_us: Option<u64>,
}

impl Computation {
    pub fn forward(id: usize, stage: usize, microbatch: usize) -> Self {
        Self { id, stage, microbatch: Some(microbatch), kind: Kind::Forward, duration_us: None }
    }

    pub fn backward(id: usize, stage: usize, microbatch: usize) -> Self {
        Self { id, stage, microbatch: Some(microbatch), kind: Kind::Backward, duration_us: None }
    }

    pub fn constant(id: usize, stage: usize) -> Self {
        Self { id, stage, microbatch: None, kind: Kind::Constant, duration_us: None }
    }
}

/// Node-centric computation DAG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeDag {
    computations: Vec<Computation>,
    edges: Vec<(usize, usize)>,
}

#[derive(Deserialize)]
struct RawDag {
    computations: Vec<Computation>,
    #[serde(default)]
    edges: Vec<(usize, usize)>,
}

impl<'de> Deserialize<'de> for NodeDag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawDag::deserialize(d)?;
        NodeDag::new(raw.computations, raw.edges).map_err(serde::de::Error::custom)
    }
}

impl NodeDag {
    /// Validates and builds a DAG. Computations may be given in any order but
    /// their ids must be exactly `0..n`. Duplicate edges are collapsed.
    pub fn new(mut computations: Vec<Computation>, edges: Vec<(usize, usize)>) -> Result<Self> {
        computations.sort_by_key(|c| c.id);
        for (i, c) in computations.iter().enumerate() {
            if c.id != i {
                return Err(Error::MalformedDag(format!(
                    "computation ids must be dense 0..{}, found {}",
                    computations.len(),
                    c.id
                )));
            }
            if c.kind != Kind::Constant && c.microbatch.is_none() {
                return Err(Error::MalformedDag(format!(
                    "{} computation {} has no microbatch",
                    c.kind.as_str(),
                    c.id
                )));
            }
            if c.kind != Kind::Constant && c.duration_us.is_some() {
                return Err(Error::MalformedDag(format!(
                    "only constant computations may carry a fixed duration (id {})",
                    c.id
                )));
            }
        }
        if computations.is_empty() {
            return Err(Error::MalformedDag("DAG has no computations".into()));
        }
        let n = computations.len();
        let mut seen = std::collections::HashSet::new();
        let mut deduped = Vec::with_capacity(edges.len());
        for &(u, v) in &edges {
            if u >= n || v >= n {
                return Err(Error::MalformedDag(format!("edge ({u}, {v}) references unknown id")));
            }
            if u == v {
                return Err(Error::MalformedDag(format!("self loop on {u}")));
            }
            if seen.insert((u, v)) {
                deduped.push((u, v));
            }
        }
        let dag = Self { computations, edges: deduped };
        dag.topo_order()?;
        Ok(dag)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("DAG serializes")
    }

    pub fn computations(&self) -> &[Computation] {
        &self.computations
    }

    pub fn computation(&self, id: usize) -> &Computation {
        &self.computations[id]
    }

    /// Dependency edges between computations (source/sink attachment is implicit).
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.computations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.computations.is_empty()
    }

    pub fn source(&self) -> usize {
        self.len()
    }

    pub fn sink(&self) -> usize {
        self.len() + 1
    }

    pub fn num_stages(&self) -> usize {
        self.computations.iter().map(|c| c.stage + 1).max().unwrap_or(0)
    }

    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut preds = vec![Vec::new(); self.len()];
        for &(u, v) in &self.edges {
            preds[v].push(u);
        }
        preds
    }

    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut succs = vec![Vec::new(); self.len()];
        for &(u, v) in &self.edges {
            succs[u].push(v);
        }
        succs
    }

    /// Kahn's algorithm, smallest ready id first.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let n = self.len();
        let succs = self.successors();
        let mut indeg = vec![0usize; n];
        for &(_, v) in &self.edges {
            indeg[v] += 1;
        }
        let mut ready: std::collections::BTreeSet<usize> =
            (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = ready.pop_first() {
            order.push(u);
            for &v in &succs[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.insert(v);
                }
            }
        }
        if order.len() != n {
            return Err(Error::MalformedDag("dependency cycle".into()));
        }
        Ok(order)
    }

    /// Whether `u` must complete before `v` starts (transitively).
    pub fn precedes(&self, u: usize, v: usize) -> bool {
        let succs = self.successors();
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([u]);
        while let Some(x) = queue.pop_front() {
            for &y in &succs[x] {
                if y == v {
                    return true;
                }
                if !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        false
    }

    /// Ids of computations in `stage`, in id order.
    pub fn stage_members(&self, stage: usize) -> Vec<usize> {
        self.computations.iter().filter(|c| c.stage == stage).map(|c| c.id).collect()
    }
}

pub(crate) fn check_durations(dag_len: usize, durations: &[i64]) -> Result<()> {
    if durations.len() != dag_len {
        return Err(invalid(format!(
            "expected {dag_len} durations, got {}",
            durations.len()
        )));
    }
    if let Some(d) = durations.iter().find(|&&d| d < 0) {
        return Err(invalid(format!("negative duration {d}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_cycles_and_bad_ids() {
        let comps = vec![Computation::constant(0, 0), Computation::constant(1, 0)];
        assert!(matches!(
            NodeDag::new(comps.clone(), vec![(0, 1), (1, 0)]),
            Err(Error::MalformedDag(_))
        ));
        assert!(NodeDag::new(comps.clone(), vec![(0, 2)]).is_err());
        let gap = vec![Computation::constant(0, 0), Computation::constant(2, 0)];
        assert!(NodeDag::new(gap, vec![]).is_err());
        let mut fwd = Computation::forward(0, 0, 0);
        fwd.microbatch = None;
        assert!(NodeDag::new(vec![fwd], vec![]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"computations":[{"id":1,"stage":0,"microbatch":0,"kind":"backward"},
            {"id":0,"stage":0,"microbatch":0,"kind":"forward"},
            {"id":2,"stage":0,"kind":"constant","duration_us":50}],"edges":[[0,1],[1,2]]}"#;
        let dag = NodeDag::from_json_str(text).unwrap();
        assert_eq!(dag.computation(0).kind, Kind::Forward);
        assert_eq!(dag.computation(2).duration_us, Some(50));
        let again = NodeDag::from_json_str(&dag.to_json_string()).unwrap();
        assert_eq!(dag, again);
        assert!(NodeDag::from_json_str(r#"{"computations":[],"edges":[]}"#).is_err());
    }

    #[test]
    fn precedence_is_transitive() {
        let dag = build_1f1b(2, 2).unwrap();
        // F(0,0) precedes B(0,0) through the stage-1 round trip.
        assert!(dag.precedes(0, 2));
        assert!(!dag.precedes(2, 0));
    }
}
