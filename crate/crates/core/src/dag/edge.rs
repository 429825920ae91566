use super::{check_durations, NodeDag};
use crate::error::{Error, Result};
use crate::units::Quanta;

/// An edge of the edge-centric DAG. `payload` is the computation id, or
/// `None` for a zero-duration dependency edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeArc {
    pub tail: usize,
    pub head: usize,
    pub payload: Option<usize>,
}

/// Edge-centric DAG: nodes are dependency events, edges are computations.
///
/// Computation `i` spans nodes `2i -> 2i + 1`; the source is node `2n` and
/// the sink `2n + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeDag {
    num_nodes: usize,
    edges: Vec<EdgeArc>,
    source: usize,
    sink: usize,
}

impl EdgeDag {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[EdgeArc] {
        &self.edges
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    fn edge_duration(&self, e: &EdgeArc, durations: &[Quanta]) -> Quanta {
        e.payload.map_or(0, |id| durations[id])
    }

    /// Topological order of nodes (Kahn, smallest ready id first).
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let mut indeg = vec![0usize; self.num_nodes];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.num_nodes];
        for e in &self.edges {
            indeg[e.head] += 1;
            out[e.tail].push(e.head);
        }
        let mut ready: std::collections::BTreeSet<usize> =
            (0..self.num_nodes).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.num_nodes);
        while let Some(u) = ready.pop_first() {
            order.push(u);
            for &v in &out[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.insert(v);
                }
            }
        }
        if order.len() != self.num_nodes {
            return Err(Error::MalformedDag("edge-centric DAG has a cycle".into()));
        }
        Ok(order)
    }

    /// Length of the longest source-to-sink path.
    pub fn longest_path(&self, durations: &[Quanta]) -> Result<Quanta> {
        Ok(annotate_slack(self, durations)?.iteration_time)
    }
}

/// Splits every computation node into a tail/head pair joined by its payload
/// edge. Dependencies become dummy edges, and entry/exit computations are
/// hooked to the source/sink with dummy edges.
pub fn to_edge_centric(dag: &NodeDag) -> EdgeDag {
    let n = dag.len();
    let source = 2 * n;
    let sink = 2 * n + 1;
    let mut edges: Vec<EdgeArc> = (0..n)
        .map(|i| EdgeArc { tail: 2 * i, head: 2 * i + 1, payload: Some(i) })
        .collect();
    let mut has_pred = vec![false; n];
    let mut has_succ = vec![false; n];
    for &(u, v) in dag.edges() {
        edges.push(EdgeArc { tail: 2 * u + 1, head: 2 * v, payload: None });
        has_succ[u] = true;
        has_pred[v] = true;
    }
    for i in (0..n).filter(|&i| !has_pred[i]) {
        edges.push(EdgeArc { tail: source, head: 2 * i, payload: None });
    }
    for i in (0..n).filter(|&i| !has_succ[i]) {
        edges.push(EdgeArc { tail: 2 * i + 1, head: sink, payload: None });
    }
    EdgeDag { num_nodes: 2 * n + 2, edges, source, sink }
}

/// Earliest/latest start per node and a critical flag per edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlackAnnotation {
    pub earliest: Vec<Quanta>,
    pub latest: Vec<Quanta>,
    pub critical: Vec<bool>,
    /// Per-edge slack: `latest[head] - duration - earliest[tail]`.
    pub edge_slack: Vec<Quanta>,
    pub iteration_time: Quanta,
}

impl SlackAnnotation {
    pub fn node_slack(&self, v: usize) -> Quanta {
        self.latest[v] - self.earliest[v]
    }

    /// Smallest strictly positive edge slack, if any edge has slack.
    pub fn min_positive_slack(&self) -> Option<Quanta> {
        self.edge_slack.iter().copied().filter(|&s| s > 0).min()
    }
}

/// Forward pass for earliest starts, backward pass (anchored at the sink's
/// earliest start) for latest starts.
pub fn annotate_slack(dag: &EdgeDag, durations: &[Quanta]) -> Result<SlackAnnotation> {
    let num_payloads = dag.edges.iter().filter_map(|e| e.payload).max().map_or(0, |m| m + 1);
    if durations.len() < num_payloads {
        return Err(crate::error::invalid(format!(
            "need {num_payloads} durations, got {}",
            durations.len()
        )));
    }
    check_durations(num_payloads, &durations[..num_payloads])?;
    let order = dag.topo_order()?;
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); dag.num_nodes];
    let mut in_edges: Vec<Vec<usize>> = vec![Vec::new(); dag.num_nodes];
    for (k, e) in dag.edges.iter().enumerate() {
        out_edges[e.tail].push(k);
        in_edges[e.head].push(k);
    }
    let mut earliest = vec![0; dag.num_nodes];
    for &v in &order {
        for &k in &in_edges[v] {
            let e = &dag.edges[k];
            earliest[v] = earliest[v].max(earliest[e.tail] + dag.edge_duration(e, durations));
        }
    }
    let iteration_time = earliest[dag.sink];
    let mut latest = vec![iteration_time; dag.num_nodes];
    for &v in order.iter().rev() {
        for &k in &out_edges[v] {
            let e = &dag.edges[k];
            latest[v] = latest[v].min(latest[e.head] - dag.edge_duration(e, durations));
        }
    }
    let edge_slack: Vec<Quanta> = dag
        .edges
        .iter()
        .map(|e| latest[e.head] - dag.edge_duration(e, durations) - earliest[e.tail])
        .collect();
    let critical = edge_slack.iter().map(|&s| s == 0).collect();
    Ok(SlackAnnotation { earliest, latest, critical, edge_slack, iteration_time })
}

/// Keeps exactly the zero-slack edges. Node numbering is unchanged, so
/// removed computations leave isolated nodes behind.
pub fn critical_subdag(dag: &EdgeDag, annotation: &SlackAnnotation) -> EdgeDag {
    let edges = dag
        .edges
        .iter()
        .zip(&annotation.critical)
        .filter(|(_, &c)| c)
        .map(|(e, _)| *e)
        .collect();
    EdgeDag { num_nodes: dag.num_nodes, edges, source: dag.source, sink: dag.sink }
}
