//! Max flow with edge lower bounds, minimum cuts, and the capacity DAG used
//! to pick which computations to speed up or slow down.

mod capacity;

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{invalid, Result};
use crate::units::MilliJoules;

pub use capacity::{build_capacity_dag, CapacityDag};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowEdge {
    pub from: usize,
    pub to: usize,
    pub lower: MilliJoules,
    /// `None` is unbounded.
    pub upper: Option<MilliJoules>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowGraph {
    num_nodes: usize,
    edges: Vec<FlowEdge>,
    source: usize,
    sink: usize,
    infinity: MilliJoules,
}

impl FlowGraph {
    pub fn new(num_nodes: usize, source: usize, sink: usize, edges: Vec<FlowEdge>) -> Result<Self> {
        if source >= num_nodes || sink >= num_nodes || source == sink {
            return Err(invalid("source and sink must be distinct nodes of the graph"));
        }
        let mut finite: MilliJoules = 0;
        for e in &edges {
            if e.from >= num_nodes || e.to >= num_nodes {
                return Err(invalid(format!("edge {}->{} references unknown node", e.from, e.to)));
            }
            if e.lower < 0 || e.upper.is_some_and(|u| u < e.lower) {
                return Err(invalid(format!(
                    "edge {}->{} needs 0 <= lower <= upper, got ({}, {:?})",
                    e.from, e.to, e.lower, e.upper
                )));
            }
            finite = finite
                .checked_add(e.lower)
                .and_then(|s| s.checked_add(e.upper.unwrap_or(0)))
                .ok_or_else(|| invalid("capacities overflow"))?;
        }
        // keep headroom for sums of several sentinels
        if finite > i64::MAX / 4 / (edges.len() as i64 + 2) {
            return Err(invalid("capacities overflow"));
        }
        Ok(Self { num_nodes, edges, source, sink, infinity: finite + 1 })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[FlowEdge] {
        &self.edges
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    /// Stand-in for unbounded capacity: all finite bounds summed, plus one.
    pub fn infinity(&self) -> MilliJoules {
        self.infinity
    }

    pub fn upper(&self, k: usize) -> MilliJoules {
        self.edges[k].upper.unwrap_or(self.infinity)
    }

    /// DOT-style dump for inspection.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph capacity {\n");
        let _ = writeln!(out, "  {} [shape=box,label=\"s\"];", self.source);
        let _ = writeln!(out, "  {} [shape=box,label=\"t\"];", self.sink);
        for e in &self.edges {
            let upper = e.upper.map_or("inf".to_string(), |u| u.to_string());
            let _ = writeln!(out, "  {} -> {} [label=\"({}, {})\"];", e.from, e.to, e.lower, upper);
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowAssignment {
    pub flows: Vec<MilliJoules>,
    pub value: MilliJoules,
    /// Augmenting paths used across both phases.
    pub augmentations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MaxFlow {
    Feasible(FlowAssignment),
    Infeasible,
}

impl MaxFlow {
    pub fn feasible(self) -> Option<FlowAssignment> {
        match self {
            MaxFlow::Feasible(f) => Some(f),
            MaxFlow::Infeasible => None,
        }
    }
}

/// Residual network with arcs stored in forward/backward pairs.
struct Residual {
    adj: Vec<Vec<usize>>,
    head: Vec<usize>,
    cap: Vec<MilliJoules>,
}

impl Residual {
    fn new(n: usize) -> Self {
        Self { adj: vec![Vec::new(); n], head: Vec::new(), cap: Vec::new() }
    }

    /// Adds `u -> v` with capacity `c` and its reverse with capacity `rc`;
    /// returns the forward arc id.
    fn add(&mut self, u: usize, v: usize, c: MilliJoules, rc: MilliJoules) -> usize {
        let id = self.head.len();
        self.head.push(v);
        self.cap.push(c);
        self.adj[u].push(id);
        self.head.push(u);
        self.cap.push(rc);
        self.adj[v].push(id + 1);
        id
    }

    /// Edmonds-Karp. BFS visits arcs in ascending id order.
    fn max_flow(&mut self, s: usize, t: usize, augmentations: &mut usize) -> MilliJoules {
        let n = self.adj.len();
        let mut total = 0;
        loop {
            let mut parent = vec![usize::MAX; n];
            let mut seen = vec![false; n];
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                if u == t {
                    break;
                }
                for &a in &self.adj[u] {
                    let v = self.head[a];
                    if !seen[v] && self.cap[a] > 0 {
                        seen[v] = true;
                        parent[v] = a;
                        queue.push_back(v);
                    }
                }
            }
            if !seen[t] {
                return total;
            }
            let mut bottleneck = MilliJoules::MAX;
            let mut v = t;
            while v != s {
                let a = parent[v];
                bottleneck = bottleneck.min(self.cap[a]);
                v = self.head[a ^ 1];
            }
            let mut v = t;
            while v != s {
                let a = parent[v];
                self.cap[a] -= bottleneck;
                self.cap[a ^ 1] += bottleneck;
                v = self.head[a ^ 1];
            }
            total += bottleneck;
            *augmentations += 1;
        }
    }
}

/// Maximum flow respecting per-edge lower bounds.
///
/// A feasible flow is first found on an auxiliary graph with a super source
/// and sink (`s' -> v` carries the lower bounds entering `v`, `v -> t'` those
/// leaving it, `t -> s` is unbounded); it exists iff that flow saturates
/// every `s'` edge. The feasible flow is then pushed to a maximum on the
/// residual graph with `u - f` forward and `f - l` backward.
pub fn max_flow_lower_bounds(g: &FlowGraph) -> MaxFlow {
    let n = g.num_nodes;
    let inf = g.infinity;
    let (s_aux, t_aux) = (n, n + 1);
    let mut aux = Residual::new(n + 2);
    let arcs: Vec<usize> = (0..g.edges.len())
        .map(|k| {
            let e = g.edges[k];
            aux.add(e.from, e.to, g.upper(k) - e.lower, 0)
        })
        .collect();
    let mut lower_in = vec![0; n];
    let mut lower_out = vec![0; n];
    for e in &g.edges {
        lower_in[e.to] += e.lower;
        lower_out[e.from] += e.lower;
    }
    let mut demand = 0;
    for v in 0..n {
        if lower_in[v] > 0 {
            aux.add(s_aux, v, lower_in[v], 0);
            demand += lower_in[v];
        }
        if lower_out[v] > 0 {
            aux.add(v, t_aux, lower_out[v], 0);
        }
    }
    aux.add(g.sink, g.source, inf, 0);
    let mut augmentations = 0;
    if aux.max_flow(s_aux, t_aux, &mut augmentations) != demand {
        return MaxFlow::Infeasible;
    }
    let feasible: Vec<MilliJoules> = arcs
        .iter()
        .zip(&g.edges)
        .map(|(&a, e)| aux.cap[a ^ 1] + e.lower)
        .collect();

    let mut res = Residual::new(n);
    let arcs: Vec<usize> = (0..g.edges.len())
        .map(|k| {
            let e = g.edges[k];
            res.add(e.from, e.to, g.upper(k) - feasible[k], feasible[k] - e.lower)
        })
        .collect();
    res.max_flow(g.source, g.sink, &mut augmentations);
    let flows: Vec<MilliJoules> =
        arcs.iter().zip(&g.edges).map(|(&a, e)| res.cap[a ^ 1] + e.lower).collect();
    let value = net_outflow(g, &flows, g.source);
    MaxFlow::Feasible(FlowAssignment { flows, value, augmentations })
}

fn net_outflow(g: &FlowGraph, flows: &[MilliJoules], v: usize) -> MilliJoules {
    g.edges
        .iter()
        .zip(flows)
        .map(|(e, &f)| {
            if e.from == v && e.to != v {
                f
            } else if e.to == v && e.from != v {
                -f
            } else {
                0
            }
        })
        .sum()
}

/// Checks conservation at inner nodes and `lower <= flow <= upper`.
pub fn is_valid_flow(g: &FlowGraph, flows: &[MilliJoules]) -> bool {
    if flows.len() != g.edges.len() {
        return false;
    }
    let bounded = g
        .edges
        .iter()
        .enumerate()
        .all(|(k, e)| e.lower <= flows[k] && flows[k] <= g.upper(k));
    bounded
        && (0..g.num_nodes)
            .filter(|&v| v != g.source && v != g.sink)
            .all(|v| net_outflow(g, flows, v) == 0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CutResult {
    /// `in_source_side[v]` is true for nodes in S.
    pub in_source_side: Vec<bool>,
    /// Edge ids crossing S -> T.
    pub forward: Vec<usize>,
    /// Edge ids crossing T -> S.
    pub backward: Vec<usize>,
    /// `sum(upper of forward) - sum(lower of backward)`, unbounded uppers
    /// counted as the graph's sentinel.
    pub cost: MilliJoules,
    /// Whether an unbounded edge crosses S -> T.
    pub unbounded: bool,
}

/// Reads the minimum cut off a maximum flow: S is everything reachable from
/// the source through edges with `flow < upper` (forward) or `flow > lower`
/// (backward).
pub fn min_cut_from_flow(g: &FlowGraph, f: &FlowAssignment) -> CutResult {
    let n = g.num_nodes;
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut inc: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, e) in g.edges.iter().enumerate() {
        out[e.from].push(k);
        inc[e.to].push(k);
    }
    let mut side = vec![false; n];
    side[g.source] = true;
    let mut queue = VecDeque::from([g.source]);
    while let Some(u) = queue.pop_front() {
        for &k in &out[u] {
            let v = g.edges[k].to;
            if !side[v] && f.flows[k] < g.upper(k) {
                side[v] = true;
                queue.push_back(v);
            }
        }
        for &k in &inc[u] {
            let v = g.edges[k].from;
            if !side[v] && f.flows[k] > g.edges[k].lower {
                side[v] = true;
                queue.push_back(v);
            }
        }
    }
    cut_for_side(g, side)
}

/// Evaluates the cut defined by a source-side membership vector.
pub fn cut_for_side(g: &FlowGraph, in_source_side: Vec<bool>) -> CutResult {
    let mut forward = Vec::new();
    let mut backward = Vec::new();
    let mut cost = 0;
    let mut unbounded = false;
    for (k, e) in g.edges.iter().enumerate() {
        match (in_source_side[e.from], in_source_side[e.to]) {
            (true, false) => {
                forward.push(k);
                cost += g.upper(k);
                unbounded |= e.upper.is_none();
            }
            (false, true) => {
                backward.push(k);
                cost -= e.lower;
            }
            _ => {}
        }
    }
    CutResult { in_source_side, forward, backward, cost, unbounded }
}
