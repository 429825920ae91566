use super::{FlowEdge, FlowGraph};
use crate::costmodel::ExpCurve;
use crate::dag::EdgeDag;
use crate::error::{Error, Result};
use crate::units::Quanta;

/// A capacity DAG together with the computation carried by each flow edge.
#[derive(Debug, Clone)]
pub struct CapacityDag {
    pub graph: FlowGraph,
    /// Computation id per flow edge, `None` for dependency edges.
    pub payloads: Vec<Option<usize>>,
}

/// Annotates a critical DAG with flow bounds for a time step of `delta`
/// quanta.
///
/// A computation at planned time `t` gets `(e-, e+)` when it can move either
/// way by `delta`, `(0, e+)` when it cannot be slowed, `(e-, inf)` when it
/// cannot be sped up and `(0, inf)` when neither is possible. Curves model
/// effective energy, so `e+`/`e-` are effective-energy changes, taken as
/// differences of the half-up rounded millijoule values that schedules
/// store; a cut's cost is then exactly the planned energy change. Dependency
/// edges and computations without a curve get `(0, inf)`.
pub fn build_capacity_dag(
    critical: &EdgeDag,
    durations: &[Quanta],
    curves: &[Option<ExpCurve>],
    delta: Quanta,
) -> Result<CapacityDag> {
    let effective = |curve: &ExpCurve, t: Quanta| curve.eval_mj(t);
    let mut edges = Vec::with_capacity(critical.edges().len());
    let mut payloads = Vec::with_capacity(critical.edges().len());
    for arc in critical.edges() {
        let (lower, upper) = match arc.payload.and_then(|id| curves[id].as_ref().map(|c| (id, c))) {
            None => (0, None),
            Some((id, curve)) => {
                let t = durations[id];
                if !curve.contains(t) {
                    return Err(Error::OutOfInterval { id, duration: t, t_min: curve.t_min, t_max: curve.t_max });
                }
                let can_speed = t - delta >= curve.t_min;
                let can_slow = t + delta <= curve.t_max;
                let e_plus = || effective(curve, t - delta) - effective(curve, t);
                let e_minus = || effective(curve, t) - effective(curve, t + delta);
                match (can_speed, can_slow) {
                    (true, true) => {
                        let up = e_plus();
                        (e_minus().min(up), Some(up))
                    }
                    (true, false) => (0, Some(e_plus())),
                    (false, true) => (e_minus(), None),
                    (false, false) => (0, None),
                }
            }
        };
        edges.push(FlowEdge { from: arc.tail, to: arc.head, lower, upper });
        payloads.push(arc.payload);
    }
    let graph = FlowGraph::new(critical.num_nodes(), critical.source(), critical.sink(), edges)?;
    Ok(CapacityDag { graph, payloads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::{e_minus, e_plus};
    use crate::units::joules_to_mj;
    use crate::dag::{to_edge_centric, Computation, NodeDag};

    fn curve() -> ExpCurve {
        ExpCurve { a: 200.0, b: -1.0, c: 10.0, linear: 0.0, t_min: 1_000, t_max: 3_000, rmse: 0.0, quantum_us: 1000 }
    }

    fn bounds_at(t: Quanta) -> (i64, Option<i64>) {
        let dag = NodeDag::new(vec![Computation::forward(0, 0, 0)], vec![]).unwrap();
        let e = to_edge_centric(&dag);
        let cap = build_capacity_dag(&e, &[t], &[Some(curve())], 500).unwrap();
        let k = cap.payloads.iter().position(|p| *p == Some(0)).unwrap();
        let dummy = cap.payloads.iter().position(|p| p.is_none()).unwrap();
        assert_eq!(cap.graph.edges()[dummy].lower, 0);
        assert_eq!(cap.graph.edges()[dummy].upper, None);
        (cap.graph.edges()[k].lower, cap.graph.edges()[k].upper)
    }

    #[test]
    fn slowest_fastest_interior() {
        let c = curve();
        let plus = |t| c.eval_mj(t - 500) - c.eval_mj(t);
        let minus = |t| c.eval_mj(t) - c.eval_mj(t + 500);
        assert_eq!(bounds_at(3_000), (0, Some(plus(3_000))));
        assert_eq!(bounds_at(1_000), (minus(1_000), None));
        let (l, u) = bounds_at(2_000);
        assert_eq!((l, u), (minus(2_000), Some(plus(2_000))));
        assert!(l <= u.unwrap());
        // integer differences stay within a millijoule of the exact increments
        assert!((plus(2_000) - joules_to_mj(e_plus(&c, 2_000, 500))).abs() <= 1);
        assert!((minus(2_000) - joules_to_mj(e_minus(&c, 2_000, 500))).abs() <= 1);
    }

    #[test]
    fn out_of_interval_rejected() {
        let dag = NodeDag::new(vec![Computation::forward(0, 0, 0)], vec![]).unwrap();
        let e = to_edge_centric(&dag);
        let err = build_capacity_dag(&e, &[5_000], &[Some(curve())], 500);
        assert!(matches!(err, Err(Error::OutOfInterval { .. })));
    }
}
