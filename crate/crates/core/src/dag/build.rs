use super::{Computation, NodeDag};
use crate::error::{invalid, Result};

fn forward_id(stage: usize, mb: usize, m: usize) -> usize {
    stage * 2 * m + mb
}

fn backward_id(stage: usize, mb: usize, m: usize) -> usize {
    stage * 2 * m + m + mb
}

fn check_shape(n: usize, m: usize) -> Result<()> {
    if n < 1 || m < 1 {
        return Err(invalid(format!(
            "pipeline needs at least one stage and one microbatch, got {n}x{m}"
        )));
    }
    Ok(())
}

/// Builds the DAG of a pipeline given each stage's instruction order.
/// `order(stage)` yields `(is_backward, microbatch)` pairs.
fn assemble(
    n: usize,
    m: usize,
    order: impl Fn(usize) -> Vec<(bool, usize)>,
) -> Result<NodeDag> {
    let mut computations = Vec::with_capacity(2 * n * m);
    for s in 0..n {
        for mb in 0..m {
            computations.push(Computation::forward(forward_id(s, mb, m), s, mb));
        }
        for mb in 0..m {
            computations.push(Computation::backward(backward_id(s, mb, m), s, mb));
        }
    }
    let id = |s: usize, (bwd, mb): (bool, usize)| {
        if bwd {
            backward_id(s, mb, m)
        } else {
            forward_id(s, mb, m)
        }
    };
    let mut edges = Vec::new();
    for s in 0..n {
        let seq = order(s);
        debug_assert_eq!(seq.len(), 2 * m);
        for pair in seq.windows(2) {
            edges.push((id(s, pair[0]), id(s, pair[1])));
        }
    }
    for s in 0..n.saturating_sub(1) {
        for mb in 0..m {
            edges.push((forward_id(s, mb, m), forward_id(s + 1, mb, m)));
            edges.push((backward_id(s + 1, mb, m), backward_id(s, mb, m)));
        }
    }
    NodeDag::new(computations, edges)
}

/// One-forward-one-backward schedule: stage `s` warms up with
/// `min(M, N - s)` forwards, alternates backward/forward in steady state and
/// drains the remaining backwards.
pub fn build_1f1b(num_stages: usize, num_microbatches: usize) -> Result<NodeDag> {
    check_shape(num_stages, num_microbatches)?;
    let (n, m) = (num_stages, num_microbatches);
    assemble(n, m, |s| {
        let warmup = m.min(n - s);
        let mut seq: Vec<(bool, usize)> = (0..warmup).map(|mb| (false, mb)).collect();
        let mut next_fwd = warmup;
        let mut next_bwd = 0;
        while next_fwd < m {
            seq.push((true, next_bwd));
            seq.push((false, next_fwd));
            next_bwd += 1;
            next_fwd += 1;
        }
        seq.extend((next_bwd..m).map(|mb| (true, mb)));
        seq
    })
}

/// GPipe: every stage runs all forwards, then all backwards in ascending
/// microbatch order.
pub fn build_gpipe(num_stages: usize, num_microbatches: usize) -> Result<NodeDag> {
    check_shape(num_stages, num_microbatches)?;
    let m = num_microbatches;
    assemble(num_stages, m, |_| {
        (0..m).map(|mb| (false, mb)).chain((0..m).map(|mb| (true, mb))).collect()
    })
}

/// Parses `1f1b:<N>x<M>`, `gpipe:<N>x<M>` or `file:<path>`.
pub fn parse_dag_spec(spec: &str) -> Result<NodeDag> {
    let (scheme, rest) = spec
        .split_once(':')
        .ok_or_else(|| invalid(format!("bad DAG spec {spec:?}")))?;
    let shape = |rest: &str| -> Result<(usize, usize)> {
        let (n, m) = rest
            .split_once('x')
            .ok_or_else(|| invalid(format!("expected <N>x<M>, got {rest:?}")))?;
        let parse = |v: &str| {
            v.trim().parse::<usize>().map_err(|_| invalid(format!("bad number {v:?} in DAG spec")))
        };
        Ok((parse(n)?, parse(m)?))
    };
    match scheme {
        "1f1b" => {
            let (n, m) = shape(rest)?;
            build_1f1b(n, m)
        }
        "gpipe" => {
            let (n, m) = shape(rest)?;
            build_gpipe(n, m)
        }
        "file" => NodeDag::from_json_file(rest),
        other => Err(invalid(format!("unknown DAG scheme {other:?}"))),
    }
}
