use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    /// `N + 1` layer indices; stage `s` owns layers `boundaries[s]..boundaries[s + 1]`.
    pub boundaries: Vec<usize>,
    /// Longest stage latency over shortest stage latency.
    pub ratio: f64,
}

/// Above this many boundary sets the search switches from plain enumeration
/// to a threshold dynamic program.
const EXHAUSTIVE_LIMIT: u128 = 2_000_000;

fn binom(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn prefix_sums(latencies: &[f64]) -> Vec<f64> {
    let mut pre = Vec::with_capacity(latencies.len() + 1);
    pre.push(0.0);
    for &l in latencies {
        pre.push(pre.last().unwrap() + l);
    }
    pre
}

fn ratio_of(pre: &[f64], boundaries: &[usize]) -> f64 {
    let (mut hi, mut lo) = (f64::MIN, f64::MAX);
    for w in boundaries.windows(2) {
        let s = pre[w[1]] - pre[w[0]];
        hi = hi.max(s);
        lo = lo.min(s);
    }
    hi / lo
}

/// `a` is a strict improvement over `b`, ignoring float noise.
fn better(a: f64, b: f64) -> bool {
    a < b * (1.0 - 1e-12)
}

/// Splits consecutive layers into `num_stages` non-empty stages minimizing
/// the max/min stage latency ratio. Ties go to the lexicographically smallest
/// boundary vector.
pub fn min_imbalance_partition(layer_latencies: &[f64], num_stages: usize) -> Result<PartitionResult> {
    let layers = layer_latencies.len();
    if num_stages == 0 {
        return Err(invalid("need at least one stage"));
    }
    if num_stages > layers {
        return Err(invalid(format!(
            "cannot split {layers} layers into {num_stages} non-empty stages"
        )));
    }
    if let Some(bad) = layer_latencies.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(invalid(format!("layer latencies must be positive, got {bad}")));
    }
    let pre = prefix_sums(layer_latencies);
    let boundaries = if binom(layers - 1, num_stages - 1) <= EXHAUSTIVE_LIMIT {
        exhaustive(&pre, num_stages)
    } else {
        threshold_dp(&pre, num_stages)
    };
    let ratio = ratio_of(&pre, &boundaries);
    Ok(PartitionResult { boundaries, ratio })
}

fn exhaustive(pre: &[f64], stages: usize) -> Vec<usize> {
    let layers = pre.len() - 1;
    let mut cur = vec![0usize; stages + 1];
    cur[stages] = layers;
    let mut best: Option<(f64, Vec<usize>)> = None;

    fn rec(
        pre: &[f64],
        cur: &mut Vec<usize>,
        slot: usize,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        let stages = cur.len() - 1;
        let layers = cur[stages];
        if slot == stages {
            let r = ratio_of(pre, cur);
            if best.as_ref().is_none_or(|(b, _)| better(r, *b)) {
                *best = Some((r, cur.clone()));
            }
            return;
        }
        // leave room for the remaining stages
        let lo = cur[slot - 1] + 1;
        let hi = layers - (stages - slot);
        for b in lo..=hi {
            cur[slot] = b;
            rec(pre, cur, slot + 1, best);
        }
    }

    rec(pre, &mut cur, 1, &mut best);
    best.expect("at least one partition").1
}

fn threshold_dp(pre: &[f64], stages: usize) -> Vec<usize> {
    let layers = pre.len() - 1;
    let seg = |i: usize, j: usize| pre[j] - pre[i];
    let mut thresholds: Vec<f64> = (0..layers)
        .flat_map(|i| (i + 1..=layers).map(move |j| (i, j)))
        .map(|(i, j)| seg(i, j))
        .collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut best: Option<(f64, Vec<usize>)> = None;
    for &floor in &thresholds {
        // minmax[k][j]: smallest achievable max for layers j.. in k stages, all >= floor
        let inf = f64::INFINITY;
        let mut minmax = vec![vec![inf; layers + 1]; stages + 1];
        minmax[0][layers] = 0.0;
        for k in 1..=stages {
            for j in (0..layers).rev() {
                let mut v = inf;
                for b in j + 1..=layers {
                    let s = seg(j, b);
                    if s >= floor && minmax[k - 1][b] < inf {
                        v = v.min(s.max(minmax[k - 1][b]));
                    }
                }
                minmax[k][j] = v;
            }
        }
        if minmax[stages][0] == inf {
            continue;
        }
        let mut bounds = vec![0];
        let mut j = 0;
        for k in (1..=stages).rev() {
            let target = minmax[k][j];
            let b = (j + 1..=layers)
                .find(|&b| {
                    let s = seg(j, b);
                    s >= floor && minmax[k - 1][b] < inf && s.max(minmax[k - 1][b]) == target
                })
                .expect("reconstructible");
            bounds.push(b);
            j = b;
        }
        let r = ratio_of(pre, &bounds);
        let replace = match &best {
            None => true,
            Some((br, bb)) => better(r, *br) || (!better(*br, r) && bounds < *bb),
        };
        if replace {
            best = Some((r, bounds));
        }
    }
    best.expect("the zero floor always admits a partition").1
}
