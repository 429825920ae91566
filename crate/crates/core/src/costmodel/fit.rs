use serde::{Deserialize, Serialize};

use super::ProfilePoint;
use crate::error::{Error, Result};
use crate::units::{joules_to_mj, mj_to_joules, quanta_to_secs, MilliJoules, Quanta};

/// Number of evenly spaced offsets tried for `c`.
pub const C_GRID: usize = 64;

/// Continuous relaxation `e(t) = a * exp(b * t) + c + linear * t` (t in
/// seconds, e in joules), valid on `[t_min, t_max]` quanta. `fit_exp` leaves
/// `linear` at 0; a negative `linear` turns a raw-energy fit into effective
/// energy (`linear = -P_blocking`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpCurve {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    #[serde(default)]
    pub linear: f64,
    pub t_min: Quanta,
    pub t_max: Quanta,
    pub rmse: f64,
    pub quantum_us: u32,
}

impl ExpCurve {
    /// Energy in joules at `t` quanta.
    pub fn eval(&self, t: Quanta) -> f64 {
        self.eval_secs(quanta_to_secs(t, self.quantum_us))
    }

    pub fn eval_secs(&self, secs: f64) -> f64 {
        self.a * (self.b * secs).exp() + self.c + self.linear * secs
    }

    pub fn eval_mj(&self, t: Quanta) -> MilliJoules {
        joules_to_mj(self.eval(t))
    }

    pub fn contains(&self, t: Quanta) -> bool {
        (self.t_min..=self.t_max).contains(&t)
    }
}

/// Extra energy (J) to run `tau` quanta faster than `t`.
pub fn e_plus(curve: &ExpCurve, t: Quanta, tau: Quanta) -> f64 {
    curve.eval(t - tau) - curve.eval(t)
}

/// Energy (J) saved by running `tau` quanta slower than `t`.
pub fn e_minus(curve: &ExpCurve, t: Quanta, tau: Quanta) -> f64 {
    curve.eval(t) - curve.eval(t + tau)
}

struct Candidate {
    a: f64,
    b: f64,
    c: f64,
    rmse: f64,
}

fn solve_for_offset(ts: &[f64], es: &[f64], c: f64) -> Candidate {
    let n = ts.len() as f64;
    let ys: Vec<f64> = es.iter().map(|e| (e - c).ln()).collect();
    let tm = ts.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, y) in ts.iter().zip(&ys) {
        sxy += (t - tm) * (y - ym);
        sxx += (t - tm) * (t - tm);
    }
    let b = sxy / sxx;
    let a = (ym - b * tm).exp();
    let sse: f64 = ts
        .iter()
        .zip(es)
        .map(|(t, e)| {
            let r = a * (b * t).exp() + c - e;
            r * r
        })
        .sum();
    Candidate { a, b, c, rmse: (sse / n).sqrt() }
}

/// Least-squares fit of `a * exp(b t) + c` to Pareto-optimal points.
///
/// `c` is swept over [`C_GRID`] offsets in `[0, 0.999 * min energy]`; for each
/// offset `(a, b)` comes from a log-linear regression on `energy - c`. The
/// best grid cell is then refined by golden-section search between its
/// neighbours. Two points are solved exactly with `c = 0`.
pub fn fit_exp(points: &[ProfilePoint], quantum_us: u32) -> Result<ExpCurve> {
    if points.len() < 2 {
        return Err(Error::DegenerateFit(format!("need at least 2 points, got {}", points.len())));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by_key(|p| p.time);
    let ts: Vec<f64> = sorted.iter().map(|p| quanta_to_secs(p.time, quantum_us)).collect();
    let es: Vec<f64> = sorted.iter().map(|p| mj_to_joules(p.energy_mj)).collect();
    if es.iter().all(|&e| e == es[0]) {
        return Err(Error::DegenerateFit("all energies are equal".into()));
    }
    if ts.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DegenerateFit("duplicate times".into()));
    }

    let best = if sorted.len() == 2 {
        let b = (es[1] / es[0]).ln() / (ts[1] - ts[0]);
        let a = es[0] * (-b * ts[0]).exp();
        Candidate { a, b, c: 0.0, rmse: 0.0 }
    } else {
        let e_min = es.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = 0.999 * e_min;
        let step = hi / (C_GRID - 1) as f64;
        let grid: Vec<Candidate> =
            (0..C_GRID).map(|k| solve_for_offset(&ts, &es, k as f64 * step)).collect();
        let k = (0..C_GRID)
            .min_by(|&i, &j| grid[i].rmse.total_cmp(&grid[j].rmse).then(i.cmp(&j)))
            .unwrap();
        let lo_c = if k == 0 { 0.0 } else { (k - 1) as f64 * step };
        let hi_c = if k + 1 == C_GRID { hi } else { (k + 1) as f64 * step };
        let refined = golden_section(&ts, &es, lo_c, hi_c);
        if refined.rmse < grid[k].rmse {
            refined
        } else {
            grid.into_iter().nth(k).unwrap()
        }
    };

    if !(best.b < 0.0 && best.a > 0.0 && best.a.is_finite()) {
        return Err(Error::DegenerateFit(format!(
            "fit is not decreasing (a = {}, b = {})",
            best.a, best.b
        )));
    }
    Ok(ExpCurve {
        a: best.a,
        b: best.b,
        c: best.c,
        linear: 0.0,
        t_min: sorted[0].time,
        t_max: sorted[sorted.len() - 1].time,
        rmse: best.rmse,
        quantum_us,
    })
}

fn golden_section(ts: &[f64], es: &[f64], mut lo: f64, mut hi: f64) -> Candidate {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = solve_for_offset(ts, es, x1);
    let mut f2 = solve_for_offset(ts, es, x2);
    for _ in 0..80 {
        if f1.rmse <= f2.rmse {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = solve_for_offset(ts, es, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = solve_for_offset(ts, es, x2);
        }
    }
    if f1.rmse <= f2.rmse {
        f1
    } else {
        f2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::secs_to_quanta;

    fn pts(samples: &[(f64, f64)]) -> Vec<ProfilePoint> {
        samples
            .iter()
            .enumerate()
            .map(|(i, &(t, e))| ProfilePoint {
                freq_mhz: 2000 - 100 * i as u32,
                time: secs_to_quanta(t, 1),
                energy_mj: joules_to_mj(e),
            })
            .collect()
    }

    #[test]
    fn two_point_solve() {
        let curve = fit_exp(&pts(&[(1.0, 9.0), (2.0, 5.0)]), 1).unwrap();
        let b = (5.0f64 / 9.0).ln();
        assert_eq!(curve.c, 0.0);
        assert!((curve.b - b).abs() < 1e-12);
        assert!((curve.a - 9.0 * (-b).exp()).abs() < 1e-9);
    }

    #[test]
    fn recovers_generating_curve() {
        let f = |t: f64| 2.0 * (-t).exp() + 1.0;
        let samples: Vec<_> = [0.5, 1.0, 1.5, 2.0].iter().map(|&t| (t, f(t))).collect();
        let curve = fit_exp(&pts(&samples), 1).unwrap();
        assert!((curve.a - 2.0).abs() / 2.0 < 0.01, "{curve:?}");
        assert!((curve.b + 1.0).abs() < 0.01, "{curve:?}");
        assert!((curve.c - 1.0).abs() < 0.01, "{curve:?}");
        assert_eq!(curve.t_min, 500_000);
        assert_eq!(curve.t_max, 2_000_000);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_exp(&pts(&[(1.0, 3.0)]), 1).is_err());
        assert!(matches!(
            fit_exp(&pts(&[(1.0, 3.0), (2.0, 3.0), (3.0, 3.0)]), 1),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn increments() {
        let curve = ExpCurve { a: 2.0, b: -1.0, c: 1.0, linear: 0.0, t_min: 0, t_max: 4_000_000, rmse: 0.0, quantum_us: 1 };
        let ep = e_plus(&curve, 2_000_000, 500_000);
        let expected = 2.0 * ((-1.5f64).exp() - (-2.0f64).exp());
        assert!((ep - expected).abs() < 1e-12);
        assert!((ep - 0.1756).abs() < 1e-4);
        assert_eq!(e_plus(&curve, 2_000_000, 0), 0.0);
        assert_eq!(e_minus(&curve, 2_000_000, 0), 0.0);
        assert!(ep >= e_minus(&curve, 2_000_000, 500_000));
    }
}
