use std::fmt::Write as _;

use super::{SavingsRow, Timeline};
use crate::frontier::EnergySchedule;
use crate::units::quanta_to_us;
use crate::workload::Workload;

/// `computation_id,stage,microbatch,kind,start_us,end_us,freq_mhz`
pub fn timeline_csv(w: &Workload, timeline: &Timeline, schedule: &EnergySchedule) -> String {
    let q = w.quantum_us();
    let mut out = String::from("computation_id,stage,microbatch,kind,start_us,end_us,freq_mhz\n");
    for c in w.dag().computations() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.id,
            c.stage,
            c.microbatch.map(|m| m.to_string()).unwrap_or_default(),
            c.kind.as_str(),
            quanta_to_us(timeline.start[c.id], q),
            quanta_to_us(timeline.end[c.id], q),
            schedule.frequencies[c.id].map(|f| f.to_string()).unwrap_or_default(),
        );
    }
    out
}

/// `factor,savings_pct,savings_mj`
pub fn savings_csv(rows: &[SavingsRow]) -> String {
    let mut out = String::from("factor,savings_pct,savings_mj\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.4},{}", r.factor, r.savings_pct, r.savings_mj);
    }
    out
}

/// Gantt chart: one row per stage, boxes shaded by frequency (darker is
/// faster) and labelled with the microbatch.
pub fn timeline_svg(w: &Workload, timeline: &Timeline, schedule: &EnergySchedule) -> String {
    const ROW: f64 = 30.0;
    const LEFT: f64 = 60.0;
    const WIDTH: f64 = 900.0;
    let total = timeline.iteration_time.max(1) as f64;
    let scale = WIDTH / total;
    let freqs: Vec<u32> = schedule.frequencies.iter().flatten().copied().collect();
    let (lo, hi) = (
        freqs.iter().copied().min().unwrap_or(0) as f64,
        freqs.iter().copied().max().unwrap_or(0) as f64,
    );
    let height = ROW * w.num_stages() as f64 + 20.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="10">"#,
        LEFT + WIDTH + 10.0
    );
    for s in 0..w.num_stages() {
        let _ = writeln!(out, r#"<text x="4" y="{}">stage {s}</text>"#, ROW * s as f64 + 19.0);
    }
    for c in w.dag().computations() {
        let x = LEFT + timeline.start[c.id] as f64 * scale;
        let width = ((timeline.end[c.id] - timeline.start[c.id]) as f64 * scale).max(0.5);
        let y = ROW * c.stage as f64 + 4.0;
        let shade = match schedule.frequencies[c.id] {
            Some(f) if hi > lo => 0.35 + 0.6 * (f as f64 - lo) / (hi - lo),
            Some(_) => 0.95,
            None => 0.2,
        };
        let (r, g, b) = match c.kind.as_str() {
            "forward" => (30, 90, 200),
            "backward" => (200, 80, 30),
            _ => (120, 120, 120),
        };
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{y}" width="{width:.2}" height="{}" fill="rgb({r},{g},{b})" fill-opacity="{shade:.2}" stroke="black" stroke-width="0.5"/>"#,
            ROW - 8.0
        );
        if let Some(m) = c.microbatch {
            let _ = writeln!(out, r#"<text x="{:.2}" y="{}">{m}</text>"#, x + 2.0, y + 14.0);
        }
    }
    out.push_str("</svg>\n");
    out
}
