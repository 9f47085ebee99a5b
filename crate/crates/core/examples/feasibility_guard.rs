//! A pulse that arrives faster than the memory can track: the schedule
//! drops back to full coupling instead of demanding `κ > κ_max`.
//!
//! `cargo run --example feasibility_guard`

use qmemory::protocol::{build_schedule_with, ScheduleOptions, Segment};
use qmemory::{InputProfile, MemoryParams};

fn gauss(t: f64, w: f64, c: f64, s: f64) -> f64 {
    w * (-(t - c).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

fn main() -> qmemory::Result<()> {
    let samples: Vec<(f64, f64)> = (0..=8000)
        .map(|k| {
            let t = k as f64 * 0.005;
            (t, gauss(t, 0.05, 6.0, 1.0) + gauss(t, 0.95, 20.0, 0.6))
        })
        .collect();
    let profile = InputProfile::tabulated(&samples)?;
    let params = MemoryParams::new(1e-3)?;

    let strict = ScheduleOptions {
        feasibility_guard: false,
        ..Default::default()
    };
    match build_schedule_with(&profile, &params, strict) {
        Err(e) => println!("without guard: {e}"),
        Ok(_) => println!("without guard: feasible"),
    }

    let s = build_schedule_with(&profile, &params, ScheduleOptions::default())?;
    println!("with guard: engaged = {}", s.guard_engaged());
    for seg in s.segments() {
        let kind = match seg {
            Segment::Saturated { .. } => "kappa = 1",
            Segment::Tracking { .. } => "zero reflection",
        };
        println!("  [{:8.4}, {:8.4})  {kind}", seg.start(), seg.end());
    }
    let rep = s.report()?;
    println!(
        "F = {:.6}, stage-1 reflection = {:.4e}",
        rep.fidelity, rep.loss_stage1_reflection
    );
    Ok(())
}
