//! Round trip through the schedule CSV: a loaded schedule drives the
//! simulator exactly like the one that produced the file.
//!
//! `cargo run --example loaded_schedule`

use qmemory::coupling::LoadedSchedule;
use qmemory::dynamics::simulate_amplitudes;
use qmemory::protocol::build_schedule;
use qmemory::{InputProfile, MemoryParams};

fn main() -> qmemory::Result<()> {
    let profile = InputProfile::exponential(0.036)?;
    let params = MemoryParams::new(1e-4)?;
    let s = build_schedule(&profile, &params)?;
    let path = std::env::temp_dir().join("qmemory-loaded-schedule.csv");
    s.write_csv(&path, &s.sample_times(2001, 600.0))?;

    let loaded = LoadedSchedule::from_csv(&path, &profile, &params)?;
    let a = simulate_amplitudes(&profile, &params, &s, 600.0, 1e-10)?;
    let b = simulate_amplitudes(&profile, &params, &loaded, 600.0, 1e-10)?;
    let gap = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| (x.beta * x.beta - y.beta * y.beta).abs())
        .fold(0.0, f64::max);
    println!("max |beta^2 inline - beta^2 loaded| = {gap:.3e}");
    Ok(())
}
