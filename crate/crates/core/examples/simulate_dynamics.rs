//! Integrates the amplitude equations under the optimal schedule and under a
//! constant coupling, and checks the energy balance.
//!
//! `cargo run --example simulate_dynamics`

use qmemory::coupling::Constant;
use qmemory::dynamics::{energy_balance_residual, simulate_amplitudes};
use qmemory::protocol::build_schedule;
use qmemory::{InputProfile, MemoryParams};

fn main() -> qmemory::Result<()> {
    let profile = InputProfile::exponential(0.036)?;
    let params = MemoryParams::new(1e-4)?;
    let schedule = build_schedule(&profile, &params)?;

    let traj = simulate_amplitudes(&profile, &params, &schedule, 400.0, 1e-10)?;
    let best = traj
        .samples
        .iter()
        .max_by(|a, b| (a.beta * a.beta).total_cmp(&(b.beta * b.beta)))
        .unwrap();
    println!("optimal schedule:");
    println!(
        "  max beta^2 = {:.6} at tau = {:.2}",
        best.beta * best.beta,
        best.tau
    );
    println!(
        "  max r_out after tau_c = {:.3e}",
        traj.max_reflection_after(schedule.tau_c())
    );
    println!(
        "  energy-balance residual = {:.3e}",
        energy_balance_residual(&traj)
    );
    println!("  bookkeeping error = {:.3e}", traj.max_bookkeeping_error());

    for k in [1.0, 0.1, 0.036] {
        let t = simulate_amplitudes(&profile, &params, &Constant(k), 400.0, 1e-10)?;
        let peak = t
            .samples
            .iter()
            .map(|s| s.beta * s.beta)
            .fold(0.0, f64::max);
        println!("constant kappa = {k:<5}: max beta^2 = {peak:.6}");
    }

    let path = std::env::temp_dir().join("qmemory-trajectory.csv");
    traj.write_csv(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}
