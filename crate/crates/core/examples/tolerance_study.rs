//! Energy-balance residual as the integrator tolerance is tightened.
//!
//! `cargo run --release --example tolerance_study`

use qmemory::dynamics::{energy_balance_residual, sample_grid, simulate_at, SimOptions};
use qmemory::protocol::build_schedule;
use qmemory::{InputProfile, MemoryParams};

fn main() -> qmemory::Result<()> {
    let p = InputProfile::exponential(0.036)?;
    let params = MemoryParams::new(1e-4)?;
    let s = build_schedule(&p, &params)?;
    let times = sample_grid(400.0, 2001, s.tau_c() + 2.0, &[s.tau_c()]);
    let mut prev: Option<f64> = None;
    println!("{:>10} {:>12} {:>8}", "tol", "residual", "ratio");
    for k in 0..12 {
        let tol = 1e-6 / 2f64.powi(k);
        let t = simulate_at(
            &p,
            &params,
            &s,
            &times,
            SimOptions {
                tol,
                ..Default::default()
            },
        )?;
        let r = energy_balance_residual(&t);
        let ratio = prev.map_or(String::new(), |q| format!("{:.2}", q / r));
        println!("{tol:10.3e} {r:12.4e} {ratio:>8}");
        prev = Some(r);
    }
    Ok(())
}
