//! Cross-checks the amplitude equations against the three-level master
//! equation with an explicit source resonator.
//!
//! `cargo run --example master_equation`

use qmemory::dynamics::{sample_grid, simulate_master_equation, verify_nonhermitian_reduction};
use qmemory::protocol::build_schedule;
use qmemory::{InputProfile, MemoryParams};

fn main() -> qmemory::Result<()> {
    let profile = InputProfile::gaussian(0.1533, 4.0)?;
    let params = MemoryParams::new(1e-4)?;
    let s = build_schedule(&profile, &params)?;
    let times = sample_grid(60.0, 301, s.tau_c() + 2.0, &s.switch_times());

    let check = verify_nonhermitian_reduction(&profile, &params, &s, &times, 1e-10)?;
    println!("{check:#?}");

    let rho = simulate_master_equation(&profile, &params, &s, &[0.0, 20.0, 60.0], 1e-10)?;
    for d in &rho {
        println!(
            "tau = {:5.1}: ground {:.6}  source {:.6}  memory {:.6}",
            d.tau,
            d.population(0),
            d.population(1),
            d.population(2)
        );
    }
    Ok(())
}
