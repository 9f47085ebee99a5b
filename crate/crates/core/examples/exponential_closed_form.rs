//! Closed-form transfer of an exponentially decaying photon.
//!
//! `cargo run --example exponential_closed_form`

use qmemory::closedform::exp_constants;

fn main() -> qmemory::Result<()> {
    let c = exp_constants(0.036, 1e-4)?;
    let (tau_max, fidelity) = c.report()?;
    println!("threshold      tau_c   = {:.6}", c.tau_c);
    println!("peak           tau_max = {tau_max:.4}");
    println!("fidelity       F       = {fidelity:.6}");
    println!("lossless limit A1      = {:.6}", c.a1);

    println!("\n{:>8} {:>12} {:>12}", "tau", "beta^2", "kappa");
    for tau in [0.5, c.tau_c, 10.0, 50.0, tau_max, 400.0] {
        let kappa = if tau < c.tau_c { 1.0 } else { c.coupling(tau)? };
        println!("{tau:8.3} {:12.6e} {kappa:12.6e}", c.population(tau));
    }
    Ok(())
}
