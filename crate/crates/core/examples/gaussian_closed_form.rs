//! Closed-form transfer of a Gaussian photon, for two pulse offsets.
//!
//! `cargo run --example gaussian_closed_form`

use qmemory::closedform::{gauss_constants, sigma_from_peak};

fn main() -> qmemory::Result<()> {
    let r = 0.1533;
    let sigma = sigma_from_peak(r);
    println!("peak rate {r}, sigma = {sigma:.6}");
    for n in [4.0, 5.0] {
        let c = gauss_constants(sigma, n, 1e-4)?;
        let (tau_max, fidelity) = c.report()?;
        println!(
            "n = {n}: tau0 = {:.4}  tau_c = {:.6}  tau_max = {tau_max:.4}  F = {fidelity:.6}",
            c.tau0, c.tau_c
        );
    }
    Ok(())
}
