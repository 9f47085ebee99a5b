//! The classical output-nulling coupling and its agreement with the
//! single-photon schedule when the memory is lossless.
//!
//! `cargo run --example semiclassical`

use qmemory::semiclassical::{compare_with_full_quantum, semiclassical_coupling, ClassicalField};
use qmemory::InputProfile;

fn main() -> qmemory::Result<()> {
    // constant drive: κ = 1/(1 + τ)
    let flat = InputProfile::tabulated(&[(0.0, 0.2), (10.0, 0.2)])?;
    let field = ClassicalField::new(&flat, 0.0)?;
    for tau in [0.0, 1.0, 4.0, 9.0] {
        println!(
            "tau = {tau}: kappa = {:.6} (1/(1+tau) = {:.6})",
            semiclassical_coupling(&field, tau)?,
            1.0 / (1.0 + tau)
        );
    }

    for literal in [
        "exp:r=0.036",
        "exp:r=0.5",
        "gauss:r=0.1533,n=4",
        "gauss:r=0.8,n=5",
    ] {
        let p: InputProfile = literal.parse()?;
        println!(
            "{literal:>20}: max relative deviation {:.2e}",
            compare_with_full_quantum(&p)?
        );
    }
    Ok(())
}
