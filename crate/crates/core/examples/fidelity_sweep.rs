//! Fidelity over the (intrinsic loss, input rate) plane and the optimal
//! input rate for each loss.
//!
//! `cargo run --release --example fidelity_sweep`

use qmemory::sweep::{
    default_kappa_i_grid, default_r_grid, fidelity_surface, optimal_rate, SweepFamily,
};

fn main() -> qmemory::Result<()> {
    for family in [SweepFamily::Exponential, SweepFamily::Gaussian { n: 4.0 }] {
        let grid = fidelity_surface(family, &default_kappa_i_grid(), &default_r_grid(family))?;
        println!(
            "{family}: {} cells, loss-monotonicity violations: {}",
            grid.cells.len(),
            grid.loss_monotonicity_violations().len()
        );
        for ki in [1e-5, 1e-4, 1e-3, 1e-2] {
            let opt = optimal_rate(family, ki)?;
            let edge = if opt.at_boundary {
                " (edge of range)"
            } else {
                ""
            };
            println!(
                "  kappa_i = {ki:.0e}: r* = {:.4}, F = {:.6}{edge}",
                opt.r, opt.fidelity
            );
        }
        let path = std::env::temp_dir().join(format!("qmemory-surface-{family}.csv"));
        grid.write_csv(&path)?;
        println!("  wrote {}", path.display());
    }
    Ok(())
}
