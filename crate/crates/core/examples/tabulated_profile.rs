//! Arbitrary pulse shapes from a `tau,r_in` table, checked against the
//! built-in profile they sample.
//!
//! `cargo run --example tabulated_profile`

use qmemory::protocol::transfer;
use qmemory::{InputProfile, MemoryParams};

fn main() -> qmemory::Result<()> {
    let exact = InputProfile::gaussian(0.1533, 5.0)?;
    let path = std::env::temp_dir().join("qmemory-gauss-table.csv");
    let mut text = String::from("tau,r_in\n");
    for k in 0..=1200 {
        let t = k as f64 * 0.05;
        text.push_str(&format!("{t},{:.17e}\n", exact.rate(t)));
    }
    std::fs::write(&path, text)?;

    let table = InputProfile::load_table(&path)?;
    println!("validation: {}", table.validate());
    let params = MemoryParams::new(1e-4)?;
    let (_, a) = transfer(&exact, &params)?;
    let (_, b) = transfer(&table, &params)?;
    println!("{:>10} {:>14} {:>14}", "", "analytic", "tabulated");
    println!("{:>10} {:>14.8} {:>14.8}", "tau_c", a.tau_c, b.tau_c);
    println!("{:>10} {:>14.6} {:>14.6}", "tau_max", a.tau_max, b.tau_max);
    println!("{:>10} {:>14.8} {:>14.8}", "F", a.fidelity, b.fidelity);
    Ok(())
}
