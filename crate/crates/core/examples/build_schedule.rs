//! Generic two-stage schedule for any profile, with the loss breakdown and
//! file export.
//!
//! `cargo run --example build_schedule -- gauss:r=0.1533,n=4 1e-4`

use qmemory::protocol::transfer;
use qmemory::{InputProfile, MemoryParams};

fn main() -> qmemory::Result<()> {
    let mut args = std::env::args().skip(1);
    let profile: InputProfile = args.next().as_deref().unwrap_or("exp:r=0.036").parse()?;
    let kappa_i: f64 = args
        .next()
        .map_or(Ok(1e-4), |s| s.parse())
        .map_err(|_| qmemory::Error::Parse("kappa_i".into()))?;
    let params = MemoryParams::new(kappa_i)?;

    let (schedule, report) = transfer(&profile, &params)?;
    println!(
        "tau_c = {:.6}, tau_max = {:.4}, F = {:.6}",
        report.tau_c, report.tau_max, report.fidelity
    );
    println!("stage-1 reflection {:.3e}", report.loss_stage1_reflection);
    println!("intrinsic loss     {:.3e}", report.loss_intrinsic);
    println!("not yet absorbed   {:.3e}", report.loss_unabsorbed);
    println!("sum                {:.12}", report.balance());

    let dir = std::env::temp_dir().join("qmemory-build-schedule");
    std::fs::create_dir_all(&dir)?;
    let end = if report.tau_max.is_finite() {
        2.0 * report.tau_max
    } else {
        schedule.horizon()
    };
    schedule.write_csv(dir.join("schedule.csv"), &schedule.sample_times(500, end))?;
    report.write_json(dir.join("report.json"))?;
    println!("wrote {}", dir.display());
    Ok(())
}
