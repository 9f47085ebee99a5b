//! Command-line front end.
//!
//! Exit codes: 0 success, 1 input error, 2 no feasible schedule,
//! 3 integrator failure, 4 verification bound violated. Inputs are fully
//! validated before anything is computed, and files are written atomically
//! only once a run has succeeded.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::coupling::{Constant, Coupling, LoadedSchedule, Scaled};
use crate::dynamics::{
    energy_balance_residual, sample_grid, simulate_at, verify_nonhermitian_reduction, SimOptions,
    DEFAULT_TOL,
};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::profiles::{InputProfile, MemoryParams};
use crate::protocol::{build_schedule_with, ScheduleOptions};
use crate::semiclassical::compare_coupling;
use crate::sweep::{
    default_kappa_i_grid, default_r_grid, fidelity_surface, parse_grid, SweepFamily,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_STEP_FAILURE: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

/// Bounds checked by `verify`.
pub const REDUCTION_BOUND: f64 = 1e-8;
pub const TRACE_BOUND: f64 = 1e-10;
pub const ZERO_REFLECTION_BOUND: f64 = 1e-7;
pub const SEMICLASSICAL_BOUND: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(
    name = "qmemory",
    version,
    about = "Optimal coupling schedules for catching a single photon in a lossy memory"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the optimal schedule; write schedule.csv and report.json.
    Schedule(ScheduleArgs),
    /// Integrate the amplitude equations; write trajectory.csv.
    Simulate(SimulateArgs),
    /// Fidelity over a (kappa_i, r) grid; write surface.csv.
    Sweep(SweepArgs),
    /// Cross-check the amplitude equations against independent formulations.
    Verify(VerifyArgs),
}

/// Settings shared by the single-profile subcommands.
#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// exp:r=<v> | gauss:r=<v>[,n=<v>] | table:<path.csv>
    #[arg(long, default_value = "exp:r=0.036")]
    pub profile: String,
    /// Intrinsic memory loss rate.
    #[arg(long = "kappa-i", default_value_t = 1e-4)]
    pub kappa_i: f64,
    /// Integrator tolerance, within [1e-13, 1e-6].
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Uniform sample count of exported curves.
    #[arg(long, default_value_t = 2001)]
    pub samples: usize,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[command(flatten)]
    pub run: RunConfig,
    /// End of the exported curve (default: the search horizon).
    #[arg(long = "tau-end")]
    pub tau_end: Option<f64>,
    /// Fail instead of re-saturating when tracking would need κ > κ_max.
    #[arg(long = "no-guard")]
    pub no_guard: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunConfig,
    #[arg(long = "tau-end")]
    pub tau_end: Option<f64>,
    /// Coupling override: const:<v> or file:<schedule.csv>.
    #[arg(long)]
    pub kappa: Option<String>,
    #[arg(long = "fault-kappa-scale", hide = true)]
    pub fault_kappa_scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value = "exp")]
    pub family: String,
    /// lo:hi:n, log:lo:hi:n or a comma list (default: 25 log points on [1e-5, 1e-2]).
    #[arg(long = "grid-ki")]
    pub grid_ki: Option<String>,
    /// lo:hi:n or a comma list (default: 40 points on [0.05, 1] plus the operating point).
    #[arg(long = "grid-r")]
    pub grid_r: Option<String>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    AppendixA,
    Semiclassical,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum, default_value = "all")]
    pub suite: Suite,
    /// Profiles to check (default: both operating points).
    #[arg(long)]
    pub profile: Vec<String>,
    /// Intrinsic loss used by the master-equation suite.
    #[arg(long = "kappa-i", default_value_t = 1e-4)]
    pub kappa_i: f64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = 401)]
    pub samples: usize,
    /// Also write the summary to <out>/verify.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "fault-kappa-scale", hide = true)]
    pub fault_kappa_scale: Option<f64>,
}

/// Schedule override for `simulate`.
#[derive(Debug, Clone, PartialEq)]
pub enum KappaSource {
    Const(f64),
    File(PathBuf),
}

impl FromStr for KappaSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("const", v)) => {
                let k: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad coupling `{v}`")))?;
                if !(0.0..=1.0).contains(&k) {
                    return Err(Error::Domain(format!(
                        "constant coupling {k} outside [0, 1]"
                    )));
                }
                Ok(KappaSource::Const(k))
            }
            Some(("file", p)) if !p.is_empty() => Ok(KappaSource::File(PathBuf::from(p))),
            _ => Err(Error::Parse(format!(
                "--kappa `{s}`: expected const:<v> or file:<path>"
            ))),
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Domain(_) | Error::InvalidProfile(_) | Error::Io(_) | Error::Parse(_) => EXIT_INPUT,
        Error::StepFailure { .. } => EXIT_STEP_FAILURE,
        Error::InfeasibleSchedule { .. }
        | Error::NoThreshold { .. }
        | Error::NoPeak { .. }
        | Error::SingularCoupling { .. }
        | Error::NotBracketed { .. }
        | Error::ZeroDenominator(_) => EXIT_INFEASIBLE,
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Schedule(a) => cmd_schedule(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Sweep(a) => cmd_sweep(a, out, err),
        Command::Verify(a) => cmd_verify(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

struct Validated {
    profile: InputProfile,
    params: MemoryParams,
}

fn validate(run: &RunConfig) -> Result<Validated> {
    let profile: InputProfile = run.profile.parse()?;
    profile.ensure_valid()?;
    let params = MemoryParams::new(run.kappa_i)?;
    check_tol(run.tol)?;
    if run.samples < 2 {
        return Err(Error::Domain(format!(
            "--samples {} must be at least 2",
            run.samples
        )));
    }
    Ok(Validated { profile, params })
}

fn check_tol(tol: f64) -> Result<()> {
    if !(1e-13..=1e-6).contains(&tol) {
        return Err(Error::Domain(format!(
            "--tol {tol:e} outside [1e-13, 1e-6]"
        )));
    }
    Ok(())
}

fn check_tau_end(t: Option<f64>) -> Result<()> {
    match t {
        Some(t) if !(t > 0.0 && t.is_finite()) => {
            Err(Error::Domain(format!("--tau-end {t} must be positive")))
        }
        _ => Ok(()),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialise");
    s.push('\n');
    s
}

pub fn cmd_schedule(a: &ScheduleArgs, out: &mut dyn Write) -> Result<i32> {
    let v = validate(&a.run)?;
    check_tau_end(a.tau_end)?;
    let opts = ScheduleOptions {
        feasibility_guard: !a.no_guard,
        ..Default::default()
    };
    let schedule = build_schedule_with(&v.profile, &v.params, opts)?;
    let report = schedule.report()?;
    let tau_end = a.tau_end.unwrap_or(schedule.horizon());
    let taus = schedule.sample_times(a.run.samples, tau_end);
    ensure_dir(&a.run.out)?;
    schedule.write_csv(a.run.out.join("schedule.csv"), &taus)?;
    report.write_json(a.run.out.join("report.json"))?;
    out.write_all(json_text(&report.to_json()).as_bytes())?;
    Ok(EXIT_OK)
}

pub fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let v = validate(&a.run)?;
    check_tau_end(a.tau_end)?;
    let source = a.kappa.as_deref().map(KappaSource::from_str).transpose()?;
    let built;
    let loaded;
    let constant;
    let (coupling, default_end, stage2_from): (&dyn Coupling, f64, Option<f64>) = match source {
        None => {
            built = build_schedule_with(&v.profile, &v.params, ScheduleOptions::default())?;
            (&built, built.horizon(), Some(built.tau_c()))
        }
        Some(KappaSource::File(path)) => {
            loaded = LoadedSchedule::from_csv(&path, &v.profile, &v.params)?;
            let tc = loaded.breakpoints().first().copied();
            (&loaded, v.profile.horizon(), tc)
        }
        Some(KappaSource::Const(k)) => {
            constant = Constant(k);
            (&constant, v.profile.horizon(), None)
        }
    };
    let scaled;
    let coupling: &dyn Coupling = match a.fault_kappa_scale {
        Some(f) => {
            scaled = Scaled {
                inner: coupling,
                factor: f,
            };
            &scaled
        }
        None => coupling,
    };
    let tau_end = a.tau_end.unwrap_or(default_end);
    let bps = coupling.breakpoints();
    let fine = bps.first().map_or(10.0, |b| b + 2.0);
    let times = sample_grid(tau_end, a.run.samples, fine, &bps);
    let traj = simulate_at(
        &v.profile,
        &v.params,
        coupling,
        &times,
        SimOptions {
            tol: a.run.tol,
            ..Default::default()
        },
    )?;
    ensure_dir(&a.run.out)?;
    traj.write_csv(a.run.out.join("trajectory.csv"))?;
    let last = traj.last();
    writeln!(
        out,
        "energy_balance_residual {:.6e}",
        energy_balance_residual(&traj)
    )?;
    match stage2_from {
        Some(tc) => writeln!(
            out,
            "max_stage2_r_out {:.6e}",
            traj.max_reflection_after(tc)
        )?,
        None => writeln!(out, "max_stage2_r_out n/a")?,
    }
    writeln!(
        out,
        "final_memory_population {:.16e}",
        last.beta * last.beta
    )?;
    writeln!(out, "cum_reflection {:.16e}", last.cum_reflection)?;
    writeln!(out, "cum_intrinsic {:.16e}", last.cum_intrinsic)?;
    Ok(EXIT_OK)
}

pub fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let family: SweepFamily = a.family.parse()?;
    let ki = a.grid_ki.as_deref().map(parse_grid).transpose()?;
    let r = a.grid_r.as_deref().map(parse_grid).transpose()?;
    let custom = ki.is_some() || r.is_some();
    let ki = ki.unwrap_or_else(default_kappa_i_grid);
    let r = r.unwrap_or_else(|| default_r_grid(family));
    if let Some(&k) = ki.iter().find(|&&k| !(k >= 0.0 && k.is_finite())) {
        return Err(Error::Domain(format!(
            "kappa_i grid value {k} must be finite and non-negative"
        )));
    }
    if let Some(&x) = r.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::Domain(format!("r grid value {x} must be positive")));
    }
    let grid = fidelity_surface(family, &ki, &r)?;
    if custom {
        for w in grid.warnings() {
            writeln!(err, "warning: {w}")?;
        }
    }
    ensure_dir(&a.out)?;
    let path = a.out.join("surface.csv");
    grid.write_csv(&path)?;
    let failed = grid.cells.iter().filter(|c| c.result.is_err()).count();
    writeln!(
        out,
        "{} cells ({} failed) -> {}",
        grid.cells.len(),
        failed,
        path.display()
    )?;
    Ok(EXIT_OK)
}

fn default_verify_profiles() -> Vec<String> {
    vec!["exp:r=0.036".into(), "gauss:r=0.1533,n=4".into()]
}

fn appendix_a(literal: &str, profile: &InputProfile, a: &VerifyArgs) -> Result<Value> {
    let params = MemoryParams::new(a.kappa_i)?;
    let schedule = build_schedule_with(profile, &params, ScheduleOptions::default())?;
    let report = schedule.report()?;
    let tau_end = if report.tau_max.is_finite() {
        (3.0 * report.tau_max).min(schedule.horizon())
    } else {
        schedule.horizon()
    };
    let scaled;
    let coupling: &dyn Coupling = match a.fault_kappa_scale {
        Some(f) => {
            scaled = Scaled {
                inner: &schedule,
                factor: f,
            };
            &scaled
        }
        None => &schedule,
    };
    let bps = coupling.breakpoints();
    let times = sample_grid(tau_end, a.samples, schedule.tau_c() + 2.0, &bps);
    let check = verify_nonhermitian_reduction(profile, &params, coupling, &times, a.tol)?;
    let traj = simulate_at(
        profile,
        &params,
        coupling,
        &times,
        SimOptions {
            tol: a.tol,
            ..Default::default()
        },
    )?;
    let r_out = traj.max_reflection_after(schedule.tau_c());
    let pass = check.max_deviation <= REDUCTION_BOUND
        && check.max_trace_error <= TRACE_BOUND
        && check.max_ground_mismatch <= REDUCTION_BOUND
        && r_out <= ZERO_REFLECTION_BOUND;
    Ok(json!({
        "suite": "appendix-a",
        "profile": literal,
        "kappa_i": a.kappa_i,
        "max_deviation": check.max_deviation,
        "max_trace_error": check.max_trace_error,
        "max_hermiticity_error": check.max_hermiticity_error,
        "min_eigenvalue": check.min_eigenvalue,
        "max_ground_mismatch": check.max_ground_mismatch,
        "max_stage2_r_out": r_out,
        "bounds": {
            "deviation": REDUCTION_BOUND,
            "trace": TRACE_BOUND,
            "ground": REDUCTION_BOUND,
            "stage2_r_out": ZERO_REFLECTION_BOUND,
        },
        "pass": pass,
    }))
}

fn semiclassical(literal: &str, profile: &InputProfile, a: &VerifyArgs) -> Result<Value> {
    let schedule = build_schedule_with(
        profile,
        &MemoryParams::new(0.0)?,
        ScheduleOptions::default(),
    )?;
    let scaled;
    let coupling: &dyn Coupling = match a.fault_kappa_scale {
        Some(f) => {
            scaled = Scaled {
                inner: &schedule,
                factor: f,
            };
            &scaled
        }
        None => &schedule,
    };
    let dev = compare_coupling(&schedule, coupling)?;
    Ok(json!({
        "suite": "semiclassical",
        "profile": literal,
        "max_relative_deviation": dev,
        "bound": SEMICLASSICAL_BOUND,
        "pass": dev <= SEMICLASSICAL_BOUND,
    }))
}

pub fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    check_tol(a.tol)?;
    MemoryParams::new(a.kappa_i)?;
    if a.samples < 2 {
        return Err(Error::Domain(format!(
            "--samples {} must be at least 2",
            a.samples
        )));
    }
    let literals = if a.profile.is_empty() {
        default_verify_profiles()
    } else {
        a.profile.clone()
    };
    let profiles = literals
        .iter()
        .map(|l| {
            let p: InputProfile = l.parse()?;
            p.ensure_valid()?;
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut results = Vec::new();
    for (lit, p) in literals.iter().zip(&profiles) {
        if matches!(a.suite, Suite::AppendixA | Suite::All) {
            results.push(appendix_a(lit, p, a)?);
        }
        if matches!(a.suite, Suite::Semiclassical | Suite::All) {
            results.push(semiclassical(lit, p, a)?);
        }
    }
    let pass = results.iter().all(|r| r["pass"] == json!(true));
    let summary = json!({ "pass": pass, "results": results });
    let text = json_text(&summary);
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        write_atomic(dir.join("verify.json"), text.as_bytes())?;
    }
    out.write_all(text.as_bytes())?;
    Ok(if pass { EXIT_OK } else { EXIT_VERIFY })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_cli(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(
            std::iter::once("qmemory").chain(args.iter().copied()),
            &mut o,
            &mut e,
        );
        (
            code,
            String::from_utf8(o).unwrap(),
            String::from_utf8(e).unwrap(),
        )
    }

    #[test]
    fn kappa_source_parsing() {
        assert_eq!(
            "const:0".parse::<KappaSource>().unwrap(),
            KappaSource::Const(0.0)
        );
        assert_eq!(
            "file:a.csv".parse::<KappaSource>().unwrap(),
            KappaSource::File("a.csv".into())
        );
        for bad in ["const:2", "const:x", "file:", "oops"] {
            assert!(bad.parse::<KappaSource>().is_err(), "{bad}");
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Parse(String::new())), EXIT_INPUT);
        assert_eq!(
            exit_code(&Error::InfeasibleSchedule {
                tau: 1.0,
                kappa: 1.1
            }),
            EXIT_INFEASIBLE
        );
        assert_eq!(
            exit_code(&Error::StepFailure {
                tau: 1.0,
                reason: String::new()
            }),
            EXIT_STEP_FAILURE
        );
    }

    #[test]
    fn schedule_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().to_str().unwrap();
        let (code, out, _) = run_cli(&[
            "schedule",
            "--profile",
            "exp:r=0.036",
            "--kappa-i",
            "1e-4",
            "--out",
            d,
            "--samples",
            "50",
        ]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!((v["fidelity"].as_f64().unwrap() - 0.97).abs() < 0.005);
        assert!(
            dir.path().join("schedule.csv").exists() && dir.path().join("report.json").exists()
        );

        let (code, out, _) =
            run_cli(&["schedule", "--kappa-i", "0", "--out", d, "--samples", "50"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["tau_max"], json!("inf"));
    }

    #[test]
    fn input_errors_write_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("out");
        let s = sub.to_str().unwrap();
        for args in [
            vec!["schedule", "--profile", "exp:rate=0.1", "--out", s],
            vec![
                "schedule",
                "--profile",
                "exp:r=0.1",
                "--kappa-i",
                "-1",
                "--out",
                s,
            ],
            vec!["simulate", "--tol", "1e-3", "--out", s],
            vec!["simulate", "--kappa", "const:7", "--out", s],
            vec!["sweep", "--grid-r", "1:0:3", "--out", s],
            vec!["sweep", "--family", "sech", "--out", s],
            vec!["verify", "--profile", "gauss:r=0", "--out", s],
        ] {
            let (code, _, err) = run_cli(&args);
            assert_eq!(code, EXIT_INPUT, "{args:?}: {err}");
            assert!(!err.is_empty());
        }
        assert!(!sub.exists());
    }

    #[test]
    fn infeasible_without_guard() {
        let dir = tempfile::tempdir().unwrap();
        let table = dir.path().join("double.csv");
        let g = |t: f64, c: f64, s: f64| {
            (-(t - c) * (t - c) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
        };
        let mut text = String::from("tau,r_in\n");
        for k in 0..=8000 {
            let t = k as f64 * 0.005;
            text.push_str(&format!(
                "{t},{}\n",
                0.05 * g(t, 6.0, 1.0) + 0.95 * g(t, 20.0, 0.6)
            ));
        }
        std::fs::write(&table, text).unwrap();
        let profile = format!("table:{}", table.display());
        let out = dir.path().join("out");
        let base = [
            "schedule",
            "--profile",
            &profile,
            "--kappa-i",
            "1e-3",
            "--samples",
            "20",
            "--out",
            out.to_str().unwrap(),
        ];
        let (code, _, err) = run_cli(&[&base[..], &["--no-guard"]].concat());
        assert_eq!(code, EXIT_INFEASIBLE, "{err}");
        assert!(err.contains("infeasible"));
        assert!(!out.exists());
        let (code, out_text, _) = run_cli(&base);
        assert_eq!(code, EXIT_OK);
        assert!(out_text.contains("\"guard_engaged\": true"));
    }
}
