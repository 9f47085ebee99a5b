//! Time-domain simulation of the source/memory amplitudes under an arbitrary
//! coupling, and a three-level Lindblad oracle for the non-Hermitian
//! reduction.
//!
//! The input pulse is modelled as the leakage of a fictitious source
//! resonator with amplitude `β₁` and coupling `κ₁ = r_in/β₁²`. The memory
//! amplitude obeys `β′ = −√(κ r_in) − ½(κ + κ_i)β`, using `√κ₁·β₁ = √r_in`
//! directly so the source may run empty without a 0/0.

use std::path::Path;

use nalgebra::Matrix3;
use num_complex::Complex64;

use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::io::{csv_text, write_atomic};
use crate::ode::{self, Options};
use crate::profiles::{InputProfile, MemoryParams};

pub const DEFAULT_TOL: f64 = 1e-10;

/// Source population below which `β₁` is pinned to its exact value.
const SOURCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub tau: f64,
    /// Source amplitude, `≥ 0`.
    pub beta1: f64,
    /// Memory amplitude, `≤ 0`.
    pub beta: f64,
    pub kappa: f64,
    pub r_in: f64,
    pub r_out: f64,
    pub cum_reflection: f64,
    pub cum_intrinsic: f64,
}

impl TrajectorySample {
    /// `β₁² + β² + ∫r_out + ∫κ_iβ²`, which should stay at 1.
    pub fn total(&self) -> f64 {
        self.beta1 * self.beta1 + self.beta * self.beta + self.cum_reflection + self.cum_intrinsic
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub kappa_i: f64,
    /// Coupling switch times; finite differences never straddle them.
    pub breakpoints: Vec<f64>,
}

pub const TRAJECTORY_COLUMNS: [&str; 8] = [
    "tau",
    "kappa",
    "r_in",
    "beta1_sq",
    "beta_sq",
    "r_out",
    "cum_reflection",
    "cum_intrinsic",
];

impl Trajectory {
    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectory is never empty")
    }

    /// Largest reflected rate strictly after `tau`.
    pub fn max_reflection_after(&self, tau: f64) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.tau > tau)
            .map(|s| s.r_out)
            .fold(0.0, f64::max)
    }

    pub fn max_bookkeeping_error(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| (s.total() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows = self.samples.iter().map(|s| {
            vec![
                s.tau,
                s.kappa,
                s.r_in,
                s.beta1 * s.beta1,
                s.beta * s.beta,
                s.r_out,
                s.cum_reflection,
                s.cum_intrinsic,
            ]
        });
        write_atomic(path, csv_text(&TRAJECTORY_COLUMNS, rows).as_bytes())
    }
}

/// `r_out = (β√κ + √r_in)²`.
pub fn reflection_rate(beta: f64, kappa: f64, r_in: f64) -> f64 {
    if kappa <= 0.0 {
        return r_in.max(0.0);
    }
    (beta * kappa.max(0.0).sqrt() + r_in.max(0.0).sqrt()).powi(2)
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub tol: f64,
    /// Initial memory amplitude (normally 0: the memory starts empty).
    pub beta0: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            tol: DEFAULT_TOL,
            beta0: 0.0,
        }
    }
}

/// Validates the user tolerance and returns integrator options. Local
/// error control runs two digits tighter than `tol` so that the global
/// bookkeeping and energy-balance errors stay within small multiples of it.
fn ode_options(tol: f64) -> Result<Options> {
    if !(1e-13..=1e-6).contains(&tol) {
        return Err(Error::Domain(format!(
            "tolerance {tol:e} outside [1e-13, 1e-6]"
        )));
    }
    Ok(Options::with_tol((tol * 1e-2).max(1e-14)))
}

/// Uniform samples on `[0, tau_end]`, refined to step 0.01 up to `fine_until`
/// (where the `κ = κ_max` dynamics evolve on the unit timescale), with the
/// given extra times inserted.
pub fn sample_grid(tau_end: f64, samples: usize, fine_until: f64, extra: &[f64]) -> Vec<f64> {
    let n = samples.max(2);
    let mut ts: Vec<f64> = (0..n)
        .map(|k| tau_end * k as f64 / (n - 1) as f64)
        .collect();
    let fine_end = fine_until.min(tau_end);
    let m = (fine_end / 0.01).ceil() as usize;
    ts.extend((0..m).map(|k| k as f64 * 0.01));
    ts.sort_by(f64::total_cmp);
    // near-coincident points from the two grids would wreck finite differences
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(1.0);
    ts.dedup_by(|b, a| close(*a, *b));
    let extra: Vec<f64> = extra
        .iter()
        .copied()
        .filter(|t| (0.0..=tau_end).contains(t))
        .collect();
    ts.retain(|&t| !extra.iter().any(|&e| close(t, e)));
    ts.extend(extra);
    ts.retain(|&t| (0.0..=tau_end).contains(&t));
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

/// Simulates on a default grid: `samples` uniform points plus a fine grid
/// over the first switch.
pub fn simulate_amplitudes(
    profile: &InputProfile,
    params: &MemoryParams,
    coupling: &dyn Coupling,
    tau_end: f64,
    tol: f64,
) -> Result<Trajectory> {
    let bps = coupling.breakpoints();
    let fine = bps.first().map_or(10.0, |b| b + 2.0);
    let times = sample_grid(tau_end, 2001, fine, &bps);
    simulate_at(
        profile,
        params,
        coupling,
        &times,
        SimOptions {
            tol,
            ..Default::default()
        },
    )
}

/// Integrates `(β₁, β, ∫r_out, ∫κ_iβ²)` and reports them at `times`
/// (ascending, starting at or after 0).
pub fn simulate_at(
    profile: &InputProfile,
    params: &MemoryParams,
    coupling: &dyn Coupling,
    times: &[f64],
    opts: SimOptions,
) -> Result<Trajectory> {
    let ode_opts = ode_options(opts.tol)?;
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain(
            "sample times must be ascending and non-negative".into(),
        ));
    }
    let ki = params.kappa_i;
    let tau_end = *times.last().unwrap();
    let rhs = |t: f64, y: &[f64; 4]| {
        let r = profile.rate(t);
        let k = coupling.kappa(t).max(0.0);
        let (b1, b) = (y[0], y[1]);
        let d1 = if b1 * b1 > SOURCE_FLOOR {
            -r / (2.0 * b1)
        } else {
            0.0
        };
        let db = -(k * r).sqrt() - 0.5 * (k + ki) * b;
        [d1, db, reflection_rate(b, k, r), ki * b * b]
    };
    let pin = |t: f64, y: &mut [f64; 4]| {
        if y[0] * y[0] <= SOURCE_FLOOR {
            y[0] = profile.remaining(t).max(0.0).sqrt();
        }
    };
    let mut edges: Vec<f64> = coupling
        .breakpoints()
        .into_iter()
        .filter(|&b| b > 0.0 && b < tau_end)
        .collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    edges.push(tau_end);

    let mut y = [profile.remaining(0.0).sqrt(), opts.beta0, 0.0, 0.0];
    let mut t0 = 0.0;
    let mut states = Vec::with_capacity(times.len());
    let mut idx = 0;
    for &edge in &edges {
        let hi = times.partition_point(|&t| t <= edge);
        let mut chunk = times[idx..hi].to_vec();
        chunk.push(edge);
        let (mut out, _) = ode::integrate(rhs, t0, y, edge, &chunk, ode_opts, pin)?;
        y = out.pop().unwrap();
        pin(edge, &mut y);
        states.extend(out);
        t0 = edge;
        idx = hi;
    }
    let samples = times
        .iter()
        .zip(states)
        .map(|(&tau, y)| {
            let kappa = coupling.kappa(tau).max(0.0);
            let r_in = profile.rate(tau);
            TrajectorySample {
                tau,
                beta1: if y[0] * y[0] <= SOURCE_FLOOR {
                    profile.remaining(tau).max(0.0).sqrt()
                } else {
                    y[0]
                },
                beta: y[1],
                kappa,
                r_in,
                r_out: reflection_rate(y[1], kappa, r_in),
                cum_reflection: y[2],
                cum_intrinsic: y[3],
            }
        })
        .collect();
    Ok(Trajectory {
        samples,
        kappa_i: ki,
        breakpoints: edges[..edges.len() - 1].to_vec(),
    })
}

/// First-derivative weights at `x0` for arbitrary nodes (Fornberg).
fn derivative_weights(x0: f64, xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    // c[j][m]: weight of node j for derivative order m (orders 0 and 1)
    let mut c = vec![[0.0f64; 2]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    for i in 1..n {
        let mut c2 = 1.0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                let prev = c[i - 1];
                c[i][1] = c1 * (prev[0] - (xs[i - 1] - x0) * prev[1]) / c2;
                c[i][0] = -c1 * (xs[i - 1] - x0) * prev[0] / c2;
            }
            let cj = c[j];
            c[j][1] = ((xs[i] - x0) * cj[1] - cj[0]) / c3;
            c[j][0] = (xs[i] - x0) * cj[0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|w| w[1]).collect()
}

/// `max |r_in − dβ²/dτ − κ_iβ² − r_out|` over the samples, with `dβ²/dτ`
/// from a five-point finite difference that stays inside one smooth piece.
pub fn energy_balance_residual(traj: &Trajectory) -> f64 {
    let s = &traj.samples;
    if s.len() < 2 {
        return 0.0;
    }
    // split sample indices into closed pieces at the breakpoints
    let mut pieces: Vec<(usize, usize)> = Vec::new();
    let mut lo = 0;
    for &b in &traj.breakpoints {
        if let Some(k) = s.iter().position(|x| x.tau >= b) {
            if k > lo {
                pieces.push((lo, k));
                lo = k;
            }
        }
    }
    pieces.push((lo, s.len() - 1));

    let mut worst = 0.0f64;
    for (a, b) in pieces {
        let len = b - a + 1;
        if len < 2 {
            continue;
        }
        let width = len.min(5);
        for i in a..=b {
            let start = i.saturating_sub(width / 2).max(a).min(b + 1 - width);
            let xs: Vec<f64> = (start..start + width).map(|j| s[j].tau).collect();
            let w = derivative_weights(s[i].tau, &xs);
            let d: f64 = (start..start + width)
                .zip(&w)
                .map(|(j, wj)| wj * s[j].beta * s[j].beta)
                .sum();
            let x = &s[i];
            let resid = x.r_in - d - traj.kappa_i * x.beta * x.beta - x.r_out;
            worst = worst.max(resid.abs());
        }
    }
    worst
}

/// State of the three-level system on `{|00⟩, |10⟩, |01⟩}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix3 {
    pub tau: f64,
    pub rho: Matrix3<Complex64>,
}

impl DensityMatrix3 {
    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.rho - self.rho.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn population(&self, i: usize) -> f64 {
        self.rho[(i, i)].re
    }
}

fn pack(m: &Matrix3<Complex64>) -> [f64; 18] {
    let mut y = [0.0; 18];
    for (k, z) in m.iter().enumerate() {
        y[2 * k] = z.re;
        y[2 * k + 1] = z.im;
    }
    y
}

fn unpack(y: &[f64; 18]) -> Matrix3<Complex64> {
    Matrix3::from_iterator((0..9).map(|k| Complex64::new(y[2 * k], y[2 * k + 1])))
}

fn ket_bra(i: usize, j: usize) -> Matrix3<Complex64> {
    let mut m = Matrix3::zeros();
    m[(i, j)] = Complex64::new(1.0, 0.0);
    m
}

/// Source coupling `κ₁ = r_in/β₁²` with `β₁² = 1 − ∫₀^τ r_in` exact.
fn source_coupling(profile: &InputProfile, tau: f64) -> f64 {
    let remaining = profile.remaining(tau);
    if remaining <= 1e-14 {
        0.0
    } else {
        profile.rate(tau) / remaining
    }
}

/// Lindblad evolution with `L_T = √κ₁ a₁ + √κ a`, `L_i = √κ_i a` and the
/// cascade Hamiltonian `H = −(i/2)√(κκ₁)(a†a₁ − a₁†a)`, starting from the
/// source excited.
pub fn simulate_master_equation(
    profile: &InputProfile,
    params: &MemoryParams,
    coupling: &dyn Coupling,
    times: &[f64],
    tol: f64,
) -> Result<Vec<DensityMatrix3>> {
    let opts = ode_options(tol)?;
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain(
            "sample times must be ascending and non-negative".into(),
        ));
    }
    let ki = params.kappa_i;
    let a1 = ket_bra(0, 1);
    let a = ket_bra(0, 2);
    let i = Complex64::new(0.0, 1.0);
    let half = Complex64::new(0.5, 0.0);
    let rhs = |t: f64, y: &[f64; 18]| {
        let rho = unpack(y);
        let k = coupling.kappa(t).max(0.0);
        let k1 = source_coupling(profile, t);
        let h = (ket_bra(2, 1) - ket_bra(1, 2)) * Complex64::new(0.0, -0.5 * (k * k1).sqrt());
        let lt = a1 * Complex64::from(k1.sqrt()) + a * Complex64::from(k.sqrt());
        let li = a * Complex64::from(ki.sqrt());
        let mut d = -(h * rho - rho * h) * i;
        for l in [lt, li] {
            let ld = l.adjoint();
            let ldl = ld * l;
            d += l * rho * ld - (ldl * rho + rho * ldl) * half;
        }
        pack(&d)
    };
    let mut edges: Vec<f64> = coupling
        .breakpoints()
        .into_iter()
        .filter(|&b| b > 0.0)
        .collect();
    let tau_end = *times.last().unwrap();
    edges.retain(|&b| b < tau_end);
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    edges.push(tau_end);

    let mut y = pack(&(ket_bra(1, 1) * Complex64::from(profile.remaining(0.0))));
    let mut t0 = 0.0;
    let mut out = Vec::with_capacity(times.len());
    let mut idx = 0;
    for &edge in &edges {
        let hi = times.partition_point(|&t| t <= edge);
        let mut chunk: Vec<f64> = times[idx..hi].to_vec();
        chunk.push(edge);
        let (states, _) = ode::integrate(rhs, t0, y, edge, &chunk, opts, |_, _| {})?;
        for (&tau, st) in times[idx..hi].iter().zip(&states) {
            out.push(DensityMatrix3 {
                tau,
                rho: unpack(st),
            });
        }
        y = *states.last().unwrap();
        t0 = edge;
        idx = hi;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionCheck {
    /// `max |ρ_ij − ψ_iψ_j|` over the excited block.
    pub max_deviation: f64,
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
    /// `max |ρ₀₀ − (∫r_out + ∫κ_iβ²)|`.
    pub max_ground_mismatch: f64,
}

/// Compares the master equation against the non-Hermitian amplitude
/// evolution on the same sample grid.
pub fn verify_nonhermitian_reduction(
    profile: &InputProfile,
    params: &MemoryParams,
    coupling: &dyn Coupling,
    times: &[f64],
    tol: f64,
) -> Result<ReductionCheck> {
    let traj = simulate_at(
        profile,
        params,
        coupling,
        times,
        SimOptions {
            tol,
            ..Default::default()
        },
    )?;
    let rhos = simulate_master_equation(profile, params, coupling, times, tol)?;
    let mut check = ReductionCheck {
        max_deviation: 0.0,
        max_trace_error: 0.0,
        max_hermiticity_error: 0.0,
        min_eigenvalue: f64::INFINITY,
        max_ground_mismatch: 0.0,
    };
    for (s, d) in traj.samples.iter().zip(&rhos) {
        let psi = [s.beta1, s.beta];
        for i in 0..2 {
            for j in 0..2 {
                let dev = (d.rho[(i + 1, j + 1)] - Complex64::from(psi[i] * psi[j])).norm();
                check.max_deviation = check.max_deviation.max(dev);
            }
        }
        check.max_trace_error = check.max_trace_error.max((d.trace() - 1.0).abs());
        check.max_hermiticity_error = check.max_hermiticity_error.max(d.hermiticity_error());
        check.min_eigenvalue = check.min_eigenvalue.min(d.min_eigenvalue());
        let ground = d.population(0) - (s.cum_reflection + s.cum_intrinsic);
        check.max_ground_mismatch = check.max_ground_mismatch.max(ground.abs());
    }
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::Constant;
    use crate::protocol::build_schedule;

    fn exp(r: f64) -> InputProfile {
        InputProfile::exponential(r).unwrap()
    }

    fn ki(k: f64) -> MemoryParams {
        MemoryParams::new(k).unwrap()
    }

    #[test]
    fn reflection_rate_examples() {
        let (r, k) = (0.04f64, 0.7f64);
        assert!(reflection_rate(-(r / k).sqrt(), k, r) < 1e-18);
        assert_eq!(reflection_rate(-0.3, 0.0, 0.04), 0.04);
        assert!((reflection_rate(-0.1, 1.0, 0.04) - 0.01).abs() < 1e-16);
    }

    #[test]
    fn zero_coupling_reflects_everything() {
        let p = exp(0.2);
        let t = simulate_amplitudes(&p, &ki(1e-3), &Constant(0.0), 100.0, 1e-10).unwrap();
        for s in &t.samples {
            assert_eq!(s.beta, 0.0);
            assert!((s.r_out - s.r_in).abs() < 1e-16);
        }
        assert!((t.last().cum_reflection - (1.0 - p.remaining(100.0))).abs() < 1e-9);
        assert!(energy_balance_residual(&t) <= 5e-9);
    }

    #[test]
    fn seeded_free_decay() {
        let silent = InputProfile::tabulated(&[(0.0, 0.0), (50.0, 0.0)]).unwrap();
        let (k, loss, b0) = (0.3, 1e-2, 0.8);
        let times: Vec<f64> = (0..=100).map(|j| j as f64 * 0.2).collect();
        let opts = SimOptions {
            tol: 1e-11,
            beta0: -b0,
        };
        let t = simulate_at(&silent, &ki(loss), &Constant(k), &times, opts).unwrap();
        for s in &t.samples {
            let expected = b0 * b0 * (-(k + loss) * s.tau).exp();
            assert!((s.beta * s.beta - expected).abs() < 1e-10, "tau={}", s.tau);
        }
    }

    #[test]
    fn optimal_schedule_nulls_reflection() {
        let p = exp(0.036);
        let m = ki(1e-4);
        let s = build_schedule(&p, &m).unwrap();
        let t = simulate_amplitudes(&p, &m, &s, 400.0, 1e-10).unwrap();
        assert!(t.max_reflection_after(s.tau_c()) <= 1e-8);
        assert!(t.max_bookkeeping_error() <= 1e-9);
        let res = energy_balance_residual(&t);
        assert!(res <= 5e-9, "residual {res:e}");
        for x in t.samples.iter().step_by(50) {
            let exact = p.remaining(x.tau);
            assert!((x.beta1 * x.beta1 - exact).abs() <= 1e-9);
        }
    }

    #[test]
    fn residual_detects_imbalance() {
        let p = exp(0.2);
        let mut t = simulate_amplitudes(&p, &ki(0.0), &Constant(0.0), 20.0, 1e-10).unwrap();
        for s in &mut t.samples {
            s.r_in += 0.1;
        }
        assert!((energy_balance_residual(&t) - 0.1).abs() < 1e-6);
    }

    #[test]
    fn fornberg_weights() {
        let xs = [0.0, 0.1, 0.3, 0.35, 0.7];
        let w = derivative_weights(0.3, &xs);
        let d: f64 = xs.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((d - 4.0 * 0.3f64.powi(3)).abs() < 1e-12);
        let d0: f64 = w.iter().sum();
        assert!(d0.abs() < 1e-12);
    }

    #[test]
    fn tolerance_bounds() {
        let p = exp(0.2);
        assert!(simulate_amplitudes(&p, &ki(0.0), &Constant(0.5), 10.0, 1e-3).is_err());
        assert!(simulate_amplitudes(&p, &ki(0.0), &Constant(0.5), 10.0, 1e-14).is_err());
    }

    #[test]
    fn master_equation_idle_is_constant() {
        let silent = InputProfile::tabulated(&[(0.0, 0.0), (10.0, 0.0)]).unwrap();
        let times = [0.0, 5.0, 10.0];
        let rhos =
            simulate_master_equation(&silent, &ki(0.0), &Constant(0.0), &times, 1e-10).unwrap();
        for d in &rhos {
            assert_eq!(d.rho, rhos[0].rho);
        }
        let p = exp(0.3);
        let rhos =
            simulate_master_equation(&p, &ki(0.0), &Constant(0.0), &[0.0, 1.0], 1e-10).unwrap();
        assert!((rhos[0].population(1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn master_equation_matches_amplitudes() {
        let p = exp(0.2);
        let m = ki(1e-3);
        let s = build_schedule(&p, &m).unwrap();
        let times = sample_grid(60.0, 301, s.tau_c() + 1.0, &[s.tau_c()]);
        let c = verify_nonhermitian_reduction(&p, &m, &s, &times, 1e-10).unwrap();
        assert!(c.max_deviation <= 1e-8, "{c:?}");
        assert!(c.max_trace_error <= 1e-10, "{c:?}");
        assert!(c.max_ground_mismatch <= 1e-8, "{c:?}");
        assert!(
            c.max_hermiticity_error <= 1e-12 && c.min_eigenvalue >= -1e-10,
            "{c:?}"
        );
    }
}
