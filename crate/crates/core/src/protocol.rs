//! Two-stage optimal transfer for arbitrary input profiles.
//!
//! Stage 1 holds the coupling at `κ_max` while the memory builds a seed
//! population (the reflected field is lost). Once `κ_max·β²` reaches `r_in`
//! the coupling switches to `κ = r_in/β²`, which nulls the reflection for the
//! rest of the pulse.
//!
//! Everything is computed from quadratures cached on a node grid: each
//! evaluation propagates the exact linear stage dynamics from the nearest
//! node.

use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::io::{csv_text, write_atomic};
use crate::profiles::{Family, InputProfile, MemoryParams};
use crate::quad::{integrate, Tolerance};
use crate::roots::brent;

/// Allowed excess of `κ` over `κ_max` before the schedule counts as
/// infeasible.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

const MAX_SEGMENTS: usize = 256;

fn tol() -> Tolerance {
    Tolerance {
        abs: 1e-15,
        rel: 1e-13,
        max_panels: 400,
    }
}

/// Points where the profile (or its interpolant) is not smooth.
pub(crate) fn profile_breaks(p: &InputProfile) -> Vec<f64> {
    match p {
        InputProfile::Gaussian { .. } => p.centre().into_iter().collect(),
        InputProfile::Tabulated(t) => t.samples().map(|s| s.0).collect(),
        InputProfile::Exponential { .. } => Vec::new(),
    }
}

fn integrate_split(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64]) -> f64 {
    let mut lo = a;
    let mut sum = 0.0;
    for &x in breaks.iter().filter(|&&x| x > a && x < b) {
        sum += integrate(&f, lo, x, tol()).value;
        lo = x;
    }
    sum + integrate(&f, lo, b, tol()).value
}

/// `β(t)` under `κ = 1` given `β(t0)`.
fn saturated_step(p: &InputProfile, c: f64, t0: f64, beta0: f64, t: f64) -> f64 {
    if t == t0 {
        return beta0;
    }
    beta0 * (-c * (t - t0)).exp()
        - integrate(|s| (-c * (t - s)).exp() * p.amplitude(s), t0, t, tol()).value
}

/// `β²(t)` under the zero-reflection law given `β²(t0)`.
fn tracking_step(p: &InputProfile, ki: f64, t0: f64, p0: f64, t: f64) -> f64 {
    if t == t0 {
        return p0;
    }
    p0 * (-ki * (t - t0)).exp()
        + integrate(|s| (-ki * (t - s)).exp() * p.rate(s), t0, t, tol()).value
}

/// `(1 − e^{−k x})/k`, continuous at `k = 0`.
fn decay_weight(k: f64, x: f64) -> f64 {
    let y = k * x;
    if y.abs() < 1e-10 {
        x * (1.0 - 0.5 * y)
    } else {
        -(-y).exp_m1() / k
    }
}

/// `β(τ) = −e^{−(1+κ_i)τ/2} ∫₀^τ e^{(1+κ_i)s/2} √r_in(s) ds` under `κ = κ_max`.
pub fn stage1_amplitude(profile: &InputProfile, params: &MemoryParams, tau: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::Domain(format!("tau = {tau} is negative")));
    }
    let c = 0.5 * (1.0 + params.kappa_i);
    let breaks = profile_breaks(profile);
    Ok(-integrate_split(
        |s| (-c * (tau - s)).exp() * profile.amplitude(s),
        0.0,
        tau,
        &breaks,
    ))
}

/// First time at which the stage-1 population satisfies `κ_max β² = r_in`.
pub fn threshold_time(profile: &InputProfile, params: &MemoryParams) -> Result<f64> {
    let c = 0.5 * (1.0 + params.kappa_i);
    let horizon = profile.horizon();
    saturated_run(profile, c, 0.0, 0.0, horizon, false)?
        .root
        .ok_or(Error::NoThreshold {
            start: 0.0,
            horizon,
        })
}

/// `β²(τ) = e^{−κ_i τ}(r_in(τ_c) e^{κ_i τ_c} + ∫_{τ_c}^τ e^{κ_i s} r_in(s) ds)`.
pub fn stage2_population(
    profile: &InputProfile,
    params: &MemoryParams,
    tau_c: f64,
    tau: f64,
) -> Result<f64> {
    if !(tau >= tau_c) {
        return Err(Error::Domain(format!(
            "tau = {tau} precedes the threshold {tau_c}"
        )));
    }
    let ki = params.kappa_i;
    let breaks = profile_breaks(profile);
    Ok(profile.rate(tau_c) * (-ki * (tau - tau_c)).exp()
        + integrate_split(
            |s| (-ki * (tau - s)).exp() * profile.rate(s),
            tau_c,
            tau,
            &breaks,
        ))
}

struct SaturatedRun {
    nodes: Vec<(f64, f64)>,
    root: Option<f64>,
}

/// Marches `β` under `κ = 1` from `start` and stops at the first downward
/// crossing of `√r_in + β` (a sign-equivalent form of the threshold
/// condition that never overflows).
fn saturated_run(
    p: &InputProfile,
    c: f64,
    start: f64,
    beta0: f64,
    end: f64,
    resumed: bool,
) -> Result<SaturatedRun> {
    let grid = p.scan_grid(start, end);
    let mut nodes = vec![(start, beta0)];
    // a resumed run starts exactly on the threshold curve and moves above it
    let mut g_prev = if resumed {
        f64::INFINITY
    } else {
        p.amplitude(start) + beta0
    };
    for &t in &grid[1..] {
        let (tk, bk) = *nodes.last().unwrap();
        let b = saturated_step(p, c, tk, bk, t);
        let g = p.amplitude(t) + b;
        if g_prev > 0.0 && g <= 0.0 {
            if resumed && nodes.len() == 1 {
                return Err(Error::InfeasibleSchedule {
                    tau: start,
                    kappa: p.rate(t) / (b * b),
                });
            }
            let root = brent(
                |x| p.amplitude(x) + saturated_step(p, c, tk, bk, x),
                tk,
                t,
                0.0,
            )?;
            nodes.push((root, saturated_step(p, c, tk, bk, root)));
            return Ok(SaturatedRun {
                nodes,
                root: Some(root),
            });
        }
        nodes.push((t, b));
        g_prev = g;
    }
    Ok(SaturatedRun { nodes, root: None })
}

enum TrackingEnd {
    Horizon,
    Violation(f64),
}

fn tracking_run(
    p: &InputProfile,
    ki: f64,
    start: f64,
    p0: f64,
    end: f64,
    guard: bool,
) -> Result<(Vec<(f64, f64)>, TrackingEnd)> {
    let grid = p.scan_grid(start, end);
    let mut nodes = vec![(start, p0)];
    for &t in &grid[1..] {
        let (tk, pk) = *nodes.last().unwrap();
        let pt = tracking_step(p, ki, tk, pk, t);
        let r = p.rate(t);
        if r > pt * (1.0 + FEASIBILITY_SLACK) {
            if !guard {
                return Err(Error::InfeasibleSchedule {
                    tau: t,
                    kappa: r / pt,
                });
            }
            let f = |x: f64| p.rate(x) - tracking_step(p, ki, tk, pk, x);
            let v = if f(tk) >= 0.0 {
                tk
            } else {
                brent(f, tk, t, 0.0)?
            };
            if v > tk {
                nodes.push((v, tracking_step(p, ki, tk, pk, v)));
            }
            return Ok((nodes, TrackingEnd::Violation(v)));
        }
        nodes.push((t, pt));
    }
    Ok((nodes, TrackingEnd::Horizon))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    /// `κ = κ_max`; `beta_start` is `β` at `start`.
    Saturated {
        start: f64,
        end: f64,
        beta_start: f64,
    },
    /// `κ = r_in/β²`; `population_start` is `β²` at `start`.
    Tracking {
        start: f64,
        end: f64,
        population_start: f64,
    },
}

impl Segment {
    pub fn start(&self) -> f64 {
        match *self {
            Segment::Saturated { start, .. } | Segment::Tracking { start, .. } => start,
        }
    }

    pub fn end(&self) -> f64 {
        match *self {
            Segment::Saturated { end, .. } | Segment::Tracking { end, .. } => end,
        }
    }
}

/// Memory state at a given time: `β` on saturated stretches, `β²` on
/// tracking ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StageState {
    Saturated { beta: f64 },
    Tracking { population: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct ScheduleOptions {
    /// Resume stage 1 wherever the tracking law would need `κ > κ_max`;
    /// when off, such a schedule is rejected.
    pub feasibility_guard: bool,
    /// Overrides the profile's search horizon.
    pub horizon: Option<f64>,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        ScheduleOptions {
            feasibility_guard: true,
            horizon: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CouplingSchedule {
    profile: InputProfile,
    params: MemoryParams,
    tau_c: f64,
    horizon: f64,
    segments: Vec<Segment>,
    nodes: Vec<Vec<(f64, f64)>>,
    guard_engaged: bool,
}

pub fn build_schedule(profile: &InputProfile, params: &MemoryParams) -> Result<CouplingSchedule> {
    build_schedule_with(profile, params, ScheduleOptions::default())
}

pub fn build_schedule_with(
    profile: &InputProfile,
    params: &MemoryParams,
    opts: ScheduleOptions,
) -> Result<CouplingSchedule> {
    let ki = params.kappa_i;
    let c = 0.5 * (1.0 + ki);
    let horizon = opts.horizon.unwrap_or_else(|| profile.horizon());
    let mut segments = Vec::new();
    let mut nodes = Vec::new();
    let mut tau_c = None;
    let mut guard_engaged = false;
    let (mut start, mut beta, mut resumed) = (0.0, 0.0, false);
    loop {
        if segments.len() >= MAX_SEGMENTS {
            return Err(Error::InfeasibleSchedule {
                tau: start,
                kappa: f64::NAN,
            });
        }
        let run = saturated_run(profile, c, start, beta, horizon, resumed)?;
        let Some(root) = run.root else {
            if tau_c.is_none() {
                return Err(Error::NoThreshold {
                    start: 0.0,
                    horizon,
                });
            }
            segments.push(Segment::Saturated {
                start,
                end: f64::INFINITY,
                beta_start: beta,
            });
            nodes.push(run.nodes);
            break;
        };
        segments.push(Segment::Saturated {
            start,
            end: root,
            beta_start: beta,
        });
        nodes.push(run.nodes);
        tau_c.get_or_insert(root);

        let p0 = profile.rate(root);
        let (track, end) = tracking_run(profile, ki, root, p0, horizon, opts.feasibility_guard)?;
        match end {
            TrackingEnd::Horizon => {
                segments.push(Segment::Tracking {
                    start: root,
                    end: f64::INFINITY,
                    population_start: p0,
                });
                nodes.push(track);
                break;
            }
            TrackingEnd::Violation(v) => {
                let pv = track.last().unwrap().1;
                segments.push(Segment::Tracking {
                    start: root,
                    end: v,
                    population_start: p0,
                });
                nodes.push(track);
                guard_engaged = true;
                start = v;
                beta = -pv.sqrt();
                resumed = true;
            }
        }
    }
    Ok(CouplingSchedule {
        profile: profile.clone(),
        params: *params,
        tau_c: tau_c.unwrap(),
        horizon,
        segments,
        nodes,
        guard_engaged,
    })
}

impl CouplingSchedule {
    pub fn tau_c(&self) -> f64 {
        self.tau_c
    }

    pub fn profile(&self) -> &InputProfile {
        &self.profile
    }

    pub fn params(&self) -> &MemoryParams {
        &self.params
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Whether stage 1 had to be resumed to keep `κ ≤ κ_max`.
    pub fn guard_engaged(&self) -> bool {
        self.guard_engaged
    }

    /// Times where the coupling law switches.
    pub fn switch_times(&self) -> Vec<f64> {
        self.segments[1..].iter().map(Segment::start).collect()
    }

    fn segment_index(&self, tau: f64) -> usize {
        self.segments
            .partition_point(|s| s.start() <= tau)
            .saturating_sub(1)
    }

    fn node_before(&self, seg: usize, tau: f64) -> (f64, f64) {
        let nodes = &self.nodes[seg];
        let k = nodes.partition_point(|n| n.0 <= tau).saturating_sub(1);
        nodes[k]
    }

    pub fn state(&self, tau: f64) -> StageState {
        let tau = tau.max(0.0);
        let seg = self.segment_index(tau);
        let (tk, vk) = self.node_before(seg, tau);
        match self.segments[seg] {
            Segment::Saturated { .. } => {
                let c = 0.5 * (1.0 + self.params.kappa_i);
                StageState::Saturated {
                    beta: saturated_step(&self.profile, c, tk, vk, tau),
                }
            }
            Segment::Tracking { .. } => StageState::Tracking {
                population: tracking_step(&self.profile, self.params.kappa_i, tk, vk, tau),
            },
        }
    }

    /// Memory amplitude `β(τ) ≤ 0`.
    pub fn amplitude(&self, tau: f64) -> f64 {
        match self.state(tau) {
            StageState::Saturated { beta } => beta,
            StageState::Tracking { population } => -population.max(0.0).sqrt(),
        }
    }

    /// Memory population `β²(τ)`.
    pub fn population(&self, tau: f64) -> f64 {
        match self.state(tau) {
            StageState::Saturated { beta } => beta * beta,
            StageState::Tracking { population } => population,
        }
    }

    pub fn kappa(&self, tau: f64) -> f64 {
        match self.state(tau) {
            StageState::Saturated { .. } => 1.0,
            StageState::Tracking { population } => {
                let r = self.profile.rate(tau);
                if r == 0.0 {
                    0.0
                } else {
                    r / population
                }
            }
        }
    }

    /// Reflected rate `(β√κ + √r_in)²`; zero by construction on tracking
    /// stretches.
    pub fn reflection(&self, tau: f64) -> f64 {
        match self.state(tau) {
            StageState::Saturated { beta } => (beta + self.profile.amplitude(tau)).powi(2),
            StageState::Tracking { .. } => 0.0,
        }
    }

    /// `d(β²)/dτ`.
    pub fn population_rate(&self, tau: f64) -> f64 {
        let ki = self.params.kappa_i;
        match self.state(tau) {
            StageState::Saturated { beta } => {
                -2.0 * beta * self.profile.amplitude(tau) - (1.0 + ki) * beta * beta
            }
            StageState::Tracking { population } => self.profile.rate(tau) - ki * population,
        }
    }

    fn node_rate(&self, seg: usize, t: f64, v: f64) -> f64 {
        let ki = self.params.kappa_i;
        match self.segments[seg] {
            Segment::Saturated { .. } => -2.0 * v * self.profile.amplitude(t) - (1.0 + ki) * v * v,
            Segment::Tracking { .. } => self.profile.rate(t) - ki * v,
        }
    }

    /// Cumulative reflection `∫₀^τ r_out` and intrinsic loss `κ_i∫₀^τ β²`.
    pub fn losses_until(&self, tau: f64) -> (f64, f64) {
        let ki = self.params.kappa_i;
        let c = 0.5 * (1.0 + ki);
        let p = &self.profile;
        let (mut refl, mut intr) = (0.0, 0.0);
        for (seg, nodes) in self.segments.iter().zip(&self.nodes) {
            if seg.start() >= tau {
                break;
            }
            let end = seg.end().min(tau);
            let mut edges: Vec<(f64, f64)> = nodes.iter().copied().filter(|n| n.0 < end).collect();
            edges.push((end, f64::NAN));
            for w in edges.windows(2) {
                let ((a, va), (b, _)) = (w[0], w[1]);
                match seg {
                    Segment::Saturated { .. } => {
                        refl += integrate(
                            |s| (saturated_step(p, c, a, va, s) + p.amplitude(s)).powi(2),
                            a,
                            b,
                            tol(),
                        )
                        .value;
                        if ki > 0.0 {
                            intr += ki
                                * integrate(
                                    |s| saturated_step(p, c, a, va, s).powi(2),
                                    a,
                                    b,
                                    tol(),
                                )
                                .value;
                        }
                    }
                    Segment::Tracking { .. } => {
                        if ki > 0.0 {
                            // ∫_a^b β² = β²(a)·w(b−a) + ∫_a^b r_in(u)·w(b−u) du
                            let inner =
                                integrate(|u| p.rate(u) * decay_weight(ki, b - u), a, b, tol())
                                    .value;
                            intr += ki * (va * decay_weight(ki, b - a) + inner);
                        }
                    }
                }
            }
        }
        (refl, intr)
    }

    /// Population peak, fidelity and loss breakdown.
    pub fn report(&self) -> Result<TransferReport> {
        let ki = self.params.kappa_i;
        let p = &self.profile;
        let mut peak_at_horizon = false;
        let (tau_max, fidelity) = if ki == 0.0 {
            let fidelity = match self.segments.last().unwrap() {
                Segment::Tracking { .. } if !self.guard_engaged => {
                    p.rate(self.tau_c) + p.tail(self.tau_c)
                }
                Segment::Tracking { .. } => {
                    let (t, v) = *self.nodes.last().unwrap().last().unwrap();
                    v + p.tail(t)
                }
                Segment::Saturated { .. } => 0.0,
            };
            (f64::INFINITY, fidelity)
        } else {
            let first = self.segment_index(self.tau_c);
            let pts = self.nodes[first..]
                .iter()
                .enumerate()
                .flat_map(|(i, ns)| ns.iter().map(move |&(t, v)| (first + i, t, v)))
                .filter(|&(_, t, _)| t >= self.tau_c);
            let mut prev: Option<(f64, f64)> = None;
            let mut bracket = None;
            let mut last_t = self.tau_c;
            for (seg, t, v) in pts {
                let h = self.node_rate(seg, t, v);
                if let Some((pt, ph)) = prev {
                    if ph > 0.0 && h <= 0.0 && t > pt {
                        bracket = Some((pt, t));
                        break;
                    }
                }
                prev = Some((t, h));
                last_t = t;
            }
            let tau_max = match bracket {
                Some((a, b)) => brent(|x| self.population_rate(x), a, b, 1e-12)?,
                None => {
                    peak_at_horizon = true;
                    last_t
                }
            };
            (tau_max, self.population(tau_max))
        };
        let (refl, intr) = self.losses_until(tau_max);
        let unabsorbed = if tau_max.is_finite() {
            p.tail(tau_max)
        } else {
            0.0
        } + p.deficit();
        Ok(TransferReport {
            tau_c: self.tau_c,
            tau_max,
            fidelity,
            loss_stage1_reflection: refl,
            loss_intrinsic: intr,
            loss_unabsorbed: unabsorbed,
            guard_engaged: self.guard_engaged,
            peak_at_horizon,
            loss_exceeds_rate: p.family() == Family::Exponential && ki >= p.peak_rate(),
        })
    }

    /// Uniform samples on `[0, tau_end]` with the switch times inserted.
    pub fn sample_times(&self, samples: usize, tau_end: f64) -> Vec<f64> {
        let n = samples.max(2);
        let mut ts: Vec<f64> = (0..n)
            .map(|k| tau_end * k as f64 / (n - 1) as f64)
            .collect();
        ts.push(self.tau_c);
        ts.extend(self.switch_times());
        ts.retain(|&t| t <= tau_end);
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }

    pub fn rows(&self, taus: &[f64]) -> Vec<ScheduleRow> {
        taus.iter()
            .map(|&tau| {
                let beta = self.amplitude(tau);
                let kappa = self.kappa(tau);
                let r_in = self.profile.rate(tau);
                ScheduleRow {
                    tau,
                    kappa,
                    r_in,
                    beta1_sq: self.profile.remaining(tau),
                    beta_sq: beta * beta,
                    r_out: self.reflection(tau),
                }
            })
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, taus: &[f64]) -> Result<()> {
        let text = csv_text(
            &SCHEDULE_COLUMNS,
            self.rows(taus).iter().map(ScheduleRow::to_vec),
        );
        write_atomic(path, text.as_bytes())
    }
}

pub const SCHEDULE_COLUMNS: [&str; 6] = ["tau", "kappa", "r_in", "beta1_sq", "beta_sq", "r_out"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleRow {
    pub tau: f64,
    pub kappa: f64,
    pub r_in: f64,
    pub beta1_sq: f64,
    pub beta_sq: f64,
    pub r_out: f64,
}

impl ScheduleRow {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.tau,
            self.kappa,
            self.r_in,
            self.beta1_sq,
            self.beta_sq,
            self.r_out,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferReport {
    pub tau_c: f64,
    /// Infinite for a lossless memory.
    pub tau_max: f64,
    pub fidelity: f64,
    pub loss_stage1_reflection: f64,
    pub loss_intrinsic: f64,
    /// Input arriving after `τ_max` plus the Gaussian truncation deficit.
    pub loss_unabsorbed: f64,
    pub guard_engaged: bool,
    /// No peak before the horizon; `τ_max` is the horizon.
    pub peak_at_horizon: bool,
    /// Exponential input with `κ_i ≥ r`, outside the closed-form regime.
    pub loss_exceeds_rate: bool,
}

impl TransferReport {
    /// `F + R + I + U`, which should be 1.
    pub fn balance(&self) -> f64 {
        self.fidelity + self.loss_stage1_reflection + self.loss_intrinsic + self.loss_unabsorbed
    }

    pub fn to_json(&self) -> Value {
        let tau_max = if self.tau_max.is_infinite() {
            json!("inf")
        } else {
            json!(self.tau_max)
        };
        json!({
            "tau_c": self.tau_c,
            "tau_max": tau_max,
            "fidelity": self.fidelity,
            "loss_stage1_reflection": self.loss_stage1_reflection,
            "loss_intrinsic": self.loss_intrinsic,
            "loss_unabsorbed": self.loss_unabsorbed,
            "flags": {
                "guard_engaged": self.guard_engaged,
                "peak_at_horizon": self.peak_at_horizon,
                "loss_exceeds_rate": self.loss_exceeds_rate,
            }
        })
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text =
            serde_json::to_string_pretty(&self.to_json()).map_err(|e| Error::Io(e.to_string()))?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

pub fn peak_time_and_fidelity(schedule: &CouplingSchedule) -> Result<TransferReport> {
    schedule.report()
}

/// Builds the schedule and its report in one go.
pub fn transfer(
    profile: &InputProfile,
    params: &MemoryParams,
) -> Result<(CouplingSchedule, TransferReport)> {
    let schedule = build_schedule(profile, params)?;
    let report = schedule.report()?;
    Ok((schedule, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::{exp_constants, gauss_constants, sigma_from_peak};

    fn exp(r: f64) -> InputProfile {
        InputProfile::exponential(r).unwrap()
    }

    fn ki(k: f64) -> MemoryParams {
        MemoryParams::new(k).unwrap()
    }

    #[test]
    fn stage1_amplitude_examples() {
        assert_eq!(stage1_amplitude(&exp(0.036), &ki(1e-4), 0.0).unwrap(), 0.0);
        let silent = InputProfile::tabulated(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]).unwrap();
        assert_eq!(stage1_amplitude(&silent, &ki(0.0), 1.5).unwrap(), 0.0);
        let (r, k) = (0.036f64, 1e-4f64);
        let tau = 1.0;
        let closed = -(2.0 * r.sqrt() / (1.0 + k - r))
            * ((-r * tau / 2.0).exp() - (-(1.0 + k) * tau / 2.0).exp());
        let b = stage1_amplitude(&exp(r), &ki(k), tau).unwrap();
        assert!(b < 0.0);
        assert!((b - closed).abs() < 1e-9);
        assert!(stage1_amplitude(&exp(r), &ki(k), -1.0).is_err());
    }

    #[test]
    fn threshold_matches_closed_form() {
        let tc = threshold_time(&exp(0.036), &ki(1e-4)).unwrap();
        assert!((tc - exp_constants(0.036, 1e-4).unwrap().tau_c).abs() < 1e-8);
        let tc = threshold_time(&exp(1.0 - 1e-9), &ki(0.0)).unwrap();
        assert!((tc - 1.0).abs() < 1e-6);
    }

    #[test]
    fn threshold_gaussian_two_solvers() {
        let g = InputProfile::gaussian(0.1533, 4.0).unwrap();
        let tc = threshold_time(&g, &ki(1e-4)).unwrap();
        let closed = gauss_constants(sigma_from_peak(0.1533), 4.0, 1e-4)
            .unwrap()
            .tau_c;
        assert!((tc - closed).abs() < 1e-8);
        // plain bisection on the quadrature form of the threshold function
        let c = 0.5 * (1.0 + 1e-4);
        let f = |t: f64| {
            g.amplitude(t) * (c * t).exp()
                - crate::quad::quad(|s| (c * s).exp() * g.amplitude(s), 0.0, t)
        };
        let (mut a, mut b) = (tc - 0.5, tc + 0.5);
        assert!(f(a) > 0.0 && f(b) < 0.0);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if f(m) > 0.0 {
                a = m
            } else {
                b = m
            }
        }
        assert!((0.5 * (a + b) - tc).abs() < 1e-8);
    }

    #[test]
    fn stage2_population_examples() {
        let p = exp(0.036);
        let m = ki(1e-4);
        let tc = threshold_time(&p, &m).unwrap();
        assert_eq!(stage2_population(&p, &m, tc, tc).unwrap(), p.rate(tc));
        let c = exp_constants(0.036, 1e-4).unwrap();
        let direct = c.a1 * (-1e-4 * 50.0f64).exp() - c.a2 * (-0.036 * 50.0f64).exp();
        assert!((stage2_population(&p, &m, tc, 50.0).unwrap() - direct).abs() < 1e-9);
        let m0 = ki(0.0);
        let tc0 = threshold_time(&p, &m0).unwrap();
        let far = stage2_population(&p, &m0, tc0, 2000.0).unwrap();
        assert!((far - (p.rate(tc0) + p.tail(tc0))).abs() < 1e-10);
        assert!(stage2_population(&p, &m, tc, tc - 0.1).is_err());
    }

    #[test]
    fn schedule_examples() {
        let s = build_schedule(&exp(0.036), &ki(1e-4)).unwrap();
        assert_eq!(s.kappa(s.tau_c()), 1.0);
        assert_eq!(s.kappa(0.3), 1.0);
        let c = exp_constants(0.036, 1e-4).unwrap();
        let k = s.kappa(100.0);
        assert!((k - c.coupling(100.0).unwrap()).abs() < 1e-8 * k);
        assert!(!s.guard_engaged());
    }

    #[test]
    fn compact_support_ends_coupling() {
        // triangular pulse of unit area on [0, 4]
        let samples: Vec<(f64, f64)> = (0..=400)
            .map(|k| {
                let t = k as f64 * 0.01;
                (t, 0.5 - 0.125 * (t - 2.0).abs() * 2.0)
            })
            .map(|(t, r)| (t, r.max(0.0)))
            .collect();
        let p = InputProfile::tabulated(&samples).unwrap();
        let s = build_schedule(&p, &ki(0.0)).unwrap();
        assert!(s.kappa(3.9) > 0.0);
        assert_eq!(s.kappa(4.5), 0.0);
        assert_eq!(s.kappa(4.5) * s.population(4.5), 0.0);
    }

    #[test]
    fn report_examples() {
        let (_, rep) = transfer(&exp(0.036), &ki(1e-4)).unwrap();
        assert!((rep.fidelity - 0.97).abs() < 0.005);
        assert!((rep.tau_max - 164.3).abs() < 1.5);
        assert!((rep.fidelity - 0.970_292_327_252_241_8).abs() < 1e-8);
        assert!((rep.balance() - 1.0).abs() < 1e-6);

        let g = InputProfile::gaussian(0.1533, 4.0).unwrap();
        let (_, rep) = transfer(&g, &ki(1e-4)).unwrap();
        assert!((rep.fidelity - 0.9987).abs() < 0.0005);
        assert!((rep.tau_max - 20.4).abs() < 0.5);
        assert!((rep.balance() - 1.0).abs() < 1e-6);

        let (_, rep) = transfer(&exp(0.2), &ki(0.0)).unwrap();
        assert!(rep.tau_max.is_infinite());
        assert!((rep.fidelity - exp_constants(0.2, 0.0).unwrap().a1).abs() < 1e-10);
        assert_eq!(rep.to_json()["tau_max"], "inf");
    }

    #[test]
    fn fidelity_non_increasing_in_loss() {
        let p = exp(0.2);
        let mut last = f64::INFINITY;
        for k in [0.0, 1e-5, 1e-4, 1e-3, 1e-2] {
            let (_, rep) = transfer(&p, &ki(k)).unwrap();
            assert!(rep.fidelity <= last);
            last = rep.fidelity;
        }
    }

    #[test]
    fn loss_above_rate_is_flagged_not_fatal() {
        let (_, rep) = transfer(&exp(0.01), &ki(0.02)).unwrap();
        assert!(rep.loss_exceeds_rate);
        assert!(rep.tau_max.is_finite() && rep.fidelity > 0.0);
        assert!((rep.balance() - 1.0).abs() < 1e-6);
    }

    fn double_pulse() -> InputProfile {
        // a weak early pulse followed by a steep, strong one
        let g = |t: f64, w: f64, c: f64, s: f64| {
            w * (-(t - c).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
        };
        let samples: Vec<(f64, f64)> = (0..=6000)
            .map(|k| {
                let t = k as f64 * 0.005;
                (t, g(t, 0.05, 4.0, 1.0) + g(t, 0.95, 20.0, 0.6))
            })
            .collect();
        InputProfile::tabulated(&samples).unwrap()
    }

    #[test]
    fn guard_resumes_stage_one() {
        let p = double_pulse();
        let s = build_schedule(&p, &ki(1e-3)).unwrap();
        assert!(s.guard_engaged());
        assert!(s.segments().len() >= 3);
        for k in 0..3000 {
            let t = k as f64 * 0.01;
            assert!(s.kappa(t) <= 1.0 + FEASIBILITY_SLACK, "t={t}");
        }
        let rep = s.report().unwrap();
        assert!(rep.guard_engaged);
        assert!((rep.balance() - 1.0).abs() < 1e-6, "{}", rep.balance());

        let strict = ScheduleOptions {
            feasibility_guard: false,
            ..Default::default()
        };
        assert!(matches!(
            build_schedule_with(&p, &ki(1e-3), strict),
            Err(Error::InfeasibleSchedule { .. })
        ));
    }

    #[test]
    fn empty_input_has_no_threshold() {
        let silent = InputProfile::tabulated(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]).unwrap();
        assert!(matches!(
            threshold_time(&silent, &ki(0.0)),
            Err(Error::NoThreshold { .. })
        ));
    }

    #[test]
    fn csv_and_json_export() {
        let dir = tempfile::tempdir().unwrap();
        let (s, rep) = transfer(&exp(0.036), &ki(1e-4)).unwrap();
        let taus = s.sample_times(50, 300.0);
        assert!(taus.contains(&s.tau_c()));
        s.write_csv(dir.path().join("s.csv"), &taus).unwrap();
        let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
        assert!(text.starts_with("tau,kappa,r_in,beta1_sq,beta_sq,r_out\n"));
        assert_eq!(text.lines().count(), taus.len() + 1);
        rep.write_json(dir.path().join("r.json")).unwrap();
        let v: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap())
                .unwrap();
        assert_eq!(v["fidelity"].as_f64().unwrap(), rep.fidelity);
    }
}
