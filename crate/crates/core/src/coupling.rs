//! Coupling laws `κ(τ)` accepted by the simulators.

use std::path::Path;

use crate::error::{Error, Result};
use crate::profiles::{InputProfile, MemoryParams};
use crate::protocol::CouplingSchedule;
use crate::quad::{integrate, Tolerance};

pub trait Coupling: Sync {
    fn kappa(&self, tau: f64) -> f64;

    /// Times where `κ` or its derivative jumps; integrators restart there.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl Coupling for CouplingSchedule {
    fn kappa(&self, tau: f64) -> f64 {
        CouplingSchedule::kappa(self, tau)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.switch_times()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl Coupling for Constant {
    fn kappa(&self, _: f64) -> f64 {
        self.0
    }
}

/// Any `Fn(τ) -> κ`.
pub struct FnCoupling<F>(pub F);

impl<F: Fn(f64) -> f64 + Sync> Coupling for FnCoupling<F> {
    fn kappa(&self, tau: f64) -> f64 {
        (self.0)(tau)
    }
}

/// Multiplies another coupling by a constant factor (fault injection).
pub struct Scaled<'a> {
    pub inner: &'a dyn Coupling,
    pub factor: f64,
}

impl Coupling for Scaled<'_> {
    fn kappa(&self, tau: f64) -> f64 {
        self.factor * self.inner.kappa(tau)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints()
    }
}

/// Threshold above which a loaded node is read as saturated (`κ = κ_max`).
const SATURATED: f64 = 1.0 - 1e-9;

/// A schedule read back from a `tau,kappa,…` CSV.
///
/// Between two saturated nodes `κ = 1`. Between other nodes the population
/// implied by zero reflection, `β² = r_in/κ`, is carried forward with the
/// tracking law so the loaded schedule reproduces the one that produced the
/// file rather than a piecewise-linear caricature of it. Intervals where
/// that is undefined fall back to linear interpolation.
#[derive(Debug, Clone)]
pub struct LoadedSchedule {
    profile: InputProfile,
    kappa_i: f64,
    tau: Vec<f64>,
    kappa: Vec<f64>,
}

impl LoadedSchedule {
    pub fn new(
        profile: &InputProfile,
        params: &MemoryParams,
        nodes: &[(f64, f64)],
    ) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Parse("schedule needs at least two rows".into()));
        }
        if nodes.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Parse(
                "schedule tau column not strictly increasing".into(),
            ));
        }
        if let Some(&(t, k)) = nodes.iter().find(|(_, k)| !(0.0..=1.0 + 1e-9).contains(k)) {
            return Err(Error::Parse(format!(
                "schedule kappa {k} at tau {t} outside [0, 1]"
            )));
        }
        Ok(LoadedSchedule {
            profile: profile.clone(),
            kappa_i: params.kappa_i,
            tau: nodes.iter().map(|n| n.0).collect(),
            kappa: nodes.iter().map(|n| n.1).collect(),
        })
    }

    /// Reads the `tau` and `kappa` columns of a schedule CSV.
    pub fn from_csv(
        path: impl AsRef<Path>,
        profile: &InputProfile,
        params: &MemoryParams,
    ) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse(format!("{}: missing column `{name}`", path.display())))
        };
        let (ct, ck) = (col("tau")?, col("kappa")?);
        let mut nodes = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |c: usize| -> Result<f64> {
                rec.get(c)
                    .unwrap_or("")
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{} row {}: {e}", path.display(), line + 2)))
            };
            nodes.push((num(ct)?, num(ck)?));
        }
        Self::new(profile, params, &nodes)
    }

    fn saturated(&self, k: usize) -> bool {
        self.kappa[k] >= SATURATED && self.kappa[k + 1] >= SATURATED
    }
}

impl Coupling for LoadedSchedule {
    fn kappa(&self, tau: f64) -> f64 {
        let n = self.tau.len();
        if tau <= self.tau[0] {
            return self.kappa[0];
        }
        let k = self
            .tau
            .partition_point(|&t| t <= tau)
            .saturating_sub(1)
            .min(n - 2);
        if k + 1 < n && self.saturated(k) {
            return 1.0;
        }
        let (t0, k0) = (self.tau[k], self.kappa[k]);
        let r0 = self.profile.rate(t0);
        let r = self.profile.rate(tau);
        if k0 > 0.0 && r0 > 0.0 {
            let ki = self.kappa_i;
            let p0 = r0 / k0;
            let tol = Tolerance {
                abs: 1e-15,
                rel: 1e-13,
                max_panels: 400,
            };
            let p = p0 * (-ki * (tau - t0)).exp()
                + integrate(
                    |s| (-ki * (tau - s)).exp() * self.profile.rate(s),
                    t0,
                    tau,
                    tol,
                )
                .value;
            return if r == 0.0 { 0.0 } else { r / p };
        }
        if tau >= self.tau[n - 1] {
            return self.kappa[n - 1];
        }
        let w = (tau - t0) / (self.tau[k + 1] - t0);
        k0 + w * (self.kappa[k + 1] - k0)
    }

    fn breakpoints(&self) -> Vec<f64> {
        let n = self.tau.len();
        (1..n - 1)
            .filter(|&k| self.saturated(k - 1) != self.saturated(k))
            .map(|k| self.tau[k])
            .collect()
    }
}
