//! Normalised input intensity profiles `r_in(τ)` and resonator parameters.
//!
//! Times are in units of `1/κ_max` and rates in units of `κ_max`, so the
//! maximum coupling is always 1.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad;
use crate::special::erfc;

pub const KAPPA_MAX: f64 = 1.0;

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Default Gaussian offset multiplier: the peak sits `4σ` after `τ = 0`.
pub const DEFAULT_GAUSS_OFFSET: f64 = 4.0;
const MIN_GAUSS_OFFSET: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryParams {
    pub kappa_i: f64,
}

impl MemoryParams {
    pub fn new(kappa_i: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&kappa_i) {
            return Err(Error::Domain(format!("kappa_i = {kappa_i} outside [0, 1)")));
        }
        Ok(MemoryParams { kappa_i })
    }

    pub fn kappa_max(&self) -> f64 {
        KAPPA_MAX
    }
}

/// Monotone cubic (Fritsch–Butland) interpolant over `(τ_k, r_k)` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    tau: Vec<f64>,
    rate: Vec<f64>,
    slope: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Table {
    fn new(samples: &[(f64, f64)]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidProfile(
                "a table needs at least two samples".into(),
            ));
        }
        if samples
            .iter()
            .any(|(t, r)| !t.is_finite() || !r.is_finite())
        {
            return Err(Error::InvalidProfile("non-finite table entry".into()));
        }
        let tau: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let rate: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let slope = pchip_slopes(&tau, &rate);
        let mut cumulative = vec![0.0; tau.len()];
        for k in 1..tau.len() {
            let h = tau[k] - tau[k - 1];
            cumulative[k] = cumulative[k - 1]
                + h * (rate[k - 1] + rate[k]) / 2.0
                + h * h * (slope[k - 1] - slope[k]) / 12.0;
        }
        Ok(Table {
            tau,
            rate,
            slope,
            cumulative,
        })
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.tau.iter().copied().zip(self.rate.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    fn first(&self) -> f64 {
        self.tau[0]
    }

    fn last(&self) -> f64 {
        *self.tau.last().unwrap()
    }

    fn interval(&self, x: f64) -> usize {
        let k = self.tau.partition_point(|&t| t <= x);
        k.saturating_sub(1).min(self.tau.len() - 2)
    }

    fn eval(&self, x: f64) -> f64 {
        if x < self.first() || x > self.last() {
            return 0.0;
        }
        let k = self.interval(x);
        let h = self.tau[k + 1] - self.tau[k];
        let t = (x - self.tau[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.rate[k]
            + h10 * h * self.slope[k]
            + h01 * self.rate[k + 1]
            + h11 * h * self.slope[k + 1]
    }

    /// Exact integral of the interpolant over `(-∞, x]`.
    fn integral_to(&self, x: f64) -> f64 {
        if x <= self.first() {
            return 0.0;
        }
        if x >= self.last() {
            return *self.cumulative.last().unwrap();
        }
        let k = self.interval(x);
        let h = self.tau[k + 1] - self.tau[k];
        let t = (x - self.tau[k]) / h;
        let (t2, t3, t4) = (t * t, t * t * t, t * t * t * t);
        let i00 = t - t3 + t4 / 2.0;
        let i10 = t2 / 2.0 - 2.0 * t3 / 3.0 + t4 / 4.0;
        let i01 = t3 - t4 / 2.0;
        let i11 = -t3 / 3.0 + t4 / 4.0;
        self.cumulative[k]
            + h * (self.rate[k] * i00
                + h * self.slope[k] * i10
                + self.rate[k + 1] * i01
                + h * self.slope[k + 1] * i11)
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() || d0 == 0.0 {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputProfile {
    /// `r·exp(-r·τ)`.
    Exponential {
        rate: f64,
    },
    /// `r·exp(-(τ - nσ)²/(2σ²))` with `r = 1/(σ√(2π))`.
    Gaussian {
        peak: f64,
        sigma: f64,
        offset: f64,
    },
    Tabulated(Arc<Table>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Exponential,
    Gaussian,
    Tabulated,
}

impl InputProfile {
    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Domain(format!(
                "exponential rate must be positive, got {rate}"
            )));
        }
        Ok(InputProfile::Exponential { rate })
    }

    /// Gaussian with peak rate `peak` and offset `τ₀ = n·σ`; requires `n ≥ 4`.
    pub fn gaussian(peak: f64, n: f64) -> Result<Self> {
        Self::gaussian_with_min_offset(peak, n, DEFAULT_GAUSS_OFFSET)
    }

    /// As [`gaussian`](Self::gaussian) with a relaxed lower bound on `n`.
    /// The bound itself is clamped at 3.
    pub fn gaussian_with_min_offset(peak: f64, n: f64, min_n: f64) -> Result<Self> {
        if !(peak > 0.0 && peak.is_finite()) {
            return Err(Error::Domain(format!(
                "gaussian peak rate must be positive, got {peak}"
            )));
        }
        let min_n = min_n.max(MIN_GAUSS_OFFSET);
        if !(n >= min_n) || !n.is_finite() {
            return Err(Error::Domain(format!(
                "gaussian offset n = {n} below minimum {min_n}"
            )));
        }
        Ok(InputProfile::Gaussian {
            peak,
            sigma: 1.0 / (peak * SQRT_2PI),
            offset: n,
        })
    }

    /// Builds a tabulated profile. Structural problems (too few or
    /// non-finite samples) fail here; physical invariants are checked by
    /// [`validate`](Self::validate).
    pub fn tabulated(samples: &[(f64, f64)]) -> Result<Self> {
        Ok(InputProfile::Tabulated(Arc::new(Table::new(samples)?)))
    }

    /// Reads a two-column `tau,r_in` CSV with a header row.
    pub fn load_table(path: impl AsRef<Path>) -> Result<Self> {
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
        let (ct, cr) = (col("tau")?, col("r_in")?);
        let mut samples = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |c: usize| -> Result<f64> {
                rec.get(c)
                    .unwrap_or("")
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{} row {}: {e}", path.display(), line + 2)))
            };
            samples.push((num(ct)?, num(cr)?));
        }
        Self::tabulated(&samples)
    }

    /// Samples this profile on `[0, end]` at step `h` into a table.
    pub fn to_table(&self, end: f64, h: f64) -> Result<Self> {
        let n = (end / h).ceil() as usize;
        let samples: Vec<(f64, f64)> = (0..=n)
            .map(|k| {
                let t = (k as f64 * h).min(end);
                (t, self.rate(t))
            })
            .collect();
        Self::tabulated(&samples)
    }

    pub fn family(&self) -> Family {
        match self {
            InputProfile::Exponential { .. } => Family::Exponential,
            InputProfile::Gaussian { .. } => Family::Gaussian,
            InputProfile::Tabulated(_) => Family::Tabulated,
        }
    }

    /// Peak (Gaussian) or initial (exponential) rate; table maximum otherwise.
    pub fn peak_rate(&self) -> f64 {
        match self {
            InputProfile::Exponential { rate } => *rate,
            InputProfile::Gaussian { peak, .. } => *peak,
            InputProfile::Tabulated(t) => t.rate.iter().copied().fold(0.0, f64::max),
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match self {
            InputProfile::Gaussian { sigma, .. } => Some(*sigma),
            _ => None,
        }
    }

    /// Peak time `τ₀ = nσ` of a Gaussian.
    pub fn centre(&self) -> Option<f64> {
        match self {
            InputProfile::Gaussian { sigma, offset, .. } => Some(offset * sigma),
            _ => None,
        }
    }

    /// `r_in(τ)` with no domain check; zero for `τ < 0`.
    pub fn rate(&self, tau: f64) -> f64 {
        if tau < 0.0 {
            return 0.0;
        }
        match self {
            InputProfile::Exponential { rate } => rate * (-rate * tau).exp(),
            InputProfile::Gaussian {
                peak,
                sigma,
                offset,
            } => {
                let u = (tau - offset * sigma) / sigma;
                peak * (-0.5 * u * u).exp()
            }
            InputProfile::Tabulated(t) => t.eval(tau).max(0.0),
        }
    }

    pub fn rate_at(&self, tau: f64) -> Result<f64> {
        if !(tau >= 0.0) {
            return Err(Error::Domain(format!("tau = {tau} is negative")));
        }
        Ok(self.rate(tau))
    }

    /// `√r_in(τ)`, the real input amplitude.
    pub fn amplitude(&self, tau: f64) -> f64 {
        match self {
            InputProfile::Exponential { rate } if tau >= 0.0 => {
                rate.sqrt() * (-0.5 * rate * tau).exp()
            }
            InputProfile::Gaussian {
                peak,
                sigma,
                offset,
            } if tau >= 0.0 => {
                let u = (tau - offset * sigma) / sigma;
                peak.sqrt() * (-0.25 * u * u).exp()
            }
            _ => self.rate(tau).sqrt(),
        }
    }

    /// Mass of the underlying pulse that falls before `τ = 0` and is never
    /// delivered (Gaussian truncation); `1 − ∫₀^∞ r_in` for tables.
    pub fn deficit(&self) -> f64 {
        match self {
            InputProfile::Exponential { .. } => 0.0,
            InputProfile::Gaussian { offset, .. } => 0.5 * erfc(offset / SQRT_2),
            InputProfile::Tabulated(t) => 1.0 - t.integral_to(f64::INFINITY),
        }
    }

    /// `∫_τ^∞ r_in`, in closed form.
    pub fn tail(&self, tau: f64) -> f64 {
        let tau = tau.max(0.0);
        match self {
            InputProfile::Exponential { rate } => (-rate * tau).exp(),
            InputProfile::Gaussian { sigma, offset, .. } => {
                0.5 * erfc((tau / sigma - offset) / SQRT_2)
            }
            InputProfile::Tabulated(t) => t.integral_to(f64::INFINITY) - t.integral_to(tau),
        }
    }

    /// `1 − ∫₀^τ r_in`: the source population `β₁²(τ)`.
    pub fn remaining(&self, tau: f64) -> f64 {
        self.tail(tau) + self.deficit()
    }

    /// Adaptive quadrature of `r_in` over `[0, tau_end]`; `tau_end` may be
    /// infinite.
    pub fn total_excitation(&self, tau_end: f64) -> Result<f64> {
        if !(tau_end >= 0.0) {
            return Err(Error::Domain(format!("tau_end = {tau_end} is negative")));
        }
        let end = if tau_end.is_infinite() {
            self.far_end()
        } else {
            tau_end
        };
        let tol = quad::Tolerance {
            abs: 1e-13,
            rel: 1e-13,
            max_panels: 20_000,
        };
        let mut breaks = Vec::new();
        if let Some(c) = self.centre() {
            breaks.push(c);
        }
        if let InputProfile::Tabulated(t) = self {
            breaks.extend(t.tau.iter().copied());
        }
        breaks.retain(|&b| b > 0.0 && b < end);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let mut lo = 0.0;
        let mut sum = 0.0;
        for b in breaks.into_iter().chain(std::iter::once(end)) {
            sum += quad::integrate(|s| self.rate(s), lo, b, tol).value;
            lo = b;
        }
        Ok(sum)
    }

    /// Far enough that the remaining mass is below double precision.
    fn far_end(&self) -> f64 {
        match self {
            InputProfile::Exponential { rate } => 80.0 / rate,
            InputProfile::Gaussian { sigma, offset, .. } => (offset + 40.0) * sigma,
            InputProfile::Tabulated(t) => t.last(),
        }
    }

    /// Search window for threshold and peak root finding.
    pub fn horizon(&self) -> f64 {
        match self {
            InputProfile::Exponential { rate } => 50.0 / rate,
            InputProfile::Gaussian { sigma, offset, .. } => (offset + 10.0) * sigma,
            InputProfile::Tabulated(t) => t.last(),
        }
    }

    /// Ascending grid on `[start, end]` fine enough to bracket every sign
    /// change of the stage dynamics: resolves the unit resonator timescale
    /// early on and the pulse timescale afterwards.
    pub fn scan_grid(&self, start: f64, end: f64) -> Vec<f64> {
        let mut grid = vec![start];
        match self {
            InputProfile::Tabulated(t) => {
                let mut pts: Vec<f64> = Vec::new();
                for w in t.tau.windows(2) {
                    pts.push(w[0]);
                    pts.push(0.5 * (w[0] + w[1]));
                }
                pts.push(t.last());
                let mut last = start;
                for p in pts.into_iter().filter(|&p| p > start && p < end) {
                    fill(&mut grid, last, p, 0.02);
                    last = p;
                }
                fill(&mut grid, last, end, 0.02);
            }
            _ => {
                let coarse = match self {
                    InputProfile::Exponential { rate } => (0.02 / rate).min(0.5),
                    InputProfile::Gaussian { sigma, .. } => (sigma / 25.0).min(0.5),
                    InputProfile::Tabulated(_) => unreachable!(),
                };
                let knee = 10.0_f64.clamp(start, end);
                let fine = coarse.min(0.02);
                fill(&mut grid, start, knee, fine);
                fill(&mut grid, knee, end, coarse);
            }
        }
        grid
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        match self {
            InputProfile::Exponential { rate } => {
                if !(*rate > 0.0) {
                    violations.push(Violation::Parameter(format!("rate {rate} not positive")));
                }
            }
            InputProfile::Gaussian { peak, offset, .. } => {
                if !(*peak > 0.0) {
                    violations.push(Violation::Parameter(format!("peak {peak} not positive")));
                }
                if *offset < MIN_GAUSS_OFFSET {
                    violations.push(Violation::Offset { n: *offset });
                }
            }
            InputProfile::Tabulated(t) => {
                if let Some(k) = t.tau.windows(2).position(|w| !(w[1] > w[0])) {
                    violations.push(Violation::Ordering { index: k + 1 });
                }
                if t.tau[0] < 0.0 {
                    violations.push(Violation::Parameter(format!(
                        "first sample at negative tau {}",
                        t.tau[0]
                    )));
                }
                if let Some((k, &r)) = t.rate.iter().enumerate().find(|(_, &r)| r < 0.0) {
                    violations.push(Violation::Nonnegativity { index: k, value: r });
                }
            }
        }
        if violations.is_empty() {
            let total = self.total_excitation(f64::INFINITY).unwrap_or(f64::NAN);
            let ok = match self {
                InputProfile::Gaussian { .. } => {
                    let deficit = self.deficit();
                    total <= 1.0 + 1e-9 && total >= 1.0 - deficit - 1e-9
                }
                _ => (total - 1.0).abs() <= 1e-6,
            };
            if !ok {
                violations.push(Violation::Normalization { total });
            }
        }
        ValidationReport { violations }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.passed() {
            Ok(())
        } else {
            Err(Error::InvalidProfile(report.to_string()))
        }
    }
}

fn fill(grid: &mut Vec<f64>, from: f64, to: f64, step: f64) {
    if to <= from {
        return;
    }
    let n = ((to - from) / step).ceil().max(1.0) as usize;
    for k in 1..=n {
        grid.push(from + (to - from) * k as f64 / n as f64);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Normalization { total: f64 },
    Nonnegativity { index: usize, value: f64 },
    Ordering { index: usize },
    Offset { n: f64 },
    Parameter(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Normalization { total } => {
                write!(f, "normalization: total excitation {total}")
            }
            Violation::Nonnegativity { index, value } => {
                write!(f, "nonnegativity: r[{index}] = {value}")
            }
            Violation::Ordering { index } => {
                write!(f, "ordering: tau[{index}] not strictly increasing")
            }
            Violation::Offset { n } => write!(f, "offset: n = {n} below 3"),
            Violation::Parameter(s) => write!(f, "parameter: {s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return write!(f, "pass");
        }
        write!(f, "fail: ")?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Parses `exp:r=0.036`, `gauss:r=0.1533,n=4` or `table:<path.csv>`.
impl FromStr for InputProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("profile literal `{s}` lacks a `kind:` prefix")))?;
        let params = |rest: &str| -> Result<Vec<(String, f64)>> {
            rest.split(',')
                .filter(|p| !p.trim().is_empty())
                .map(|p| {
                    let (k, v) = p
                        .split_once('=')
                        .ok_or_else(|| Error::Parse(format!("expected key=value, got `{p}`")))?;
                    let v: f64 = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad number `{v}`")))?;
                    Ok((k.trim().to_string(), v))
                })
                .collect()
        };
        match kind.trim() {
            "exp" => {
                let ps = params(rest)?;
                let r =
                    lookup(&ps, "r")?.ok_or_else(|| Error::Parse("exp profile needs r=".into()))?;
                reject_unknown(&ps, &["r"])?;
                InputProfile::exponential(r)
            }
            "gauss" => {
                let ps = params(rest)?;
                let r = lookup(&ps, "r")?
                    .ok_or_else(|| Error::Parse("gauss profile needs r=".into()))?;
                let n = lookup(&ps, "n")?.unwrap_or(DEFAULT_GAUSS_OFFSET);
                reject_unknown(&ps, &["r", "n"])?;
                InputProfile::gaussian(r, n)
            }
            "table" => InputProfile::load_table(rest.trim()),
            other => Err(Error::Parse(format!("unknown profile kind `{other}`"))),
        }
    }
}

fn lookup(ps: &[(String, f64)], key: &str) -> Result<Option<f64>> {
    let mut hits = ps.iter().filter(|(k, _)| k == key);
    let first = hits.next().map(|(_, v)| *v);
    if hits.next().is_some() {
        return Err(Error::Parse(format!("duplicate key `{key}`")));
    }
    Ok(first)
}

fn reject_unknown(ps: &[(String, f64)], known: &[&str]) -> Result<()> {
    match ps.iter().find(|(k, _)| !known.contains(&k.as_str())) {
        Some((k, _)) => Err(Error::Parse(format!("unknown key `{k}`"))),
        None => Ok(()),
    }
}
