//! Fidelity over the (intrinsic loss, input rate) plane, and the
//! loss-dependent optimal input rate.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::closedform::{exp_constants, gauss_constants, sigma_from_peak};
use crate::error::{Error, Result};
use crate::io::{fmt_num, write_atomic};
use crate::profiles::{InputProfile, MemoryParams, DEFAULT_GAUSS_OFFSET};
use crate::protocol::transfer;
use crate::roots::golden_max;

/// Scanned range of the input rate.
pub const R_RANGE: (f64, f64) = (0.05, 1.0);
/// Scanned range of the intrinsic loss.
pub const KAPPA_I_RANGE: (f64, f64) = (1e-5, 1e-2);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepFamily {
    Exponential,
    /// Gaussian with offset `τ₀ = nσ`.
    Gaussian {
        n: f64,
    },
}

impl SweepFamily {
    /// Reference operating point for each family, added to the default `r` grid.
    pub fn operating_rate(&self) -> f64 {
        match self {
            SweepFamily::Exponential => 0.036,
            SweepFamily::Gaussian { .. } => 0.1533,
        }
    }

    pub fn profile(&self, r: f64) -> Result<InputProfile> {
        match *self {
            SweepFamily::Exponential => InputProfile::exponential(r),
            SweepFamily::Gaussian { n } => InputProfile::gaussian_with_min_offset(r, n, 3.0),
        }
    }
}

impl fmt::Display for SweepFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepFamily::Exponential => write!(f, "exp"),
            SweepFamily::Gaussian { .. } => write!(f, "gauss"),
        }
    }
}

impl FromStr for SweepFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" => Ok(SweepFamily::Exponential),
            "gauss" => Ok(SweepFamily::Gaussian {
                n: DEFAULT_GAUSS_OFFSET,
            }),
            other => Err(Error::Parse(format!(
                "unknown sweep family `{other}` (expected exp or gauss)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    ClosedForm,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellResult {
    pub fidelity: f64,
    pub tau_c: f64,
    pub tau_max: f64,
    pub solver: Solver,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub kappa_i: f64,
    pub r: f64,
    /// Per-cell failures are kept rather than aborting the sweep.
    pub result: std::result::Result<CellResult, String>,
}

impl Cell {
    pub fn fidelity(&self) -> f64 {
        self.result.as_ref().map_or(f64::NAN, |c| c.fidelity)
    }
}

/// Evaluates one cell, preferring the closed forms.
pub fn evaluate_cell(
    family: SweepFamily,
    kappa_i: f64,
    r: f64,
    solver: Solver,
) -> Result<CellResult> {
    MemoryParams::new(kappa_i)?;
    let generic = || -> Result<CellResult> {
        let p = family.profile(r)?;
        let (_, rep) = transfer(&p, &MemoryParams::new(kappa_i)?)?;
        Ok(CellResult {
            fidelity: rep.fidelity,
            tau_c: rep.tau_c,
            tau_max: rep.tau_max,
            solver: Solver::Generic,
        })
    };
    if solver == Solver::Generic {
        return generic();
    }
    match family {
        // the peak formula needs κ_i < r
        SweepFamily::Exponential if kappa_i < r && r <= 1.0 => {
            let c = exp_constants(r, kappa_i)?;
            let (tau_max, fidelity) = c.report()?;
            Ok(CellResult {
                fidelity,
                tau_c: c.tau_c,
                tau_max,
                solver: Solver::ClosedForm,
            })
        }
        SweepFamily::Gaussian { n } => {
            let c = gauss_constants(sigma_from_peak(r), n, kappa_i)?;
            let (tau_max, fidelity) = c.report()?;
            Ok(CellResult {
                fidelity,
                tau_c: c.tau_c,
                tau_max,
                solver: Solver::ClosedForm,
            })
        }
        _ => generic(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub family: SweepFamily,
    pub kappa_i: Vec<f64>,
    pub r: Vec<f64>,
    /// Row-major over `(κ_i, r)`.
    pub cells: Vec<Cell>,
}

/// `n` log-spaced values; exact decades are hit exactly.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|k| {
            let e = if n == 1 {
                a
            } else {
                a + (b - a) * k as f64 / (n - 1) as f64
            };
            if (e - e.round()).abs() < 1e-12 {
                format!("1e{}", e.round() as i64).parse().unwrap()
            } else {
                10f64.powf(e)
            }
        })
        .collect()
}

pub fn lin_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| {
            if k == n - 1 {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            }
        })
        .collect()
}

pub fn default_kappa_i_grid() -> Vec<f64> {
    log_space(KAPPA_I_RANGE.0, KAPPA_I_RANGE.1, 25)
}

/// 40 linear points on the scanned range plus the family's operating point.
pub fn default_r_grid(family: SweepFamily) -> Vec<f64> {
    let mut r = lin_space(R_RANGE.0, R_RANGE.1, 40);
    r.push(family.operating_rate());
    r.sort_by(f64::total_cmp);
    r.dedup();
    r
}

/// Parses `lo:hi:n` (linear, or logarithmic with `log:lo:hi:n`) or a
/// comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |m: &str| Error::Parse(format!("grid `{spec}`: {m}"));
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| bad(&format!("bad number `{s}`")))
    };
    let (log, body) = match spec.strip_prefix("log:") {
        Some(rest) => (true, rest),
        None => (false, spec),
    };
    let parts: Vec<&str> = body.split(':').collect();
    let values = match parts.as_slice() {
        [lo, hi, n] => {
            let (lo, hi) = (num(lo)?, num(hi)?);
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| bad("count must be a positive integer"))?;
            if n == 0 || !(hi >= lo) {
                return Err(bad("need lo <= hi and n >= 1"));
            }
            if log {
                if !(lo > 0.0) {
                    return Err(bad("log grid needs lo > 0"));
                }
                log_space(lo, hi, n)
            } else {
                lin_space(lo, hi, n)
            }
        }
        [list] if !log => list.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => return Err(bad("expected lo:hi:n, log:lo:hi:n or a comma list")),
    };
    if values.is_empty() || values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(bad("values must be strictly ascending"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bad("values must be finite"));
    }
    Ok(values)
}

/// Fills the grid in parallel. Each cell is a pure function of its
/// coordinates and results are placed by index, so the output does not
/// depend on scheduling.
pub fn fidelity_surface(family: SweepFamily, kappa_i: &[f64], r: &[f64]) -> Result<SweepGrid> {
    fidelity_surface_with(family, kappa_i, r, Solver::ClosedForm)
}

pub fn fidelity_surface_with(
    family: SweepFamily,
    kappa_i: &[f64],
    r: &[f64],
    solver: Solver,
) -> Result<SweepGrid> {
    for (name, g) in [("kappa_i", kappa_i), ("r", r)] {
        if g.is_empty() || g.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(format!(
                "{name} grid must be non-empty and strictly ascending"
            )));
        }
    }
    let cols = r.len();
    let cells = (0..kappa_i.len() * cols)
        .into_par_iter()
        .map(|idx| {
            let (ki, rr) = (kappa_i[idx / cols], r[idx % cols]);
            Cell {
                kappa_i: ki,
                r: rr,
                result: evaluate_cell(family, ki, rr, solver).map_err(|e| e.to_string()),
            }
        })
        .collect();
    Ok(SweepGrid {
        family,
        kappa_i: kappa_i.to_vec(),
        r: r.to_vec(),
        cells,
    })
}

impl SweepGrid {
    pub fn cell(&self, i: usize, j: usize) -> &Cell {
        &self.cells[i * self.r.len() + j]
    }

    pub fn row(&self, i: usize) -> &[Cell] {
        &self.cells[i * self.r.len()..(i + 1) * self.r.len()]
    }

    /// Grid values outside the scanned ranges.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        for &k in &self.kappa_i {
            if !(k > 0.0 && k <= KAPPA_I_RANGE.1) {
                w.push(format!("kappa_i = {k} outside (0, {}]", KAPPA_I_RANGE.1));
            }
        }
        for &r in &self.r {
            if !(R_RANGE.0..=R_RANGE.1).contains(&r) {
                w.push(format!("r = {r} outside [{}, {}]", R_RANGE.0, R_RANGE.1));
            }
        }
        w
    }

    /// `(i, j)` cells where `F` increases when `κ_i` steps up from row
    /// `i − 1` to row `i`.
    pub fn loss_monotonicity_violations(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 1..self.kappa_i.len() {
            for j in 0..self.r.len() {
                let (a, b) = (self.cell(i - 1, j).fidelity(), self.cell(i, j).fidelity());
                if b > a {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Column of the largest fidelity in row `i`.
    pub fn row_argmax(&self, i: usize) -> usize {
        let row = self.row(i);
        (0..row.len()).fold(0, |best, j| {
            if row[j].fidelity() > row[best].fidelity() {
                j
            } else {
                best
            }
        })
    }

    /// Exactly one local maximum, and it is not at either end of the row.
    pub fn row_has_single_interior_max(&self, i: usize) -> bool {
        let f: Vec<f64> = self.row(i).iter().map(Cell::fidelity).collect();
        let n = f.len();
        if n < 3 {
            return false;
        }
        let peaks = (0..n)
            .filter(|&j| (j == 0 || f[j] > f[j - 1]) && (j == n - 1 || f[j] >= f[j + 1]))
            .count();
        let j = self.row_argmax(i);
        peaks == 1 && j > 0 && j < n - 1
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("kappa_i,r,fidelity,tau_c,tau_max\n");
        for c in &self.cells {
            let (f, tc, tm) = match &c.result {
                Ok(x) => (x.fidelity, x.tau_c, x.tau_max),
                Err(_) => (f64::NAN, f64::NAN, f64::NAN),
            };
            let row = [c.kappa_i, c.r, f, tc, tm].map(fmt_num).join(",");
            out.push_str(&row);
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalRate {
    pub r: f64,
    pub fidelity: f64,
    /// The maximiser sits on an edge of `[0.05, 1]`: the true optimum is
    /// outside the searched range.
    pub at_boundary: bool,
}

/// Golden-section maximisation of `F(r)` over the plotted rate range.
pub fn optimal_rate(family: SweepFamily, kappa_i: f64) -> Result<OptimalRate> {
    if !(kappa_i > 0.0 && kappa_i <= KAPPA_I_RANGE.1) {
        return Err(Error::Domain(format!(
            "kappa_i = {kappa_i} outside (0, {}]",
            KAPPA_I_RANGE.1
        )));
    }
    let (lo, hi) = R_RANGE;
    let xtol = 1e-4;
    let f = |r: f64| {
        evaluate_cell(family, kappa_i, r, Solver::ClosedForm)
            .map_or(f64::NEG_INFINITY, |c| c.fidelity)
    };
    let (r, fidelity) = golden_max(f, lo, hi, xtol);
    let at_boundary = r - lo < xtol || hi - r < xtol;
    Ok(OptimalRate {
        r,
        fidelity,
        at_boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAUSS: SweepFamily = SweepFamily::Gaussian { n: 4.0 };

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0.1,0.2,0.5").unwrap(), vec![0.1, 0.2, 0.5]);
        assert_eq!(parse_grid("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        let g = parse_grid("log:1e-5:1e-2:4").unwrap();
        assert_eq!(g, vec![1e-5, 1e-4, 1e-3, 1e-2]);
        for bad in ["", "1:0:3", "0:1:0", "a,b", "0.2,0.1", "1:2", "log:0:1:3"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn default_grids_hold_operating_points() {
        let k = default_kappa_i_grid();
        assert_eq!(k.len(), 25);
        assert!(k.contains(&1e-4) && k.contains(&1e-5) && k.contains(&1e-2) && k.contains(&1e-3));
        assert!(default_r_grid(SweepFamily::Exponential).contains(&0.036));
        assert!(default_r_grid(GAUSS).contains(&0.1533));
        assert_eq!(default_r_grid(GAUSS).len(), 41);
    }

    #[test]
    fn operating_cells() {
        let g = fidelity_surface(SweepFamily::Exponential, &[1e-4], &[0.036]).unwrap();
        assert!((g.cells[0].fidelity() - 0.97).abs() < 0.005);
        let g = fidelity_surface(GAUSS, &[1e-4], &[0.1533]).unwrap();
        assert!((g.cells[0].fidelity() - 0.9987).abs() < 0.0005);
    }

    #[test]
    fn lossless_row_is_a1() {
        let r = [0.05, 0.3, 0.9];
        let g = fidelity_surface(SweepFamily::Exponential, &[0.0], &r).unwrap();
        for (c, &rr) in g.cells.iter().zip(&r) {
            assert_eq!(c.fidelity(), exp_constants(rr, 0.0).unwrap().a1);
        }
    }

    #[test]
    fn errors_stay_in_cells() {
        let g = fidelity_surface(SweepFamily::Exponential, &[1e-4, 2.0], &[0.1]).unwrap();
        assert!(g.cells[0].result.is_ok());
        assert!(g.cells[1].result.is_err());
        assert!(g.to_csv().lines().nth(2).unwrap().contains("nan"));
    }

    #[test]
    fn parallel_sweep_is_deterministic() {
        let k = log_space(1e-5, 1e-2, 5);
        let r = lin_space(0.05, 1.0, 7);
        let a = fidelity_surface(GAUSS, &k, &r).unwrap().to_csv();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| fidelity_surface(GAUSS, &k, &r).unwrap().to_csv());
        assert_eq!(a, b);
    }

    #[test]
    fn optimal_rate_examples() {
        let lo = optimal_rate(SweepFamily::Exponential, 1e-5).unwrap();
        let hi = optimal_rate(SweepFamily::Exponential, 1e-3).unwrap();
        assert!(hi.r > lo.r);
        assert!((hi.r - 0.1006).abs() < 5e-4 && !hi.at_boundary);
        let g = optimal_rate(GAUSS, 1e-4).unwrap();
        assert!(g.fidelity >= 0.9987 && !g.at_boundary);
        // below κ_i ≈ 2.07e-4 the exponential optimum lies under r = 0.05
        assert!(
            optimal_rate(SweepFamily::Exponential, 1e-4)
                .unwrap()
                .at_boundary
        );
        assert!(optimal_rate(SweepFamily::Exponential, 0.0).is_err());
    }

    #[test]
    fn csv_layout() {
        let g = fidelity_surface(SweepFamily::Exponential, &[0.0, 1e-3], &[0.1, 0.2]).unwrap();
        let text = g.to_csv();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "kappa_i,r,fidelity,tau_c,tau_max");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].ends_with(",inf"));
        assert!(lines[3].starts_with("1.0000000000000000e-3,1.0000000000000001e-1"));
    }
}
