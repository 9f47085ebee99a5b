//! Analytic transfer solutions for exponential and Gaussian inputs.
//!
//! Exponential inputs are fully closed-form. Gaussian inputs reduce to erf
//! expressions whose threshold and peak conditions are transcendental and
//! solved by bracketed root finding; every Gaussian quantity is assembled
//! in log space.

use crate::error::{Error, Result};
use crate::profiles::InputProfile;
use crate::roots::{brent, first_downward_crossing};
use crate::special::{ln_add_exp, ln_gaussian_segment};

/// `(e^x − 1)/x`, continuous at 0.
fn expm1_over(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + 0.5 * x
    } else {
        x.exp_m1() / x
    }
}

/// `−ln(1 − d/2)·2/d`, continuous at `d = 0` where it equals 1.
fn log_ratio(d: f64) -> f64 {
    if d.abs() < 1e-5 {
        1.0 + d / 4.0 + d * d / 12.0 + d * d * d / 32.0
    } else {
        -2.0 * (-0.5 * d).ln_1p() / d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpConstants {
    pub r: f64,
    pub kappa_i: f64,
    /// Infinite when `r = κ_i`.
    pub a1: f64,
    /// `r/(r − κ_i)`; infinite when `r = κ_i`.
    pub a2: f64,
    pub tau_c: f64,
}

/// Threshold time and population constants for `r_in = r·e^{−rτ}`.
pub fn exp_constants(r: f64, kappa_i: f64) -> Result<ExpConstants> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Domain(format!(
            "exponential rate r = {r} outside (0, 1]"
        )));
    }
    if !(0.0..1.0).contains(&kappa_i) {
        return Err(Error::Domain(format!("kappa_i = {kappa_i} outside [0, 1)")));
    }
    let d = 1.0 + kappa_i - r;
    // 2/d · ln(2/(2 − d)), finite as d → 0
    let tau_c = log_ratio(d);
    let (a1, a2) = if r == kappa_i {
        (f64::INFINITY, f64::INFINITY)
    } else {
        let a2 = r / (r - kappa_i);
        let a1 =
            4.0 * r / ((2.0 - d) * (2.0 - d)) * (-tau_c).exp() + a2 * ((kappa_i - r) * tau_c).exp();
        (a1, a2)
    };
    Ok(ExpConstants {
        r,
        kappa_i,
        a1,
        a2,
        tau_c,
    })
}

impl ExpConstants {
    /// `β²(τ)` across both stages.
    pub fn population(&self, tau: f64) -> f64 {
        let (r, ki) = (self.r, self.kappa_i);
        if tau <= 0.0 {
            return 0.0;
        }
        if tau < self.tau_c {
            // 4r/d²·(e^{−rτ/2} − e^{−(1+κ_i)τ/2})², rewritten to survive d → 0
            let d = 1.0 + ki - r;
            let phi = -(-0.5 * d * tau).exp_m1() / (0.5 * d * tau);
            let phi = if (0.5 * d * tau).abs() < 1e-12 {
                1.0
            } else {
                phi
            };
            r * tau * tau * (-r * tau).exp() * phi * phi
        } else {
            // A1 e^{−κ_i τ} − A2 e^{−rτ}, written so that r → κ_i stays finite
            let dt = tau - self.tau_c;
            r * ((ki - r) * self.tau_c - ki * tau).exp() * (1.0 + dt * expm1_over((ki - r) * dt))
        }
    }

    /// Optimal coupling for `τ ≥ τ_c`: `r·(A1 e^{(r−κ_i)τ} − A2)^{−1}`.
    pub fn coupling(&self, tau: f64) -> Result<f64> {
        if tau < self.tau_c {
            return Ok(1.0);
        }
        let (r, ki) = (self.r, self.kappa_i);
        let dt = tau - self.tau_c;
        // denominator scaled by e^{−(r−κ_i)(τ−τ_c)}/r relative to the A1/A2 form
        let den = 1.0 + dt * expm1_over((ki - r) * dt);
        if !(den > 0.0) {
            return Err(Error::SingularCoupling {
                tau,
                denominator: den,
            });
        }
        Ok((-(r - ki) * dt).exp() / den)
    }

    /// `(τ_max, F)`; `(∞, A1)` in the lossless case.
    pub fn report(&self) -> Result<(f64, f64)> {
        let (r, ki) = (self.r, self.kappa_i);
        if ki == 0.0 {
            return Ok((f64::INFINITY, self.a1));
        }
        if ki >= r {
            return Err(Error::Domain(format!(
                "peak formula needs kappa_i < r (kappa_i = {ki}, r = {r}); use the generic solver"
            )));
        }
        let ratio = r * self.a2 / (ki * self.a1);
        let tau_max = ratio.ln() / (r - ki);
        let f =
            (ki * self.a1 / (r * self.a2)).powf(1.0 / (1.0 - ki / r)) * self.a2 * (r / ki - 1.0);
        Ok((tau_max, f))
    }
}

pub fn exp_population(r: f64, kappa_i: f64, tau: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::Domain(format!("tau = {tau} is negative")));
    }
    Ok(exp_constants(r, kappa_i)?.population(tau))
}

pub fn exp_coupling(r: f64, kappa_i: f64, tau: f64) -> Result<f64> {
    let c = exp_constants(r, kappa_i)?;
    if tau < c.tau_c {
        return Err(Error::Domain(format!(
            "tau = {tau} precedes the threshold {}",
            c.tau_c
        )));
    }
    c.coupling(tau)
}

pub fn exp_report(r: f64, kappa_i: f64) -> Result<(f64, f64)> {
    exp_constants(r, kappa_i)?.report()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussConstants {
    /// `(1 + κ_i)/2`.
    pub a: f64,
    /// `1/(4σ²)`.
    pub b: f64,
    pub tau0: f64,
    pub tau_c: f64,
    pub sigma: f64,
}

impl GaussConstants {
    fn peak(&self) -> f64 {
        2.0 * self.b.sqrt() / (2.0 * std::f64::consts::PI).sqrt()
    }

    fn kappa_i(&self) -> f64 {
        2.0 * self.a - 1.0
    }

    /// `ln ∫₀^τ e^{as − b(s−τ₀)²} ds` (erf closed form).
    fn ln_stage1_integral(a: f64, b: f64, tau0: f64, tau: f64) -> f64 {
        a * tau0 + a * a / (4.0 * b) + ln_gaussian_segment(b, a / (2.0 * b), -tau0, tau - tau0)
    }

    /// `ln ∫_{τ_c}^τ e^{ks − 2b(s−τ₀)²} ds` with `k = 2a − 1`.
    fn ln_stage2_integral(&self, tau: f64) -> f64 {
        let k = self.kappa_i();
        let b2 = 2.0 * self.b;
        k * self.tau0
            + k * k / (4.0 * b2)
            + ln_gaussian_segment(b2, k / (2.0 * b2), self.tau_c - self.tau0, tau - self.tau0)
    }

    /// `ln(e^{kτ_c − 2b(τ_c−τ₀)²} + ∫_{τ_c}^τ …)`, the bracket of the
    /// stage-2 population.
    fn ln_stage2_bracket(&self, tau: f64) -> f64 {
        let k = self.kappa_i();
        let seed = k * self.tau_c - 2.0 * self.b * (self.tau_c - self.tau0).powi(2);
        if tau <= self.tau_c {
            seed
        } else {
            ln_add_exp(seed, self.ln_stage2_integral(tau))
        }
    }

    pub fn population(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        let ln_peak = self.peak().ln();
        if tau < self.tau_c {
            (ln_peak - 2.0 * self.a * tau
                + 2.0 * Self::ln_stage1_integral(self.a, self.b, self.tau0, tau))
            .exp()
        } else {
            (ln_peak - self.kappa_i() * tau + self.ln_stage2_bracket(tau)).exp()
        }
    }

    /// `κ(τ) = e^{kτ − 2b(τ−τ₀)²}/(bracket)` for `τ ≥ τ_c`, 1 before.
    pub fn coupling(&self, tau: f64) -> f64 {
        if tau < self.tau_c {
            return 1.0;
        }
        let k = self.kappa_i();
        (k * tau - 2.0 * self.b * (tau - self.tau0).powi(2) - self.ln_stage2_bracket(tau)).exp()
    }

    /// Population reached as `τ → ∞` (meaningful for κ_i = 0).
    pub fn asymptotic_population(&self) -> f64 {
        self.population(f64::INFINITY.min(self.tau0 + 60.0 * self.sigma))
            .max(if self.kappa_i() == 0.0 {
                (self.peak().ln() + self.ln_stage2_bracket(f64::INFINITY)).exp()
            } else {
                0.0
            })
    }

    pub fn report(&self) -> Result<(f64, f64)> {
        let k = self.kappa_i();
        if k == 0.0 {
            return Ok((f64::INFINITY, self.asymptotic_population()));
        }
        // ln r_in − ln(κ_i β²), the peak condition with the common prefactor dropped
        let q = |t: f64| {
            k * t - 2.0 * self.b * (t - self.tau0).powi(2) - k.ln() - self.ln_stage2_bracket(t)
        };
        let horizon = self.tau0 + 10.0 * self.sigma;
        let start = self.tau_c.max(self.tau0);
        let (lo, hi) = if q(start) > 0.0 {
            first_downward_crossing(q, gauss_grid(self.sigma, self.tau0, start, horizon))
        } else {
            first_downward_crossing(q, gauss_grid(self.sigma, self.tau0, self.tau_c, horizon))
        }
        .ok_or(Error::NoPeak { horizon })?;
        let tau_max = brent(q, lo, hi, 1e-12)?;
        Ok((tau_max, self.population(tau_max)))
    }
}

fn gauss_grid(sigma: f64, n: f64, start: f64, end: f64) -> Vec<f64> {
    let shape = InputProfile::Gaussian {
        peak: 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt()),
        sigma,
        offset: n,
    };
    shape.scan_grid(start, end)
}

pub fn gauss_constants(sigma: f64, n: f64, kappa_i: f64) -> Result<GaussConstants> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("sigma = {sigma} not positive")));
    }
    if !(n >= 3.0) {
        return Err(Error::Domain(format!("offset n = {n} below 3")));
    }
    if !(0.0..1.0).contains(&kappa_i) {
        return Err(Error::Domain(format!("kappa_i = {kappa_i} outside [0, 1)")));
    }
    let a = 0.5 * (1.0 + kappa_i);
    let b = 1.0 / (4.0 * sigma * sigma);
    let tau0 = n * sigma;
    // ln of both sides of e^{aτ − b(τ−τ₀)²} = ∫₀^τ e^{as − b(s−τ₀)²} ds
    let h =
        |t: f64| a * t - b * (t - tau0).powi(2) - GaussConstants::ln_stage1_integral(a, b, tau0, t);
    let horizon = tau0 + 10.0 * sigma;
    let grid = gauss_grid(sigma, n, 0.0, horizon);
    let (lo, hi) = first_downward_crossing(|t| if t == 0.0 { f64::INFINITY } else { h(t) }, grid)
        .ok_or(Error::NoThreshold {
        start: 0.0,
        horizon,
    })?;
    let tau_c = brent(h, lo, hi, 1e-14)?;
    Ok(GaussConstants {
        a,
        b,
        tau0,
        tau_c,
        sigma,
    })
}

pub fn gauss_population(sigma: f64, n: f64, kappa_i: f64, tau: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::Domain(format!("tau = {tau} is negative")));
    }
    Ok(gauss_constants(sigma, n, kappa_i)?.population(tau))
}

pub fn gauss_report(sigma: f64, n: f64, kappa_i: f64) -> Result<(f64, f64)> {
    gauss_constants(sigma, n, kappa_i)?.report()
}

/// `σ = 1/(r√(2π))`.
pub fn sigma_from_peak(r: f64) -> f64 {
    1.0 / (r * (2.0 * std::f64::consts::PI).sqrt())
}
