//! Coupling that nulls the output of a classically driven resonator.
//!
//! For a real input amplitude `A_in`, the stored amplitude obeys
//! `2AȦ = A_in²` once the output `A_in + √κ·A` vanishes, so
//! `A²(τ) = A²(τ_i) + ∫_{τ_i}^τ A_in²` and `κ = A_in²/A²`. For a single
//! excitation and no intrinsic loss this coincides with the quantum
//! zero-reflection schedule.

use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::profiles::{InputProfile, MemoryParams};
use crate::protocol::{build_schedule, CouplingSchedule};

/// Classical drive `A_in = √r_in` with stored intensity `seed` at `tau_i`.
#[derive(Debug, Clone)]
pub struct ClassicalField {
    input: InputProfile,
    tau_i: f64,
    seed: f64,
}

impl ClassicalField {
    /// Seeds the memory with `A_in²(τ_i)`.
    pub fn new(input: &InputProfile, tau_i: f64) -> Result<Self> {
        Self::with_seed(input, tau_i, input.rate(tau_i))
    }

    pub fn with_seed(input: &InputProfile, tau_i: f64, seed: f64) -> Result<Self> {
        if !(tau_i >= 0.0 && tau_i.is_finite()) {
            return Err(Error::Domain(format!(
                "tau_i = {tau_i} must be finite and non-negative"
            )));
        }
        if !(seed >= 0.0 && seed.is_finite()) {
            return Err(Error::Domain(format!(
                "seed intensity {seed} must be finite and non-negative"
            )));
        }
        Ok(ClassicalField {
            input: input.clone(),
            tau_i,
            seed,
        })
    }

    pub fn tau_i(&self) -> f64 {
        self.tau_i
    }

    pub fn seed(&self) -> f64 {
        self.seed
    }

    /// `A_in(τ) ≥ 0`.
    pub fn input_amplitude(&self, tau: f64) -> f64 {
        self.input.amplitude(tau)
    }

    fn check(&self, tau: f64) -> Result<()> {
        if !(tau >= self.tau_i) {
            return Err(Error::Domain(format!(
                "tau = {tau} precedes tau_i = {}",
                self.tau_i
            )));
        }
        Ok(())
    }
}

/// `A²(τ) = A²(τ_i) + ∫_{τ_i}^τ A_in²`.
pub fn semiclassical_population(field: &ClassicalField, tau: f64) -> Result<f64> {
    field.check(tau)?;
    // closed-form (built-ins) or exact Hermite (tables) running integral
    let absorbed = field.input.tail(field.tau_i) - field.input.tail(tau);
    Ok(field.seed + absorbed.max(0.0))
}

/// `κ(τ) = A_in²(τ)/A²(τ)`.
pub fn semiclassical_coupling(field: &ClassicalField, tau: f64) -> Result<f64> {
    let den = semiclassical_population(field, tau)?;
    let num = field.input.rate(tau);
    if den == 0.0 {
        if num == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::ZeroDenominator(tau));
    }
    Ok(num / den)
}

/// Output amplitude `A_in + √κ·A` with `A = −√(A²)`; zero along the
/// optimal schedule.
pub fn semiclassical_output(field: &ClassicalField, tau: f64) -> Result<f64> {
    let k = semiclassical_coupling(field, tau)?;
    let a = -semiclassical_population(field, tau)?.sqrt();
    Ok(field.input_amplitude(tau) + k.sqrt() * a)
}

/// Largest relative gap between the quantum (`κ_i = 0`) and semiclassical
/// couplings on `[τ_c, horizon]`, seeding the classical memory with the
/// quantum `β²(τ_c)`.
pub fn compare_with_full_quantum(profile: &InputProfile) -> Result<f64> {
    let schedule = build_schedule(profile, &MemoryParams::new(0.0)?)?;
    compare_coupling(&schedule, &schedule)
}

/// Largest relative gap between `coupling` and the semiclassical law seeded
/// from a lossless `schedule` at its threshold.
pub fn compare_coupling(schedule: &CouplingSchedule, coupling: &dyn Coupling) -> Result<f64> {
    let profile = schedule.profile();
    let tau_c = schedule.tau_c();
    let field = ClassicalField::with_seed(profile, tau_c, schedule.population(tau_c))?;
    let mut worst = 0.0f64;
    for tau in profile.scan_grid(tau_c, schedule.horizon()) {
        let kq = coupling.kappa(tau);
        let ksc = semiclassical_coupling(&field, tau)?;
        if kq == 0.0 && ksc == 0.0 {
            continue;
        }
        worst = worst.max((kq - ksc).abs() / kq.abs().max(ksc.abs()));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(r: f64, end: f64) -> InputProfile {
        InputProfile::tabulated(&[(0.0, r), (end / 2.0, r), (end, r)]).unwrap()
    }

    #[test]
    fn zero_input_gives_zero_coupling() {
        let silent = InputProfile::tabulated(&[(0.0, 0.0), (5.0, 0.0)]).unwrap();
        let f = ClassicalField::with_seed(&silent, 0.0, 0.3).unwrap();
        for &t in &[0.0, 1.0, 4.0] {
            assert_eq!(semiclassical_coupling(&f, t).unwrap(), 0.0);
        }
        let empty = ClassicalField::with_seed(&silent, 0.0, 0.0).unwrap();
        assert_eq!(semiclassical_coupling(&empty, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_denominator_is_an_error() {
        let late =
            InputProfile::tabulated(&[(0.0, 0.0), (1.0, 0.0), (2.0, 1.0), (3.0, 0.0)]).unwrap();
        let f = ClassicalField::with_seed(&late, 0.0, 0.0).unwrap();
        assert!(matches!(semiclassical_coupling(&f, 0.0), Ok(0.0)));
        let g = ClassicalField::with_seed(&late, 2.0, 0.0).unwrap();
        assert!(matches!(
            semiclassical_coupling(&g, 2.0),
            Err(Error::ZeroDenominator(_))
        ));
    }

    #[test]
    fn constant_drive_by_hand() {
        let r = 0.25;
        let f = ClassicalField::new(&constant(r, 10.0), 0.0).unwrap();
        for &t in &[0.0, 0.5, 1.0, 3.7] {
            let k = semiclassical_coupling(&f, t).unwrap();
            assert!((k - 1.0 / (1.0 + t)).abs() < 1e-14, "t={t}");
        }
        assert!((semiclassical_population(&f, 1.0).unwrap() - (r + r)).abs() < 1e-15);
        assert_eq!(semiclassical_population(&f, 0.0).unwrap(), r);
        assert!(semiclassical_population(&f, -1.0).is_err());
    }

    #[test]
    fn output_vanishes() {
        let p = InputProfile::gaussian(0.3, 4.0).unwrap();
        let f = ClassicalField::new(&p, 3.0).unwrap();
        for k in 0..200 {
            let t = 3.0 + k as f64 * 0.1;
            assert!(semiclassical_output(&f, t).unwrap().abs() <= 1e-9);
        }
    }

    #[test]
    fn lossless_exponential_limit() {
        let p = InputProfile::exponential(0.036).unwrap();
        let tau_c = 1.364_688_872_868_576_9;
        let f = ClassicalField::new(&p, tau_c).unwrap();
        let far = semiclassical_population(&f, 5000.0).unwrap();
        assert!((far - (p.rate(tau_c) + p.tail(tau_c))).abs() < 1e-15);
    }

    #[test]
    fn matches_quantum_schedule() {
        for p in [
            InputProfile::exponential(0.036).unwrap(),
            InputProfile::gaussian(0.1533, 4.0).unwrap(),
        ] {
            let d = compare_with_full_quantum(&p).unwrap();
            assert!(d <= 1e-9, "{p:?}: {d:e}");
        }
        let table = InputProfile::exponential(0.036)
            .unwrap()
            .to_table(1400.0, 0.01 / 0.036)
            .unwrap();
        assert!(compare_with_full_quantum(&table).unwrap() <= 1e-6);
    }
}
