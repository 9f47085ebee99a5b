//! Error-function helpers evaluated in log space.
//!
//! The Gaussian-input formulas multiply `exp(large)` by differences of erf
//! values that cancel; everything here returns logarithms so callers can
//! combine terms without overflow.

pub use libm::{erf, erfc};

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// `ln(erfc(x))`, valid far into the tail where `erfc` underflows.
pub fn ln_erfc(x: f64) -> f64 {
    if x < 25.0 {
        erfc(x).ln()
    } else {
        // asymptotic series; the first omitted term is below 1e-18 here
        let z2 = x * x;
        let inv = 1.0 / (2.0 * z2);
        let series = 1.0 - inv + 3.0 * inv * inv - 15.0 * inv * inv * inv + 105.0 * inv.powi(4);
        -z2 - (x * SQRT_PI).ln() + series.ln()
    }
}

/// `ln(1 - exp(x))` for `x < 0`.
pub fn ln_one_minus_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `ln(exp(a) + exp(b))`.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(erf(hi) - erf(lo))` for `lo <= hi`, accurate when both arguments sit
/// in the same tail.
pub fn ln_erf_diff(lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return f64::NEG_INFINITY;
    }
    if lo >= 0.0 {
        // erfc(lo) - erfc(hi)
        let a = ln_erfc(lo);
        let b = ln_erfc(hi);
        a + ln_one_minus_exp(b - a)
    } else if hi <= 0.0 {
        ln_erf_diff(-hi, -lo)
    } else {
        (erf(hi) - erf(lo)).ln()
    }
}

/// `ln ∫_lo^hi exp(-alpha·(u - centre)²) du` for `alpha > 0`.
pub fn ln_gaussian_segment(alpha: f64, centre: f64, lo: f64, hi: f64) -> f64 {
    let s = alpha.sqrt();
    (SQRT_PI / (2.0 * s)).ln() + ln_erf_diff(s * (lo - centre), s * (hi - centre))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_reference_values() {
        // mpmath, 30 digits
        assert!((erf(0.5) - 0.520_499_877_813_046_5).abs() < 1e-15);
        assert!((erf(2.0) - 0.995_322_265_018_952_7).abs() < 1e-15);
        assert!((erfc(4.0 / 2f64.sqrt()) - 6.334_248_366_623_996e-5).abs() < 1e-18);
    }

    #[test]
    fn ln_erfc_matches_direct_and_asymptotic() {
        for &x in &[-3.0, 0.0, 1.0, 5.0, 20.0, 24.9] {
            assert!((ln_erfc(x) - erfc(x).ln()).abs() < 1e-12 * erfc(x).ln().abs().max(1.0));
        }
        // continuity across the switch
        let direct = erfc(25.0).ln();
        let series = ln_erfc(25.0);
        assert!((direct - series).abs() < 1e-10 * direct.abs());
        // far tail: erfc(30) = 2.5646562037561116e-393 (mpmath)
        let expected = 2.564_656_203_756_111_6f64.ln() - 393.0 * 10f64.ln();
        assert!((ln_erfc(30.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn erf_diff_tails() {
        let v = ln_erf_diff(6.0, 7.0).exp();
        let direct = erfc(6.0) - erfc(7.0);
        assert!((v / direct - 1.0).abs() < 1e-13);
        let w = ln_erf_diff(-7.0, -6.0).exp();
        assert!((w / direct - 1.0).abs() < 1e-13);
        let m = ln_erf_diff(-0.5, 0.25).exp();
        assert!((m - (erf(0.25) + erf(0.5))).abs() < 1e-15);
    }

    #[test]
    fn gaussian_segment_full_line() {
        let v = ln_gaussian_segment(0.5, 1.0, -60.0, 60.0).exp();
        assert!((v - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn add_exp() {
        assert!((ln_add_exp(1000.0, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(ln_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
    }
}
