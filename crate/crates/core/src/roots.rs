//! Derivative-free bracketed root finding.

use crate::error::{Error, Result};

/// Brent–Dekker iteration: bisection safeguarding secant and inverse
/// quadratic steps. Terminates when the bracket is narrower than
/// `xtol + 4·eps·|x|` or `f` hits zero exactly.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, xtol: f64) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return Err(Error::NotBracketed { a, b });
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Ok(b)
}

/// Walks `f` along `grid` and returns the first sub-interval `[g_k, g_{k+1}]`
/// where `f` goes from strictly positive to non-positive.
pub fn first_downward_crossing<F: FnMut(f64) -> f64>(
    mut f: F,
    grid: impl IntoIterator<Item = f64>,
) -> Option<(f64, f64)> {
    let mut prev: Option<(f64, f64)> = None;
    for x in grid {
        let fx = f(x);
        if let Some((px, pf)) = prev {
            if pf > 0.0 && fx <= 0.0 {
                return Some((px, x));
            }
        }
        prev = Some((x, fx));
    }
    None
}

/// Golden-section maximisation of a unimodal function on `[lo, hi]`.
/// Returns `(x*, f(x*))` with the bracket shrunk below `xtol`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, xtol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > xtol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    // the ends are candidates too: golden section never evaluates them
    [(x, fx), (lo, f(lo)), (hi, f(hi))]
        .into_iter()
        .fold((x, fx), |best, c| if c.1 > best.1 { c } else { best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_sqrt2() {
        let x = brent(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((x - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn brent_transcendental() {
        let x = brent(|x: f64| x.cos() - x, 0.0, 1.0, 1e-15).unwrap();
        assert!((x.cos() - x).abs() < 1e-14);
    }

    #[test]
    fn brent_not_bracketed() {
        assert!(matches!(
            brent(|x| x * x + 1.0, -1.0, 1.0, 1e-12),
            Err(Error::NotBracketed { .. })
        ));
    }

    #[test]
    fn crossing_scan() {
        let grid = (0..100).map(|k| k as f64 * 0.1);
        let (a, b) = first_downward_crossing(|x| 3.3 - x, grid).unwrap();
        assert!(a < 3.3 && b >= 3.3);
        assert!(first_downward_crossing(|x| x, (0..10).map(f64::from)).is_none());
    }

    #[test]
    fn golden_interior_and_edge() {
        let (x, _) = golden_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-8);
        assert!((x - 0.3).abs() < 1e-7);
        let (x, _) = golden_max(|x| -x, 0.0, 1.0, 1e-8);
        assert_eq!(x, 0.0);
    }
}
