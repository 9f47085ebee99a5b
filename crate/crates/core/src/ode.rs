//! Dormand–Prince 5(4) with step-size control and the fourth-order
//! continuous extension for output at requested times.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// dense output (Hairer, Nørsett & Wanner, DOPRI5 `contd5`)
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Options {
    pub fn with_tol(tol: f64) -> Self {
        Options {
            rtol: tol,
            atol: tol,
            h_max: f64::INFINITY,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] += h * s;
    }
    out
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t_end`, returning the state at
/// each of the sorted `samples` (all inside `[t0, t_end]`).
///
/// `after_step` runs on every accepted step and may project the state back
/// onto a known constraint; the dense output of that step is built before
/// the projection.
pub fn integrate<const N: usize, F, P>(
    mut rhs: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    samples: &[f64],
    opts: Options,
    mut after_step: P,
) -> Result<(Vec<[f64; N]>, Stats)>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    P: FnMut(f64, &mut [f64; N]),
{
    let mut out = Vec::with_capacity(samples.len());
    let mut stats = Stats::default();
    let mut next = 0;
    while next < samples.len() && samples[next] <= t0 {
        out.push(y0);
        next += 1;
    }
    if t_end <= t0 {
        while next < samples.len() {
            out.push(y0);
            next += 1;
        }
        return Ok((out, stats));
    }

    let mut t = t0;
    let mut y = y0;
    let mut k1 = rhs(t, &y);
    stats.evaluations += 1;

    // initial step guess (Hairer's heuristic, simplified)
    let scale = |y: &[f64; N], i: usize| opts.atol + opts.rtol * y[i].abs();
    let d0 = rms(&y, |i| scale(&y, i));
    let d1 = rms(&k1, |i| scale(&y, i));
    let mut h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h = h.min(opts.h_max).min(t_end - t).max(1e-12);

    let mut last_rejected = false;
    while t < t_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::StepFailure {
                tau: t,
                reason: "step budget exhausted".into(),
            });
        }
        if t + h > t_end {
            h = t_end - t;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepFailure {
                tau: t,
                reason: format!("step size underflow (h = {h:e})"),
            });
        }
        let k2 = rhs(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = rhs(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = rhs(
            t + C4 * h,
            &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = rhs(
            t + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = rhs(
            t + h,
            &axpy(
                &y,
                h,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y_new = axpy(
            &y,
            h,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let k7 = rhs(t + h, &y_new);
        stats.evaluations += 6;

        let mut err_sq = 0.0;
        for i in 0..N {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / sc).powi(2);
        }
        let err = (err_sq / N as f64).sqrt();
        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.1;
            last_rejected = true;
            continue;
        }

        if err <= 1.0 {
            stats.accepted += 1;
            let t_new = t + h;
            while next < samples.len() && samples[next] <= t_new {
                let theta = ((samples[next] - t) / h).clamp(0.0, 1.0);
                out.push(dense(&y, &y_new, &[&k1, &k3, &k4, &k5, &k6, &k7], h, theta));
                next += 1;
            }
            t = t_new;
            y = y_new;
            after_step(t, &mut y);
            k1 = if y == y_new { k7 } else { rhs(t, &y) };
            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(opts.h_max);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            last_rejected = true;
        }
    }
    while next < samples.len() {
        out.push(y);
        next += 1;
    }
    Ok((out, stats))
}

fn rms<const N: usize>(v: &[f64; N], sc: impl Fn(usize) -> f64) -> f64 {
    (v.iter()
        .enumerate()
        .map(|(i, x)| (x / sc(i)).powi(2))
        .sum::<f64>()
        / N as f64)
        .sqrt()
}

fn dense<const N: usize>(
    y0: &[f64; N],
    y1: &[f64; N],
    k: &[&[f64; N]; 6],
    h: f64,
    theta: f64,
) -> [f64; N] {
    let [k1, k3, k4, k5, k6, k7] = *k;
    let t1 = 1.0 - theta;
    let mut out = [0.0; N];
    for i in 0..N {
        let diff = y1[i] - y0[i];
        let bspl = h * k1[i] - diff;
        let r4 = diff - h * k7[i] - bspl;
        let r5 = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        out[i] = y0[i] + theta * (diff + t1 * (bspl + theta * (r4 + t1 * r5)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_at_samples() {
        let samples: Vec<f64> = (0..=50).map(|k| k as f64 * 0.2).collect();
        let (ys, stats) = integrate(
            |_, y: &[f64; 1]| [-y[0]],
            0.0,
            [1.0],
            10.0,
            &samples,
            Options::with_tol(1e-11),
            |_, _| {},
        )
        .unwrap();
        assert_eq!(ys.len(), samples.len());
        for (t, y) in samples.iter().zip(&ys) {
            assert!((y[0] - (-t).exp()).abs() < 1e-10, "t={t}");
        }
        assert!(stats.accepted > 10);
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        // dense samples much finer than the step size exercise the interpolant
        let samples: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.01).collect();
        let (ys, _) = integrate(
            |_, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            [0.0, 1.0],
            20.0,
            &samples,
            Options::with_tol(1e-10),
            |_, _| {},
        )
        .unwrap();
        let worst = samples
            .iter()
            .zip(&ys)
            .map(|(t, y)| (y[0] - t.sin()).abs().max((y[1] - t.cos()).abs()))
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "worst dense error {worst:e}");
    }

    #[test]
    fn convergence_with_tolerance() {
        let run = |tol| {
            let (ys, _) = integrate(
                |t, y: &[f64; 1]| [t.cos() * y[0]],
                0.0,
                [1.0],
                10.0,
                &[10.0],
                Options::with_tol(tol),
                |_, _| {},
            )
            .unwrap();
            (ys[0][0] - 10f64.sin().exp()).abs()
        };
        assert!(run(1e-12) < run(1e-6));
        assert!(run(1e-12) < 1e-10);
    }

    #[test]
    fn step_budget_failure() {
        let mut opts = Options::with_tol(1e-12);
        opts.max_steps = 5;
        let r = integrate(
            |_, y: &[f64; 1]| [-y[0]],
            0.0,
            [1.0],
            100.0,
            &[],
            opts,
            |_, _| {},
        );
        assert!(matches!(r, Err(Error::StepFailure { .. })));
    }
}
