use qmemory::closedform::{exp_constants, gauss_constants, sigma_from_peak};
use qmemory::dynamics::{energy_balance_residual, sample_grid, simulate_at, SimOptions};
use qmemory::protocol::build_schedule;
use qmemory::{InputProfile, MemoryParams};

fn population_at(profile: &InputProfile, kappa_i: f64, tau: f64) -> f64 {
    let params = MemoryParams::new(kappa_i).unwrap();
    let s = build_schedule(profile, &params).unwrap();
    let times = sample_grid(tau, 201, s.tau_c() + 2.0, &[s.tau_c(), tau]);
    let t = simulate_at(profile, &params, &s, &times, SimOptions::default()).unwrap();
    let last = t.last();
    assert_eq!(last.tau, tau);
    last.beta * last.beta
}

#[test]
fn simulated_peak_reproduces_closed_form_fidelity() {
    let c = exp_constants(0.036, 1e-4).unwrap();
    let (tm, f) = c.report().unwrap();
    let sim = population_at(&InputProfile::exponential(0.036).unwrap(), 1e-4, tm);
    assert!((sim - f).abs() <= 1e-5, "{sim} vs {f}");

    let g = gauss_constants(sigma_from_peak(0.1533), 4.0, 1e-4).unwrap();
    let (tm, f) = g.report().unwrap();
    let sim = population_at(&InputProfile::gaussian(0.1533, 4.0).unwrap(), 1e-4, tm);
    assert!((sim - f).abs() <= 1e-5, "{sim} vs {f}");
}

#[test]
fn residual_converges_with_tolerance() {
    let p = InputProfile::exponential(0.036).unwrap();
    let params = MemoryParams::new(1e-4).unwrap();
    let s = build_schedule(&p, &params).unwrap();
    let times = sample_grid(400.0, 2001, s.tau_c() + 2.0, &[s.tau_c()]);
    let residual = |tol: f64| {
        let t = simulate_at(
            &p,
            &params,
            &s,
            &times,
            SimOptions {
                tol,
                ..Default::default()
            },
        )
        .unwrap();
        energy_balance_residual(&t)
    };
    let r: Vec<f64> = [1e-7, 5e-8, 2.5e-8, 1.25e-8]
        .iter()
        .map(|&t| residual(t))
        .collect();
    assert!(r.windows(2).all(|w| w[1] < w[0]), "{r:?}");
    // a fifth-order integrator's step scales as tol^(1/5); third order in the
    // step is therefore tol^(3/5)
    let order = (r[0] / r[3]).ln() / 8f64.ln() * 5.0;
    assert!(order >= 3.0, "order {order:.2}: {r:?}");
}
