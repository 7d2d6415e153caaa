//! Conservation laws and time reversal on full integrations.

use trajcomplete::dynamics::mechanical_energy;
use trajcomplete::integrate::integrate;
use trajcomplete::{ChartManifold, Direction, ForceSystem, IntegratorConfig, Outcome, Trajectory};

fn sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn harmonic() -> ForceSystem {
    ForceSystem::new(|x, _| 0.5 * sq(x))
        .with_gradient(|x, _| x.to_vec())
        .with_time_derivative(|_, _| 0.0)
}

/// `V = e^{t+shift}(1 + |x|²)`.
fn time_oscillator(shift: f64) -> ForceSystem {
    ForceSystem::new(move |x, t| (t + shift).exp() * (1.0 + sq(x)))
        .with_gradient(move |x, t| x.iter().map(|v| 2.0 * (t + shift).exp() * v).collect())
        .with_time_derivative(move |x, t| (t + shift).exp() * (1.0 + sq(x)))
}

/// Largest `|g(γ̇,γ̇)(t) − g(γ̇,γ̇)(0)| / (g(γ̇,γ̇)(0) max(1, |t|))`.
fn drift_per_unit_time(m: &ChartManifold, tr: &Trajectory) -> f64 {
    let e0 = m.norm_sq(&tr.steps[0].x, &tr.steps[0].xdot).unwrap();
    tr.steps
        .iter()
        .map(|s| (m.norm_sq(&s.x, &s.xdot).unwrap() - e0).abs() / (e0 * s.t.abs().max(1.0)))
        .fold(0.0, f64::max)
}

#[test]
fn hyperbolic_geodesics_conserve_speed() {
    let m = ChartManifold::hyperbolic_half_plane();
    let free = ForceSystem::free(2);
    let cfg = IntegratorConfig::with_horizon(10.0);
    let cases: [([f64; 2], [f64; 2]); 5] = [
        ([0.0, 1.0], [1.0, 0.0]),
        ([0.0, 1.0], [0.0, 1.0]),
        ([1.0, 2.0], [0.3, -0.7]),
        ([-2.0, 0.5], [0.2, 0.1]),
        ([0.5, 3.0], [-1.5, 0.4]),
    ];
    for (p, v) in cases {
        for dir in [Direction::Forward, Direction::Backward] {
            let tr = integrate(&m, &free, &p, &v, &cfg, dir).unwrap();
            assert_eq!(tr.outcome, Outcome::HorizonReached);
            let d = drift_per_unit_time(&m, &tr);
            assert!(d < 1e-8, "p = {p:?}, v = {v:?}, {dir:?}: drift {d:e}");
        }
    }
}

#[test]
fn vertical_hyperbolic_geodesic_is_exponential() {
    // x = 0, y = e^t for unit speed
    let m = ChartManifold::hyperbolic_half_plane();
    let tr = integrate(&m, &ForceSystem::free(2), &[0.0, 1.0], &[0.0, 1.0], &IntegratorConfig::with_horizon(5.0), Direction::Forward).unwrap();
    for s in &tr.steps {
        assert!((s.x[1] - s.t.exp()).abs() < 1e-7 * s.t.exp());
        assert!(s.x[0].abs() < 1e-12);
    }
}

/// Integrate forward to `T`, then backward over `[−T, 0]` from the endpoint
/// with the time-shifted system, and compare with the initial state.
fn round_trip(m: &ChartManifold, fs_at: impl Fn(f64) -> ForceSystem, p: &[f64], v: &[f64], cfg: &IntegratorConfig) -> f64 {
    let (cfg, horizon) = (*cfg, cfg.horizon);
    let fwd = integrate(m, &fs_at(0.0), p, v, &cfg, Direction::Forward).unwrap();
    assert_eq!(fwd.outcome, Outcome::HorizonReached);
    let end = fwd.last();
    let back = integrate(m, &fs_at(horizon), &end.x, &end.xdot, &cfg, Direction::Backward).unwrap();
    assert_eq!(back.outcome, Outcome::HorizonReached);
    let b = back.last();
    b.x.iter()
        .zip(p)
        .chain(b.xdot.iter().zip(v))
        .map(|(a, c)| (a - c).abs())
        .fold(0.0, f64::max)
}

#[test]
fn time_reversal_returns_to_start() {
    let e2 = ChartManifold::euclidean(2);
    let err = round_trip(&e2, |_| harmonic(), &[1.0, 0.0], &[0.0, 0.0], &IntegratorConfig::with_horizon(20.0));
    assert!(err < 1e-6, "harmonic {err:e}");

    let err = round_trip(&e2, time_oscillator, &[0.5, -1.0], &[1.0, 0.2], &IntegratorConfig::with_horizon(3.0));
    assert!(err < 1e-6, "time-dependent oscillator {err:e}");

    let h = ChartManifold::hyperbolic_half_plane();
    // nearby geodesics separate like e^t here, so the return error is about
    // e^T times the local tolerance
    let err = round_trip(&h, |_| ForceSystem::free(2), &[0.0, 1.0], &[1.0, 0.5], &IntegratorConfig::with_horizon(5.0));
    assert!(err < 1e-6, "hyperbolic geodesic {err:e}");
    let tight = IntegratorConfig {
        rel_tol: 1e-11,
        abs_tol: 1e-14,
        ..IntegratorConfig::with_horizon(10.0)
    };
    let err = round_trip(&h, |_| ForceSystem::free(2), &[0.0, 1.0], &[1.0, 0.5], &tight);
    assert!(err < 1e-6, "hyperbolic geodesic {err:e}");
}

#[test]
fn harmonic_matches_closed_form_on_long_horizon() {
    let m = ChartManifold::euclidean(2);
    let tr = integrate(&m, &harmonic(), &[1.0, 0.0], &[0.0, 0.0], &IntegratorConfig::with_horizon(20.0), Direction::Forward).unwrap();
    let err = tr.steps.iter().map(|s| (s.x[0] - s.t.cos()).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "{err:e}");
    let e0 = mechanical_energy(&m, &harmonic(), 0.0, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
    for s in &tr.steps {
        let e = mechanical_energy(&m, &harmonic(), s.t, &s.x, &s.xdot).unwrap();
        assert!((e - e0).abs() < 1e-8);
    }
}
