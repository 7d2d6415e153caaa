//! Gronwall energy envelope along a time-dependent oscillator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajcomplete::comparison::{solve_dominating, verify_envelope};
use trajcomplete::dynamics::{energy_derivative_identity, energy_v};
use trajcomplete::integrate::integrate;
use trajcomplete::{ChartManifold, Direction, EnergyFrame, ForceSystem, IntegratorConfig, Outcome, PhiFunction, Trajectory};

fn sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn oscillator() -> ForceSystem {
    ForceSystem::new(|x, t| t.exp() * (1.0 + sq(x)))
        .with_gradient(|x, t| x.iter().map(|v| 2.0 * t.exp() * v).collect())
        .with_time_derivative(|x, t| t.exp() * (1.0 + sq(x)))
}

const T: f64 = 3.0;

fn frame() -> EnergyFrame {
    let t_grid: Vec<f64> = (0..=60).map(|i| -T + i as f64 * 0.1).collect();
    EnergyFrame::from_bounds(T, |_| 1.0, |_| 0.0, &t_grid, 0.0)
}

fn random_point(rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let p = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        if sq(&p) <= 4.0 {
            return p;
        }
    }
}

fn run(p: &[f64], v: &[f64]) -> Trajectory {
    // bounded steps keep the three-point difference of v well below 1e-4
    let cfg = IntegratorConfig {
        max_step: 1e-3,
        ..IntegratorConfig::with_horizon(T)
    };
    integrate(&ChartManifold::euclidean(2), &oscillator(), p, v, &cfg, Direction::Forward).unwrap()
}

/// Derivative at interior node `i` from the nonuniform three-point formula.
fn three_point(t: &[f64], y: &[f64], i: usize) -> f64 {
    let (h0, h1) = (t[i] - t[i - 1], t[i + 1] - t[i]);
    (-h1 / (h0 * (h0 + h1))) * y[i - 1] + ((h1 - h0) / (h0 * h1)) * y[i] + (h0 / (h1 * (h0 + h1))) * y[i + 1]
}

#[test]
fn energy_stays_below_exponential_envelope() {
    let m = ChartManifold::euclidean(2);
    let fs = oscillator();
    let fr = frame();
    assert_eq!((fr.a_t, fr.b_t, fr.n_t, fr.a_t_star), (1.0, -1.0, 0.0, 1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let p = random_point(&mut rng);
        let v = random_point(&mut rng);
        let tr = run(&p, &v);
        assert_eq!(tr.outcome, Outcome::HorizonReached);
        let t: Vec<f64> = tr.times().collect();
        let vs: Vec<f64> = tr.steps.iter().map(|s| energy_v(&m, &fs, &fr, s.t, &s.x, &s.xdot).unwrap()).collect();
        for (ti, vi) in t.iter().zip(&vs) {
            assert!(*vi <= vs[0] * (fr.a_t_star * ti).exp(), "t = {ti}");
        }
        for i in 1..t.len() - 1 {
            let fd = three_point(&t, &vs, i);
            let s = &tr.steps[i];
            let exact = energy_derivative_identity(&m, &fs, s.t, &s.x, &s.xdot).unwrap();
            let rel = (fd - exact).abs() / exact.abs().max(vs[i].abs());
            assert!(rel < 1e-4, "t = {}: {fd} vs {exact}", s.t);
        }
    }
}

#[test]
fn envelope_report_on_oscillator_energy() {
    let m = ChartManifold::euclidean(2);
    let fs = oscillator();
    let fr = frame();
    let tr = run(&[1.0, -0.5], &[0.3, 1.2]);
    let t: Vec<f64> = tr.times().collect();
    let v: Vec<f64> = tr.steps.iter().map(|s| energy_v(&m, &fs, &fr, s.t, &s.x, &s.xdot).unwrap()).collect();
    // v ≥ V + 1 > 1, so φ(s) = A* s on [1, ∞) covers the whole path
    let a_star = fr.a_t_star;
    let phi = PhiFunction::new(1.0, move |s| a_star * s).unwrap();
    let sol = solve_dominating(&phi, v[0], T).unwrap();
    let rep = verify_envelope(&t, &v, &phi, &sol).unwrap();
    assert!(rep.hypotheses_hold, "{rep:?}");
    assert!(rep.conclusion_holds);
    assert!(rep.margin >= 0.0);
    // strictly positive away from t = 0
    let tail = (1..t.len())
        .map(|i| sol.value(t[i]).unwrap() - v[i])
        .fold(f64::INFINITY, f64::min);
    assert!(tail > 0.0);

    // independent check of v at T with a fixed-step classical RK4 integration
    let n = 300_000;
    let h = T / n as f64;
    let mut y = [1.0, -0.5, 0.3, 1.2];
    let f = |t: f64, y: &[f64; 4]| [y[2], y[3], -2.0 * t.exp() * y[0], -2.0 * t.exp() * y[1]];
    for k in 0..n {
        let t0 = k as f64 * h;
        let k1 = f(t0, &y);
        let mid = |a: &[f64; 4], c: f64| [y[0] + c * a[0], y[1] + c * a[1], y[2] + c * a[2], y[3] + c * a[3]];
        let k2 = f(t0 + 0.5 * h, &mid(&k1, 0.5 * h));
        let k3 = f(t0 + 0.5 * h, &mid(&k2, 0.5 * h));
        let k4 = f(t0 + h, &mid(&k3, h));
        for j in 0..4 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    let v_ref = 0.5 * (y[2] * y[2] + y[3] * y[3]) + T.exp() * (1.0 + y[0] * y[0] + y[1] * y[1]) + 1.0;
    let v_end = *v.last().unwrap();
    assert!((v_end - v_ref).abs() < 1e-6 * v_ref, "{v_end} vs {v_ref}");
}
