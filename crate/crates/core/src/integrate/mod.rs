//! Adaptive integration of second-order systems with outcome classification.
//!
//! A trajectory stops for one of four reasons: the horizon was reached, the
//! speed diverged (either past the configured ceiling, or the step size
//! collapsed while the speed kept growing), the chart guard was crossed, or the
//! step size collapsed without any sign of growth. Only the second case is
//! reported as a suspected blow-up: non-convergence of velocities is what makes
//! a trajectory non-extendable, so step collapse alone is never read as one.

mod blowup;
mod dopri;
mod trajectory;

use serde::{Deserialize, Serialize};

use crate::dynamics::{rhs_e, ForceSystem};
use crate::error::{Error, Result};
use crate::geometry::ChartManifold;

pub use blowup::{refine_blowup, refine_blowup_system, BlowupInterval, RefinementLevel};
pub use trajectory::{Direction, Outcome, Stats, StepRecord, Trajectory};
pub(crate) use trajectory::hermite;

/// Second-order system `ẍ = a(t, x, ẋ)` on a chart.
pub trait SecondOrderSystem {
    fn dim(&self) -> usize;

    fn acceleration(&self, t: f64, x: &[f64], xdot: &[f64]) -> Result<Vec<f64>>;

    /// Norm of the velocity watched by the blow-up classifier.
    fn speed(&self, t: f64, x: &[f64], xdot: &[f64]) -> Result<f64>;

    fn contains(&self, x: &[f64]) -> bool;
}

/// The force equation on a manifold, with `g₀`-norm speeds.
#[derive(Debug, Clone, Copy)]
pub struct ForceEquation<'a> {
    pub manifold: &'a ChartManifold,
    pub forces: &'a ForceSystem,
}

impl<'a> ForceEquation<'a> {
    pub fn new(manifold: &'a ChartManifold, forces: &'a ForceSystem) -> Self {
        ForceEquation { manifold, forces }
    }
}

impl SecondOrderSystem for ForceEquation<'_> {
    fn dim(&self) -> usize {
        self.manifold.dim()
    }

    fn acceleration(&self, t: f64, x: &[f64], xdot: &[f64]) -> Result<Vec<f64>> {
        rhs_e(self.manifold, self.forces, t, x, xdot)
    }

    fn speed(&self, _t: f64, x: &[f64], xdot: &[f64]) -> Result<f64> {
        Ok(self.manifold.norm_sq(x, xdot)?.max(0.0).sqrt())
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.manifold.contains(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub horizon: f64,
    pub speed_ceiling: f64,
    pub min_step_fraction: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            horizon: 10.0,
            speed_ceiling: 1e12,
            min_step_fraction: 1e-14,
            max_steps: 2_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_horizon(horizon: f64) -> Self {
        IntegratorConfig {
            horizon,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("horizon", self.horizon),
            ("speed_ceiling", self.speed_ceiling),
            ("min_step_fraction", self.min_step_fraction),
        ];
        for (name, v) in positive {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.horizon.is_finite() {
            return Err(Error::InvalidConfig("horizon must be finite".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Integrates the force equation from `γ(0) = p`, `γ̇(0) = v`.
pub fn integrate(
    m: &ChartManifold,
    fs: &ForceSystem,
    p: &[f64],
    v: &[f64],
    cfg: &IntegratorConfig,
    direction: Direction,
) -> Result<Trajectory> {
    integrate_system(&ForceEquation::new(m, fs), p, v, cfg, direction)
}

/// Backward integration runs the reversed field in `s = −t`; stored states keep
/// `t` and `ẋ = dx/dt`.
pub(crate) fn first_order<'a, S: SecondOrderSystem + ?Sized>(
    sys: &'a S,
    sign: f64,
) -> impl Fn(f64, &[f64]) -> Result<Vec<f64>> + 'a {
    let n = sys.dim();
    move |s: f64, y: &[f64]| {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "state" });
        }
        let (x, xdot) = y.split_at(n);
        if !sys.contains(x) {
            return Err(Error::OutOfChart { point: x.to_vec() });
        }
        let acc = sys.acceleration(sign * s, x, xdot)?;
        let mut out = Vec::with_capacity(2 * n);
        out.extend(xdot.iter().map(|v| sign * v));
        out.extend(acc.iter().map(|a| sign * a));
        Ok(out)
    }
}

fn soft_failure(e: &Error) -> bool {
    matches!(e, Error::OutOfChart { .. } | Error::NonFinite { .. })
}

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

pub fn integrate_system<S: SecondOrderSystem + ?Sized>(
    sys: &S,
    p: &[f64],
    v: &[f64],
    cfg: &IntegratorConfig,
    direction: Direction,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n = sys.dim();
    if p.len() != n || v.len() != n {
        return Err(Error::InvalidInit(format!(
            "expected {n} position and velocity components, got {} and {}",
            p.len(),
            v.len()
        )));
    }
    if !sys.contains(p) {
        return Err(Error::InvalidInit(format!("initial point {p:?} violates the chart guard")));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInit("initial velocity is not finite".into()));
    }

    let sign = direction.sign();
    let eval = first_order(sys, sign);
    let mut stats = Stats::default();

    let mut y: Vec<f64> = p.iter().chain(v).cloned().collect();
    let mut f = eval(0.0, &y)?;
    stats.rhs_evals += 1;
    let record = |s: f64, y: &[f64], f: &[f64]| StepRecord {
        t: sign * s,
        x: y[..n].to_vec(),
        xdot: y[n..].to_vec(),
        xddot: f[n..].iter().map(|a| sign * a).collect(),
    };

    let mut steps = vec![record(0.0, &y, &f)];
    let mut speeds = vec![sys.speed(0.0, p, v)?];
    let finish = |steps, outcome, stats| Trajectory {
        direction,
        steps,
        outcome,
        stats,
    };
    if speeds[0] > cfg.speed_ceiling {
        return Ok(finish(steps, Outcome::BlowUpSuspected { t_star: 0.0 }, stats));
    }

    let horizon = cfg.horizon;
    let h_max = cfg.max_step.min(horizon);
    let h_min = cfg.min_step_fraction * horizon;
    let mut s = 0.0;
    let mut h = dopri::initial_step(&eval, &y, &f, cfg.rel_tol, cfg.abs_tol, h_max)?;
    stats.rhs_evals += 1;
    let mut fac_old: f64 = 1e-4;
    let mut last_reject_chart = false;

    loop {
        let remaining = horizon - s;
        if remaining <= horizon * 1e-14 {
            return Ok(finish(steps, Outcome::HorizonReached, stats));
        }
        if h < h_min && h < remaining {
            let t_last = sign * s;
            let outcome = if last_reject_chart {
                Outcome::ChartExit { t_exit: t_last }
            } else if speed_growing(&speeds) {
                Outcome::BlowUpSuspected { t_star: t_last }
            } else {
                Outcome::ToleranceFailure { t: t_last }
            };
            return Ok(finish(steps, outcome, stats));
        }
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Ok(finish(steps, Outcome::ToleranceFailure { t: sign * s }, stats));
        }

        // absorb rounding residue so the final node lands on the horizon
        let final_step = remaining <= h * (1.0 + 1e-6);
        let h_try = if final_step { remaining } else { h };
        let out = match dopri::step(&eval, s, &y, &f, h_try) {
            Ok(out) => {
                stats.rhs_evals += 6;
                out
            }
            Err(e) if soft_failure(&e) => {
                stats.rhs_evals += 6;
                stats.rejected += 1;
                last_reject_chart = matches!(e, Error::OutOfChart { .. });
                h = h_try * 0.25;
                continue;
            }
            Err(e) => return Err(e),
        };
        let err = dopri::error_norm(&out.err, &y, &out.y, cfg.rel_tol, cfg.abs_tol);
        if !err.is_finite() {
            stats.rejected += 1;
            last_reject_chart = false;
            h = h_try * 0.25;
            continue;
        }
        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            let x_new = &out.y[..n];
            let xdot_new = &out.y[n..];
            let speed = match sys.speed(sign * (s + h_try), x_new, xdot_new) {
                Ok(v) if v.is_finite() => v,
                Ok(_) => {
                    stats.rejected += 1;
                    h = h_try * 0.25;
                    continue;
                }
                Err(e) if soft_failure(&e) => {
                    stats.rejected += 1;
                    last_reject_chart = matches!(e, Error::OutOfChart { .. });
                    h = h_try * 0.25;
                    continue;
                }
                Err(e) => return Err(e),
            };
            stats.accepted += 1;
            last_reject_chart = false;
            let s_prev = s;
            s = if final_step { horizon } else { s + h_try };
            y = out.y;
            f = out.f;
            steps.push(record(s, &y, &f));
            let prev_speed = *speeds.last().unwrap();
            speeds.push(speed);

            if speed > cfg.speed_ceiling {
                let t_star = sign * ceiling_crossing(s_prev, prev_speed, s, speed, cfg.speed_ceiling);
                return Ok(finish(steps, Outcome::BlowUpSuspected { t_star }, stats));
            }

            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            fac_old = err.max(1e-4);
            h = (h_try / fac).min(h_max);
        } else {
            stats.rejected += 1;
            last_reject_chart = false;
            h = h_try / (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
    }
}

/// Speed strictly increasing over the last ten accepted steps.
fn speed_growing(speeds: &[f64]) -> bool {
    speeds.len() >= 11 && speeds[speeds.len() - 11..].windows(2).all(|w| w[1] > w[0])
}

/// Log-linear interpolation of the speed between two accepted steps.
fn ceiling_crossing(s0: f64, v0: f64, s1: f64, v1: f64, ceiling: f64) -> f64 {
    if v0 <= 0.0 || v0 >= ceiling || v1 <= v0 {
        return s1;
    }
    let theta = (ceiling.ln() - v0.ln()) / (v1.ln() - v0.ln());
    s0 + theta.clamp(0.0, 1.0) * (s1 - s0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::mechanical_energy;
    use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

    fn harmonic() -> ForceSystem {
        ForceSystem::new(|x, _| 0.5 * x.iter().map(|v| v * v).sum::<f64>())
            .with_gradient(|x, _| x.to_vec())
            .with_time_derivative(|_, _| 0.0)
    }

    fn quartic() -> ForceSystem {
        ForceSystem::new(|x, _| -x[0].powi(4))
            .with_gradient(|x, _| vec![-4.0 * x[0].powi(3)])
            .with_time_derivative(|_, _| 0.0)
    }

    #[test]
    fn harmonic_oscillator_tracks_cosine() {
        let m = ChartManifold::euclidean(2);
        let tr = integrate(&m, &harmonic(), &[1.0, 0.0], &[0.0, 0.0], &IntegratorConfig::with_horizon(20.0), Direction::Forward).unwrap();
        assert_eq!(tr.outcome, Outcome::HorizonReached);
        assert_eq!(tr.last().t, 20.0);
        let worst = tr.steps.iter().map(|s| (s.x[0] - s.t.cos()).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "max error {worst}");
        let (x, _) = tr.sample(PI).unwrap();
        assert!((x[0] + 1.0).abs() < 1e-6);
        assert!(tr.sample(20.5).is_err());
    }

    #[test]
    fn steps_are_strictly_monotone() {
        let m = ChartManifold::euclidean(2);
        for dir in [Direction::Forward, Direction::Backward] {
            let tr = integrate(&m, &harmonic(), &[1.0, 0.5], &[0.2, 0.0], &IntegratorConfig::with_horizon(5.0), dir).unwrap();
            assert!(tr.steps.windows(2).all(|w| dir.sign() * (w[1].t - w[0].t) > 0.0));
            assert_eq!(tr.last().t, dir.sign() * 5.0);
        }
    }

    #[test]
    fn backward_oscillator() {
        let m = ChartManifold::euclidean(1);
        let fs = ForceSystem::new(|x, _| 0.5 * x[0] * x[0]).with_gradient(|x, _| vec![x[0]]);
        let tr = integrate(&m, &fs, &[0.0], &[1.0], &IntegratorConfig::with_horizon(3.0), Direction::Backward).unwrap();
        // x(t) = sin t for t ≤ 0
        for s in &tr.steps {
            assert!((s.x[0] - s.t.sin()).abs() < 1e-7);
            assert!((s.xdot[0] - s.t.cos()).abs() < 1e-7);
        }
    }

    #[test]
    fn flat_geodesics_are_straight() {
        let m = ChartManifold::euclidean(3);
        let tr = integrate(&m, &ForceSystem::free(3), &[1.0, 2.0, 3.0], &[0.5, -1.0, 2.0], &IntegratorConfig::with_horizon(10.0), Direction::Forward).unwrap();
        assert_eq!(tr.outcome, Outcome::HorizonReached);
        for s in &tr.steps {
            assert_eq!(s.xdot, vec![0.5, -1.0, 2.0]);
            assert!((s.x[2] - (3.0 + 2.0 * s.t)).abs() < 1e-12);
        }
    }

    #[test]
    fn quartic_blows_up_near_closed_form_time() {
        // x(t) = 1/(1 − √2 t) solves ẍ = 4x³ with x(0) = 1, ẋ(0) = √2
        let m = ChartManifold::euclidean(1);
        let tr = integrate(&m, &quartic(), &[1.0], &[SQRT_2], &IntegratorConfig::with_horizon(2.0), Direction::Forward).unwrap();
        let t_star = tr.outcome.t_star().expect("blow-up expected");
        assert!((t_star - FRAC_1_SQRT_2).abs() < 1e-3, "t_star {t_star}");
        assert!(tr.last().xdot[0].abs() > 1e12);
    }

    #[test]
    fn chart_exit_is_not_blowup() {
        // straight line in the half-plane guard with a flat metric runs out through x² = 0
        let m = ChartManifold::euclidean(2).with_guard(|x| x[1] > 0.0);
        let tr = integrate(&m, &ForceSystem::free(2), &[0.0, 1.0], &[0.0, -1.0], &IntegratorConfig::with_horizon(3.0), Direction::Forward).unwrap();
        match tr.outcome {
            Outcome::ChartExit { t_exit } => assert!((t_exit - 1.0).abs() < 1e-6, "t_exit {t_exit}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(tr.steps.iter().all(|s| s.x[1] > 0.0));
    }

    #[test]
    fn invalid_initial_point() {
        let m = ChartManifold::hyperbolic_half_plane();
        let r = integrate(&m, &ForceSystem::free(2), &[0.0, -1.0], &[1.0, 0.0], &IntegratorConfig::default(), Direction::Forward);
        assert!(matches!(r, Err(Error::InvalidInit(_))));
    }

    #[test]
    fn invalid_config() {
        let m = ChartManifold::euclidean(1);
        let cfg = IntegratorConfig { rel_tol: 0.0, ..Default::default() };
        assert!(matches!(
            integrate(&m, &ForceSystem::free(1), &[0.0], &[1.0], &cfg, Direction::Forward),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn step_collapse_without_growth_is_tolerance_failure() {
        // ẍ = sin(10⁶ t) needs steps far below the floor while |ẋ| ≤ 2·10⁻⁶
        let m = ChartManifold::euclidean(1);
        let fs = ForceSystem::new(|x, t| -x[0] * (1e6 * t).sin()).with_gradient(|_, t| vec![-(1e6 * t).sin()]);
        let cfg = IntegratorConfig { horizon: 10.0, min_step_fraction: 1e-4, ..Default::default() };
        let tr = integrate(&m, &fs, &[1.0], &[0.0], &cfg, Direction::Forward).unwrap();
        assert!(matches!(tr.outcome, Outcome::ToleranceFailure { .. }), "{:?}", tr.outcome);
    }

    #[test]
    fn harmonic_energy_is_conserved() {
        let m = ChartManifold::euclidean(2);
        let fs = harmonic();
        let tr = integrate(&m, &fs, &[1.0, 0.3], &[0.0, -0.4], &IntegratorConfig::with_horizon(20.0), Direction::Forward).unwrap();
        let e0 = mechanical_energy(&m, &fs, 0.0, &tr.steps[0].x, &tr.steps[0].xdot).unwrap();
        let drift = tr
            .steps
            .iter()
            .map(|s| (mechanical_energy(&m, &fs, s.t, &s.x, &s.xdot).unwrap() - e0).abs() / e0)
            .fold(0.0, f64::max);
        assert!(drift / 20.0 < 1e-8, "drift {drift}");
    }

    #[test]
    fn convergence_order_against_tolerance() {
        // endpoint error vs rhs evaluations on the oscillator
        let m = ChartManifold::euclidean(1);
        let fs = ForceSystem::new(|x, _| 0.5 * x[0] * x[0]).with_gradient(|x, _| vec![x[0]]);
        let mut pts = Vec::new();
        for k in 0..5 {
            let tol = 1e-6 * 0.1f64.powi(k);
            let cfg = IntegratorConfig { rel_tol: tol, abs_tol: tol * 1e-3, ..IntegratorConfig::with_horizon(10.0) };
            let tr = integrate(&m, &fs, &[1.0], &[0.0], &cfg, Direction::Forward).unwrap();
            let err = (tr.last().x[0] - 10f64.cos()).abs();
            pts.push(((tr.stats.accepted as f64).ln(), err.ln()));
        }
        for w in pts.windows(2) {
            assert!(w[1].1 < w[0].1, "halving tolerance must reduce endpoint error: {pts:?}");
        }
        // least squares slope of log err vs log steps ≈ −order
        let nf = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!(-slope >= 4.0, "observed order {}", -slope);
    }
}
