//! Sharpening a suspected blow-up time by re-integrating with tighter tolerances
//! and bisecting the speed-ceiling crossing inside the final step.

use serde::Serialize;

use super::{dopri, first_order, integrate_system, ForceEquation, IntegratorConfig, SecondOrderSystem, Trajectory};
use crate::dynamics::ForceSystem;
use crate::error::{Error, Result};
use crate::geometry::ChartManifold;

const MAX_LEVELS: usize = 6;
const RELATIVE_WIDTH: f64 = 1e-3;
const GLOBAL_ERROR_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementLevel {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Bisection bracket of the ceiling crossing at this tolerance.
    pub crossing: (f64, f64),
    /// Power-law extrapolation of the blow-up time from the last steps.
    pub extrapolated: Option<f64>,
    /// Interval reported after this level.
    pub interval: (f64, f64),
}

/// Interval bracketing the ceiling-crossing time (and the extrapolated blow-up
/// time when one is available), in the trajectory's own time orientation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupInterval {
    pub t_lo: f64,
    pub t_hi: f64,
    pub levels: Vec<RefinementLevel>,
    /// Every level's interval lies inside the previous one.
    pub nested: bool,
}

impl BlowupInterval {
    pub fn width(&self) -> f64 {
        self.t_hi - self.t_lo
    }

    pub fn contains(&self, t: f64) -> bool {
        (self.t_lo..=self.t_hi).contains(&t)
    }
}

pub fn refine_blowup(
    m: &ChartManifold,
    fs: &ForceSystem,
    p: &[f64],
    v: &[f64],
    cfg: &IntegratorConfig,
    coarse: &Trajectory,
) -> Result<BlowupInterval> {
    refine_blowup_system(&ForceEquation::new(m, fs), p, v, cfg, coarse)
}

pub fn refine_blowup_system<S: SecondOrderSystem + ?Sized>(
    sys: &S,
    p: &[f64],
    v: &[f64],
    cfg: &IntegratorConfig,
    coarse: &Trajectory,
) -> Result<BlowupInterval> {
    if !coarse.outcome.is_blowup() {
        return Err(Error::NotABlowup(format!("coarse outcome is {}", coarse.outcome.label())));
    }
    let direction = coarse.direction;
    let sign = direction.sign();

    // all bookkeeping in s = sign·t ≥ 0
    let mut levels: Vec<RefinementLevel> = Vec::new();
    let mut current: Option<(f64, f64)> = None;
    let mut nested = true;
    let mut prev_crossing: Option<(f64, f64)> = None;

    for k in 0..MAX_LEVELS {
        let scale = 0.1f64.powi(k as i32);
        let level_cfg = IntegratorConfig {
            rel_tol: (cfg.rel_tol * scale).max(1e-13),
            abs_tol: (cfg.abs_tol * scale).max(1e-16),
            ..*cfg
        };
        let owned;
        let tr = if k == 0 {
            coarse
        } else {
            owned = integrate_system(sys, p, v, &level_cfg, direction)?;
            &owned
        };
        if !tr.outcome.is_blowup() {
            return Err(Error::NotABlowup(format!(
                "refinement at rel_tol {:e} ended with {}",
                level_cfg.rel_tol,
                tr.outcome.label()
            )));
        }

        let crossing = bisect_crossing(sys, tr, level_cfg.speed_ceiling, sign)?;
        let extrapolated = extrapolate(sys, tr, sign, level_cfg.rel_tol);

        let mut lo = crossing.0;
        let mut hi = crossing.1;
        if let Some((plo, phi)) = prev_crossing {
            lo = lo.min(plo);
            hi = hi.max(phi);
        }
        if let Some(e) = extrapolated {
            hi = hi.max(e);
        }
        let interval = match current {
            Some((clo, chi)) => {
                let (ilo, ihi) = (lo.max(clo), hi.min(chi));
                if ilo <= crossing.0 && crossing.1 <= ihi {
                    (ilo, ihi)
                } else {
                    nested = false;
                    (lo, hi)
                }
            }
            None => (lo, hi),
        };
        current = Some(interval);
        prev_crossing = Some(crossing);
        levels.push(RefinementLevel {
            rel_tol: level_cfg.rel_tol,
            abs_tol: level_cfg.abs_tol,
            crossing: orient(crossing, sign),
            extrapolated: extrapolated.map(|e| sign * e),
            interval: orient(interval, sign),
        });

        if k >= 1 && interval.1 - interval.0 <= RELATIVE_WIDTH * interval.1 {
            let (t_lo, t_hi) = orient(interval, sign);
            return Ok(BlowupInterval {
                t_lo,
                t_hi,
                levels,
                nested,
            });
        }
    }
    Err(Error::NotABlowup(format!(
        "crossing interval did not shrink below {RELATIVE_WIDTH} relative width in {MAX_LEVELS} levels"
    )))
}

fn orient((a, b): (f64, f64), sign: f64) -> (f64, f64) {
    if sign > 0.0 {
        (a, b)
    } else {
        (-b, -a)
    }
}

/// Bisects the ceiling crossing inside the last accepted step by single
/// Runge-Kutta steps from the last sub-ceiling state.
fn bisect_crossing<S: SecondOrderSystem + ?Sized>(
    sys: &S,
    tr: &Trajectory,
    ceiling: f64,
    sign: f64,
) -> Result<(f64, f64)> {
    let n = sys.dim();
    let k = tr.steps.len();
    let last_s = sign * tr.last().t;
    if k < 2 {
        return Ok((last_s, last_s));
    }
    let a = &tr.steps[k - 2];
    let s0 = sign * a.t;
    let y0: Vec<f64> = a.x.iter().chain(&a.xdot).cloned().collect();
    let eval = first_order(sys, sign);
    let f0 = eval(s0, &y0)?;

    let above = |h: f64| -> bool {
        match dopri::step(&eval, s0, &y0, &f0, h) {
            Ok(out) => match sys.speed(sign * (s0 + h), &out.y[..n], &out.y[n..]) {
                Ok(sp) => !sp.is_finite() || sp >= ceiling,
                Err(_) => true,
            },
            Err(_) => true,
        }
    };

    let (mut lo, mut hi) = (0.0, last_s - s0);
    let tol = 1e-14 * last_s.abs().max(1.0);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if above(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((s0 + lo, s0 + hi))
}

/// Extrapolates `s*` from the last accepted speeds, assuming a local power law
/// `|ẋ| ~ C (s* − s)^{−p}` so that `(d ln|ẋ|/ds)⁻¹` is linear in `s` and vanishes
/// at `s*`. The spread between two consecutive estimates is added as an error
/// allowance, plus a multiple of the tolerance for the global error of the
/// trajectory the speeds come from.
fn extrapolate<S: SecondOrderSystem + ?Sized>(sys: &S, tr: &Trajectory, sign: f64, rel_tol: f64) -> Option<f64> {
    let k = tr.steps.len();
    if k < 4 {
        return None;
    }
    let pts: Vec<(f64, f64)> = tr.steps[k - 4..]
        .iter()
        .map(|st| {
            let sp = sys.speed(st.t, &st.x, &st.xdot).unwrap_or(f64::NAN);
            (sign * st.t, sp.ln())
        })
        .collect();
    let estimate = |p: &[(f64, f64)]| -> Option<f64> {
        let q_a = (p[1].1 - p[0].1) / (p[1].0 - p[0].0);
        let q_b = (p[2].1 - p[1].1) / (p[2].0 - p[1].0);
        if !(q_a > 0.0 && q_b > 0.0) {
            return None;
        }
        let (m_a, m_b) = (0.5 * (p[0].0 + p[1].0), 0.5 * (p[1].0 + p[2].0));
        let (r_a, r_b) = (1.0 / q_a, 1.0 / q_b);
        let slope = (r_b - r_a) / (m_b - m_a);
        if !(slope < 0.0) || !slope.is_finite() {
            return None;
        }
        Some(m_b - r_b / slope)
    };
    let e1 = estimate(&pts[0..3])?;
    let e2 = estimate(&pts[1..4])?;
    let last = pts[3].0;
    let span = last - pts[0].0;
    if e2 < last || e2 - last > 1000.0 * span.max(last.abs() * 1e-12) {
        return None;
    }
    Some(e2 + (e2 - e1).abs() + GLOBAL_ERROR_FACTOR * rel_tol * e2.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{integrate, Direction};
    use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

    fn quartic() -> ForceSystem {
        ForceSystem::new(|x, _| -x[0].powi(4))
            .with_gradient(|x, _| vec![-4.0 * x[0].powi(3)])
            .with_time_derivative(|_, _| 0.0)
    }

    /// Composite Simpson for `∫₀¹ dw / √(2(1 + w⁴))`, which equals
    /// `∫₁^∞ dx / √(2(1 + x⁴))` after `x = 1/w`.
    fn escape_time_oracle() -> f64 {
        let n = 2000;
        let h = 1.0 / n as f64;
        let f = |w: f64| 1.0 / (2.0 * (1.0 + w.powi(4))).sqrt();
        let mut acc = f(0.0) + f(1.0);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn closed_form_blowup_interval() {
        let m = ChartManifold::euclidean(1);
        let fs = quartic();
        let cfg = IntegratorConfig::with_horizon(2.0);
        let coarse = integrate(&m, &fs, &[1.0], &[SQRT_2], &cfg, Direction::Forward).unwrap();
        let iv = refine_blowup(&m, &fs, &[1.0], &[SQRT_2], &cfg, &coarse).unwrap();
        assert!(iv.contains(FRAC_1_SQRT_2), "{iv:?}");
        assert!(iv.width() <= 1e-3 * iv.t_hi);
        assert!(iv.nested);
        for w in iv.levels.windows(2) {
            let (a, b) = (w[0].interval, w[1].interval);
            assert!(b.0 >= a.0 && b.1 <= a.1, "levels must nest: {a:?} then {b:?}");
        }
    }

    #[test]
    fn quadrature_blowup_interval() {
        let m = ChartManifold::euclidean(1);
        let fs = quartic();
        let cfg = IntegratorConfig::with_horizon(2.0);
        let coarse = integrate(&m, &fs, &[1.0], &[2.0], &cfg, Direction::Forward).unwrap();
        let iv = refine_blowup(&m, &fs, &[1.0], &[2.0], &cfg, &coarse).unwrap();
        let oracle = escape_time_oracle();
        assert!(iv.contains(oracle), "oracle {oracle}, interval {iv:?}");
        assert!(iv.width() <= 1e-3 * iv.t_hi);
    }

    #[test]
    fn backward_blowup_interval() {
        // time reversal of the closed-form case: x(0) = 1, ẋ(0) = −√2 blows up at t = −1/√2
        let m = ChartManifold::euclidean(1);
        let fs = quartic();
        let cfg = IntegratorConfig::with_horizon(2.0);
        let coarse = integrate(&m, &fs, &[1.0], &[-SQRT_2], &cfg, Direction::Backward).unwrap();
        let iv = refine_blowup(&m, &fs, &[1.0], &[-SQRT_2], &cfg, &coarse).unwrap();
        assert!(iv.contains(-FRAC_1_SQRT_2), "{iv:?}");
    }

    #[test]
    fn complete_trajectory_is_not_a_blowup() {
        let m = ChartManifold::euclidean(1);
        let fs = ForceSystem::new(|x, _| 0.5 * x[0] * x[0]).with_gradient(|x, _| vec![x[0]]);
        let cfg = IntegratorConfig::with_horizon(5.0);
        let tr = integrate(&m, &fs, &[1.0], &[0.0], &cfg, Direction::Forward).unwrap();
        assert!(matches!(refine_blowup(&m, &fs, &[1.0], &[0.0], &cfg, &tr), Err(Error::NotABlowup(_))));
    }
}
