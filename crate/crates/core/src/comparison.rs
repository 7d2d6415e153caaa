//! Comparison of an integral inequality `v(t) ≤ v(0) + ∫₀ᵗ φ(v)` with the
//! solution of `v₀' = φ(v₀)`.
//!
//! When `φ` is positive, nondecreasing on `[a, ∞)` and `∫_a^∞ ds/φ(s)` diverges,
//! the dominating solution `v₀` exists for all `t ≥ 0` and is the inverse of
//! `t(w) = ∫_{v₀(0)}^{w} ds/φ(s)`. [`DominatingSolution`] evaluates it that way:
//! by quadrature of `1/φ` and monotone inversion.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson_rel, cumulative_trapezoid};

/// Relative per-panel tolerance for every quadrature of `1/φ`.
const PANEL_TOL: f64 = 1e-13;

pub type PhiFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Sampled evidence that `φ` is positive and nondecreasing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneCertificate {
    pub samples: usize,
    pub range: (f64, f64),
    pub min_value: f64,
}

#[derive(Clone)]
pub struct PhiFunction {
    a: f64,
    eval: Arc<PhiFn>,
    certificate: MonotoneCertificate,
}

impl fmt::Debug for PhiFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhiFunction")
            .field("a", &self.a)
            .field("certificate", &self.certificate)
            .finish()
    }
}

fn sample_points(a: f64) -> Vec<f64> {
    let scale = a.abs().max(1.0);
    let mut pts: Vec<f64> = (0..=64).map(|i| a + scale * i as f64 / 64.0).collect();
    pts.extend((1..=100).map(|i| a + scale * 2f64.powf(i as f64 / 4.0)));
    pts
}

impl PhiFunction {
    /// Validates `φ > 0` and monotonicity on a fixed sample of `[a, a + 2²⁵·max(1,|a|)]`.
    pub fn new<F>(a: f64, phi: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !a.is_finite() {
            return Err(Error::HypothesisViolated(format!("left endpoint a = {a} is not finite")));
        }
        let pts = sample_points(a);
        let values: Vec<f64> = pts.iter().map(|&s| phi(s)).collect();
        for (s, v) in pts.iter().zip(&values) {
            if !v.is_finite() || *v <= 0.0 {
                return Err(Error::HypothesisViolated(format!("φ({s}) = {v} is not positive")));
            }
        }
        for i in 1..values.len() {
            if values[i] < values[i - 1] * (1.0 - 1e-14) {
                return Err(Error::HypothesisViolated(format!(
                    "φ decreases between s = {} and s = {}",
                    pts[i - 1],
                    pts[i]
                )));
            }
        }
        let certificate = MonotoneCertificate {
            samples: pts.len(),
            range: (pts[0], *pts.last().unwrap()),
            min_value: values[0],
        };
        Ok(PhiFunction {
            a,
            eval: Arc::new(phi),
            certificate,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn eval(&self, s: f64) -> f64 {
        (self.eval)(s)
    }

    pub fn certificate(&self) -> &MonotoneCertificate {
        &self.certificate
    }

    /// `∫_lo^hi ds/φ(s)`.
    pub fn reciprocal_integral(&self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return 0.0;
        }
        adaptive_simpson_rel(&|s: f64| 1.0 / self.eval(s), lo, hi, PANEL_TOL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum DivergenceVerdict {
    Diverges { partial: f64, upper_limit: f64 },
    Converges { estimate: f64 },
    /// Increments decay faster than `1/k` per doubling but never saturated.
    Inconclusive { partial: f64, decay_exponent: f64 },
}

impl DivergenceVerdict {
    pub fn diverges(&self) -> bool {
        matches!(self, DivergenceVerdict::Diverges { .. })
    }
}

const DIVERGENCE_THRESHOLD: f64 = 1e12;
const SATURATION: f64 = 1e-10;
const R_LIMIT: f64 = 1e300;
/// Decay exponents this close to the harmonic borderline count as divergent:
/// `φ = s log s` shows `q ≈ 1.0007` at the end of the representable range.
const HARMONIC_SLACK: f64 = 0.01;

/// Three-way numerical verdict on `∫_a^∞ ds/φ(s) = ∞`.
///
/// The partial integrals `I(R)` are accumulated over doublings `R = a + 2ᵏ L`.
/// Convergence is declared when a doubling changes `I` by less than `1e-10`
/// (the geometric tail of the increments is added to the estimate). Divergence
/// is declared when `I` exceeds `1e12`, when increments stop decreasing, or when
/// at the end of the representable range the increments decay no faster than
/// `1/k` (the harmonic borderline, e.g. `φ = s log s`). Anything else is
/// inconclusive.
pub fn check_divergence(phi: &PhiFunction) -> DivergenceVerdict {
    let a = phi.a();
    let scale = a.abs().max(1.0);
    let mut partial = phi.reciprocal_integral(a, a + scale);
    let mut increments: Vec<f64> = Vec::new();
    let mut r_prev = a + scale;
    let mut k = 1;
    loop {
        let r = a + scale * 2f64.powi(k);
        if !(r < R_LIMIT) {
            break;
        }
        let delta = phi.reciprocal_integral(r_prev, r);
        partial += delta;
        increments.push(delta);
        r_prev = r;
        k += 1;

        if partial > DIVERGENCE_THRESHOLD || !partial.is_finite() {
            return DivergenceVerdict::Diverges { partial, upper_limit: r };
        }
        let m = increments.len();
        if m >= 3 && delta < SATURATION * partial.abs().max(1.0) {
            let prev = increments[m - 2];
            if delta < prev {
                let rho = delta / prev;
                let tail = delta * rho / (1.0 - rho);
                return DivergenceVerdict::Converges { estimate: partial + tail };
            }
        }
        if m >= 64 && delta >= increments[m - 33] * (1.0 - 1e-9) {
            return DivergenceVerdict::Diverges { partial, upper_limit: r };
        }
    }

    let m = increments.len();
    if m < 4 {
        return DivergenceVerdict::Inconclusive {
            partial,
            decay_exponent: f64::NAN,
        };
    }
    // Δ_k ~ k^{−q}: q = log₂(Δ_{K/2} / Δ_K)
    let q = (increments[m / 2 - 1] / increments[m - 1]).log2() / ((m as f64) / (m / 2) as f64).log2();
    if q <= 1.0 + HARMONIC_SLACK {
        DivergenceVerdict::Diverges { partial, upper_limit: r_prev }
    } else {
        DivergenceVerdict::Inconclusive {
            partial,
            decay_exponent: q,
        }
    }
}

/// `v₀(t)` with `v₀' = φ(v₀)`, `v₀(0) = w₀`, stored as a table of knots
/// `(wᵢ, t(wᵢ))` with `t(wᵢ₊₁) − t(wᵢ) ≤ ¼`.
#[derive(Debug, Clone)]
pub struct DominatingSolution {
    phi: PhiFunction,
    knots_w: Vec<f64>,
    knots_t: Vec<f64>,
}

const MAX_KNOTS: usize = 1_000_000;

/// Builds the dominating solution on `[0, t_max]`; later times extend the
/// knot table on demand during evaluation.
pub fn solve_dominating(phi: &PhiFunction, v0_init: f64, t_max: f64) -> Result<DominatingSolution> {
    if !(v0_init >= phi.a()) {
        return Err(Error::HypothesisViolated(format!(
            "initial value {v0_init} is below a = {}",
            phi.a()
        )));
    }
    match check_divergence(phi) {
        DivergenceVerdict::Diverges { .. } => {}
        other => {
            return Err(Error::HypothesisViolated(format!(
                "∫ ds/φ is not shown to diverge ({other:?}); v₀ may escape in finite time"
            )))
        }
    }
    let mut sol = DominatingSolution {
        phi: phi.clone(),
        knots_w: vec![v0_init],
        knots_t: vec![0.0],
    };
    while *sol.knots_t.last().unwrap() < t_max {
        sol.push_knot()?;
    }
    Ok(sol)
}

impl DominatingSolution {
    fn push_knot(&mut self) -> Result<()> {
        if self.knots_w.len() >= MAX_KNOTS {
            return Err(Error::HypothesisViolated("dominating solution needs too many knots".into()));
        }
        let w = *self.knots_w.last().unwrap();
        let t = *self.knots_t.last().unwrap();
        let next = w + 0.25 * self.phi.eval(w);
        if !next.is_finite() || next <= w {
            return Err(Error::NonFinite {
                what: "dominating solution",
            });
        }
        let dt = self.phi.reciprocal_integral(w, next);
        self.knots_w.push(next);
        self.knots_t.push(t + dt);
        Ok(())
    }

    pub fn phi(&self) -> &PhiFunction {
        &self.phi
    }

    pub fn initial(&self) -> f64 {
        self.knots_w[0]
    }

    /// `t(w) = ∫_{v₀(0)}^{w} ds/φ(s)` for `w ≥ v₀(0)`.
    pub fn t_of(&self, w: f64) -> Result<f64> {
        if w < self.knots_w[0] {
            return Err(Error::OutOfRange {
                t: w,
                lo: self.knots_w[0],
                hi: f64::INFINITY,
            });
        }
        let i = self.knots_w.partition_point(|&k| k <= w) - 1;
        Ok(self.knots_t[i] + self.phi.reciprocal_integral(self.knots_w[i], w))
    }

    /// `v₀(t)` for `t ≥ 0`.
    pub fn value(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::OutOfRange {
                t,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        if t == 0.0 {
            return Ok(self.knots_w[0]);
        }
        if t > *self.knots_t.last().unwrap() {
            let mut extended = self.clone();
            while *extended.knots_t.last().unwrap() < t {
                extended.push_knot()?;
            }
            return extended.value(t);
        }
        let i = self.knots_t.partition_point(|&k| k <= t) - 1;
        if self.knots_t[i] == t {
            return Ok(self.knots_w[i]);
        }
        Ok(self.invert_segment(i, t - self.knots_t[i]))
    }

    /// `φ(v₀(t))`, the exact derivative of `v₀`.
    pub fn derivative(&self, t: f64) -> Result<f64> {
        Ok(self.phi.eval(self.value(t)?))
    }

    /// Solves `∫_{wᵢ}^{w} ds/φ = dt` on the knot segment by safeguarded Newton.
    fn invert_segment(&self, i: usize, dt: f64) -> f64 {
        let w0 = self.knots_w[i];
        let (mut lo, mut hi) = (w0, self.knots_w[i + 1]);
        let seg = self.knots_t[i + 1] - self.knots_t[i];
        let mut w = w0 + (hi - lo) * (dt / seg);
        for _ in 0..100 {
            let g = self.phi.reciprocal_integral(w0, w) - dt;
            if g == 0.0 {
                return w;
            }
            if g > 0.0 {
                hi = w;
            } else {
                lo = w;
            }
            let newton = w - g * self.phi.eval(w);
            if (newton - w).abs() <= 4.0 * f64::EPSILON * w.abs().max(1.0) {
                return newton.clamp(lo, hi);
            }
            w = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        w
    }
}

/// Outcome of checking the comparison hypotheses and conclusion on samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub samples: usize,
    /// `v(0) ≤ v₀(0)`.
    pub initial_ok: bool,
    /// `min (v(t) − a)`.
    pub floor_margin: f64,
    /// `min (v(0) + ∫₀ᵗ φ(v) − v(t))`, trapezoid rule on the samples.
    pub integral_margin: f64,
    /// First sample time where the integral hypothesis fails, if any.
    pub hypothesis_violation_at: Option<f64>,
    /// `min (v₀(t) − v(t))`.
    pub margin: f64,
    pub margin_at: f64,
    pub hypotheses_hold: bool,
    pub conclusion_holds: bool,
    pub phi_samples: usize,
}

/// Relative slack for the quadrature-based hypothesis check.
const HYPOTHESIS_SLACK: f64 = 1e-9;
/// Relative slack for roundoff in the pointwise conclusion.
const CONCLUSION_SLACK: f64 = 1e-12;

/// Checks `a ≤ v(t) ≤ v(0) + ∫₀ᵗ φ(v)` and `v(t) ≤ v₀(t)` on samples `(tᵢ, vᵢ)`
/// with `t₀ = 0`.
pub fn verify_envelope(t: &[f64], v: &[f64], phi: &PhiFunction, v0: &DominatingSolution) -> Result<EnvelopeReport> {
    if t.len() != v.len() || t.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: t.len(),
            got: v.len(),
        });
    }
    let phis: Vec<f64> = v.iter().map(|&x| phi.eval(x)).collect();
    let integral = cumulative_trapezoid(t, &phis);

    let mut floor_margin = f64::INFINITY;
    let mut integral_margin = f64::INFINITY;
    let mut violation = None;
    let mut margin = f64::INFINITY;
    let mut margin_at = t[0];
    let mut conclusion_holds = true;
    for i in 0..t.len() {
        floor_margin = floor_margin.min(v[i] - phi.a());
        let im = v[0] + integral[i] - v[i];
        integral_margin = integral_margin.min(im);
        if im < -HYPOTHESIS_SLACK * v[i].abs().max(1.0) && violation.is_none() {
            violation = Some(t[i]);
        }
        let dom = v0.value(t[i])?;
        let cm = dom - v[i];
        if cm < margin {
            margin = cm;
            margin_at = t[i];
        }
        if cm < -CONCLUSION_SLACK * dom.abs().max(1.0) {
            conclusion_holds = false;
        }
    }
    let initial_ok = v[0] <= v0.initial();
    Ok(EnvelopeReport {
        samples: t.len(),
        initial_ok,
        floor_margin,
        integral_margin,
        hypothesis_violation_at: violation,
        margin,
        margin_at,
        hypotheses_hold: initial_ok && floor_margin >= 0.0 && violation.is_none(),
        conclusion_holds,
        phi_samples: phi.certificate().samples,
    })
}
