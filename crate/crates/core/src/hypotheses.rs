//! Sampled checks of the completeness premises and assembly of certificates.
//!
//! Every check is a minimum of a margin over a finite set of samples. A pass
//! means no sample violated the inequality; it is evidence, not proof.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::dynamics::{ForceSystem, OperatorBounds};
use crate::error::{Error, Result};
use crate::geometry::ChartManifold;

pub const CAVEAT: &str = "premises verified on sampled domain only";

/// Samples count as satisfying an inequality when the margin is at least
/// `−PASS_TOL` times the magnitude of the terms compared.
const PASS_TOL: f64 = 1e-12;

pub type TimeFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Scenario-supplied `α₀`, `β₀` and the sample grids.
#[derive(Clone)]
pub struct BoundData {
    pub alpha0: Arc<TimeFn>,
    pub beta0: Arc<TimeFn>,
    pub grid: Vec<Vec<f64>>,
    pub t_grid: Vec<f64>,
}

impl fmt::Debug for BoundData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundData")
            .field("grid_points", &self.grid.len())
            .field("t_grid", &self.t_grid)
            .finish()
    }
}

impl BoundData {
    pub fn new<A, B>(alpha0: A, beta0: B, grid: Vec<Vec<f64>>, t_grid: Vec<f64>) -> Result<Self>
    where
        A: Fn(f64) -> f64 + Send + Sync + 'static,
        B: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if grid.is_empty() || t_grid.is_empty() {
            return Err(Error::InvalidConfig("bound data needs nonempty spatial and time grids".into()));
        }
        let n = grid[0].len();
        if let Some(p) = grid.iter().find(|p| p.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: p.len(),
            });
        }
        Ok(BoundData {
            alpha0: Arc::new(alpha0),
            beta0: Arc::new(beta0),
            grid,
            t_grid,
        })
    }

    /// Rejects grids with points outside the chart.
    pub fn validate_in(&self, m: &ChartManifold) -> Result<()> {
        for p in &self.grid {
            if p.len() != m.dim() {
                return Err(Error::DimensionMismatch {
                    expected: m.dim(),
                    got: p.len(),
                });
            }
            if !m.contains(p) {
                return Err(Error::OutOfChart { point: p.clone() });
            }
        }
        Ok(())
    }

    /// `n` equispaced times on `[−T, T]` (`n ≥ 2`).
    pub fn symmetric_times(horizon: f64, n: usize) -> Vec<f64> {
        let n = n.max(2);
        (0..n)
            .map(|i| -horizon + 2.0 * horizon * i as f64 / (n - 1) as f64)
            .collect()
    }

    /// Tensor grid of `points` per axis on the box `[lo, hi]`.
    pub fn box_grid(lo: &[f64], hi: &[f64], points: usize) -> Vec<Vec<f64>> {
        let n = lo.len();
        let points = points.max(1);
        let axis = |d: usize, i: usize| {
            if points == 1 {
                0.5 * (lo[d] + hi[d])
            } else {
                lo[d] + (hi[d] - lo[d]) * i as f64 / (points - 1) as f64
            }
        };
        let total = points.pow(n as u32);
        (0..total)
            .map(|mut k| {
                (0..n)
                    .map(|d| {
                        let i = k % points;
                        k /= points;
                        axis(d, i)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Worst case of one sampled inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginReport {
    pub premise: String,
    pub passed: bool,
    /// Minimum of `rhs − lhs` over the samples; for operator bounds, the sampled bound.
    pub margin: f64,
    pub at_point: Vec<f64>,
    pub at_t: f64,
    pub samples: usize,
    /// The inequality depends on a premise that failed.
    pub dependent_failure: bool,
    pub note: Option<String>,
}

struct Worst {
    margin: f64,
    at_point: Vec<f64>,
    at_t: f64,
    samples: usize,
    violated: bool,
}

impl Worst {
    fn new() -> Self {
        Worst {
            margin: f64::INFINITY,
            at_point: Vec::new(),
            at_t: f64::NAN,
            samples: 0,
            violated: false,
        }
    }

    fn record(&mut self, margin: f64, scale: f64, p: &[f64], t: f64) {
        self.samples += 1;
        if !margin.is_finite() || margin < -PASS_TOL * scale.abs().max(1.0) {
            self.violated = true;
        }
        if margin < self.margin || (margin.is_nan() && !self.margin.is_nan()) {
            self.margin = margin;
            self.at_point = p.to_vec();
            self.at_t = t;
        }
    }

    fn report(self, premise: &str) -> MarginReport {
        MarginReport {
            premise: premise.to_string(),
            passed: !self.violated && self.samples > 0,
            margin: self.margin,
            at_point: self.at_point,
            at_t: self.at_t,
            samples: self.samples,
            dependent_failure: false,
            note: None,
        }
    }
}

/// `min (V(p,t) − β₀(t))` over grid × t_grid.
pub fn check_bounded_below(fs: &ForceSystem, bd: &BoundData) -> Result<MarginReport> {
    let mut w = Worst::new();
    for &t in &bd.t_grid {
        let beta = (bd.beta0)(t);
        for p in &bd.grid {
            let v = fs.potential(p, t)?;
            w.record(v - beta, v.abs().max(beta.abs()), p, t);
        }
    }
    Ok(w.report("V bounded below by beta0"))
}

/// Candidate constants for `‖S‖`, `S_sup` and `−S_inf` over the samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SBoundsReport {
    pub n_two_sided: f64,
    pub n_upper: f64,
    pub n_lower: f64,
    pub samples: usize,
    pub has_tensor: bool,
}

impl SBoundsReport {
    fn margin(&self, premise: &str, value: f64) -> MarginReport {
        MarginReport {
            premise: premise.to_string(),
            passed: value.is_finite(),
            margin: value,
            at_point: Vec::new(),
            at_t: f64::NAN,
            samples: self.samples,
            dependent_failure: false,
            note: self
                .has_tensor
                .then(|| "bound is a supremum over the sample grid only; the global bound in p is not verified".into()),
        }
    }
}

pub fn check_s_bounds(m: &ChartManifold, fs: &ForceSystem, bd: &BoundData) -> Result<SBoundsReport> {
    let ob = OperatorBounds::sample(m, fs, &bd.grid, &bd.t_grid)?;
    Ok(SBoundsReport {
        n_two_sided: ob.norm_bound(),
        n_upper: ob.upper_bound(),
        n_lower: ob.lower_bound(),
        samples: bd.grid.len() * bd.t_grid.len(),
        has_tensor: fs.has_tensor(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeSign {
    TwoSided,
    Forward,
    Backward,
}

/// `min (α₀(t)(V − β₀) − q)` with `q = |∂V/∂t|`, `∂V/∂t` or `−∂V/∂t`.
pub fn check_dvdt_bound(fs: &ForceSystem, bd: &BoundData, sign: TimeSign, bounded_below: bool) -> Result<MarginReport> {
    let mut w = Worst::new();
    for &t in &bd.t_grid {
        let alpha = (bd.alpha0)(t);
        let beta = (bd.beta0)(t);
        for p in &bd.grid {
            let v = fs.potential(p, t)?;
            let dt = fs.potential_dt(p, t)?;
            let q = match sign {
                TimeSign::TwoSided => dt.abs(),
                TimeSign::Forward => dt,
                TimeSign::Backward => -dt,
            };
            let rhs = alpha * (v - beta);
            w.record(rhs - q, rhs.abs().max(q.abs()), p, t);
        }
    }
    let name = match sign {
        TimeSign::TwoSided => "|dV/dt| <= alpha0 (V - beta0)",
        TimeSign::Forward => "dV/dt <= alpha0 (V - beta0)",
        TimeSign::Backward => "-dV/dt <= alpha0 (V - beta0)",
    };
    let mut r = w.report(name);
    r.dependent_failure = !bounded_below;
    if !bounded_below {
        r.passed = false;
        r.note = Some("depends on the failed lower bound of V".into());
    }
    Ok(r)
}

/// Result of the linear-growth test for `‖∇H‖`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub passed: bool,
    /// Largest `‖∇H‖ / (1 + d)` over all samples.
    pub max_ratio: f64,
    /// Largest (farthest-decile max) / (median-decile max) over time slices.
    pub worst_trend: f64,
    pub worst_t: f64,
    pub samples: usize,
}

const TREND_LIMIT: f64 = 2.0;

/// Proxy for "∇H grows at most linearly": per time slice, the largest ratio
/// `‖∇H‖_g / (1 + |x − anchor|)` among the farthest 10% of grid points must not
/// exceed twice the largest ratio among points ranked 50–60% by distance.
pub fn check_linear_growth_grad_h(
    m: &ChartManifold,
    h: &ForceSystem,
    bd: &BoundData,
    anchor: &[f64],
) -> Result<GrowthReport> {
    let mut order: Vec<(f64, usize)> = bd
        .grid
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = p.iter().zip(anchor).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            (d, i)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n = order.len();
    let far_start = (n * 9 / 10).min(n - 1);
    let med = (n / 2).min(n - 1)..((n * 6 / 10).max(n / 2 + 1)).min(n);

    let mut max_ratio: f64 = 0.0;
    let mut worst_trend: f64 = 0.0;
    let mut worst_t = bd.t_grid[0];
    let mut passed = true;
    for &t in &bd.t_grid {
        let mut ratios = vec![0.0; n];
        for &(d, i) in &order {
            let p = &bd.grid[i];
            let dh = h.potential_dx(p, t)?;
            let grad = m.gradient(p, &dh)?;
            let norm = grad.norm_sq(m)?.max(0.0).sqrt();
            ratios[i] = norm / (1.0 + d);
            max_ratio = max_ratio.max(ratios[i]);
        }
        let far = order[far_start..].iter().map(|&(_, i)| ratios[i]).fold(0.0, f64::max);
        let mid = order[med.clone()].iter().map(|&(_, i)| ratios[i]).fold(0.0, f64::max);
        let trend = if far == 0.0 {
            0.0
        } else if mid == 0.0 {
            f64::INFINITY
        } else {
            far / mid
        };
        if !(trend <= TREND_LIMIT) {
            passed = false;
        }
        if !(trend <= worst_trend) {
            worst_trend = trend;
            worst_t = t;
        }
    }
    Ok(GrowthReport {
        passed: passed && max_ratio.is_finite(),
        max_ratio,
        worst_trend,
        worst_t,
        samples: n * bd.t_grid.len(),
    })
}

impl GrowthReport {
    fn margin(&self) -> MarginReport {
        MarginReport {
            premise: "grad H grows at most linearly".into(),
            passed: self.passed,
            margin: TREND_LIMIT - self.worst_trend,
            at_point: Vec::new(),
            at_t: self.worst_t,
            samples: self.samples,
            dependent_failure: false,
            note: Some(format!(
                "max |grad H|/(1+d) = {}; far/median decile ratio = {}",
                self.max_ratio, self.worst_trend
            )),
        }
    }
}

/// Which completeness result a scenario attempts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    TheoremG01,
    ForwardProp,
    BackwardProp,
    Corollary2,
    Corollary3,
}

/// Strongest conclusion whose sampled premises all hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    CompleteByTheoremG01,
    CompleteByCorollary2,
    CompleteByCorollary3,
    ForwardCompleteByProp,
    BackwardCompleteByProp,
    Inconclusive,
}

impl Verdict {
    fn of(claim: Claim) -> Verdict {
        match claim {
            Claim::TheoremG01 => Verdict::CompleteByTheoremG01,
            Claim::ForwardProp => Verdict::ForwardCompleteByProp,
            Claim::BackwardProp => Verdict::BackwardCompleteByProp,
            Claim::Corollary2 => Verdict::CompleteByCorollary2,
            Claim::Corollary3 => Verdict::CompleteByCorollary3,
        }
    }

    fn rank(self) -> u8 {
        match self {
            Verdict::CompleteByTheoremG01 => 0,
            Verdict::CompleteByCorollary2 => 1,
            Verdict::CompleteByCorollary3 => 2,
            Verdict::ForwardCompleteByProp => 3,
            Verdict::BackwardCompleteByProp => 4,
            Verdict::Inconclusive => 5,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::CompleteByTheoremG01 => "CompleteByTheoremG01",
            Verdict::CompleteByCorollary2 => "CompleteByCorollary2",
            Verdict::CompleteByCorollary3 => "CompleteByCorollary3",
            Verdict::ForwardCompleteByProp => "ForwardCompleteByProp",
            Verdict::BackwardCompleteByProp => "BackwardCompleteByProp",
            Verdict::Inconclusive => "Inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub claim: Claim,
    pub checks: Vec<MarginReport>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletenessCertificate {
    pub verdict: Verdict,
    /// Every claim whose premises passed, strongest first.
    pub passing: Vec<Verdict>,
    pub evidence: Vec<Evidence>,
    pub caveat: &'static str,
}

fn completeness_check(m: &ChartManifold) -> MarginReport {
    MarginReport {
        premise: "base manifold declared complete".into(),
        passed: m.is_complete(),
        margin: if m.is_complete() { 0.0 } else { f64::NEG_INFINITY },
        at_point: Vec::new(),
        at_t: f64::NAN,
        samples: 0,
        dependent_failure: false,
        note: None,
    }
}

fn assemble(evidence: Vec<Evidence>) -> CompletenessCertificate {
    let mut passing: Vec<Verdict> = evidence
        .iter()
        .filter(|e| e.passed)
        .map(|e| Verdict::of(e.claim))
        .collect();
    passing.sort_by_key(|v| v.rank());
    passing.dedup();
    CompletenessCertificate {
        verdict: passing.first().copied().unwrap_or(Verdict::Inconclusive),
        passing,
        evidence,
        caveat: CAVEAT,
    }
}

fn evidence(claim: Claim, checks: Vec<MarginReport>) -> Evidence {
    let passed = checks.iter().all(|c| c.passed);
    Evidence { claim, checks, passed }
}

/// Premise checks for the trajectory results (two-sided theorem and the
/// one-sided propositions). Other claims are ignored here.
pub fn certify(m: &ChartManifold, fs: &ForceSystem, bd: &BoundData, claims: &[Claim]) -> Result<CompletenessCertificate> {
    bd.validate_in(m)?;
    let mut out = Vec::new();
    if claims
        .iter()
        .any(|c| matches!(c, Claim::TheoremG01 | Claim::ForwardProp | Claim::BackwardProp))
    {
        let below = check_bounded_below(fs, bd)?;
        let s = check_s_bounds(m, fs, bd)?;
        for &claim in claims {
            let (sb, sign) = match claim {
                Claim::TheoremG01 => (s.margin("||S|| bounded along finite times", s.n_two_sided), TimeSign::TwoSided),
                Claim::ForwardProp => (s.margin("S_sup upper bounded along finite times", s.n_upper), TimeSign::Forward),
                Claim::BackwardProp => (s.margin("S_inf lower bounded along finite times", s.n_lower), TimeSign::Backward),
                _ => continue,
            };
            let dvdt = check_dvdt_bound(fs, bd, sign, below.passed)?;
            out.push(evidence(claim, vec![completeness_check(m), sb, below.clone(), dvdt]));
        }
    }
    Ok(assemble(out))
}

/// Result of checking a plane-wave corollary's inequalities directly and through
/// the equivalent potential `V = −H/2`, `β₀^V = −β₀^H/2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveBoundChecks {
    pub direct: Vec<MarginReport>,
    pub mapped: Vec<MarginReport>,
    pub agree: bool,
}

/// `H ≤ β₀(u)` and `|∂H/∂u| ≤ α₀(u)(β₀(u) − H)` on grid × u-grid, and the same
/// premises of the two-sided trajectory theorem for `V = −H/2`.
pub fn check_wave_bounds(h: &ForceSystem, bd: &BoundData) -> Result<WaveBoundChecks> {
    let mut above = Worst::new();
    let mut rate = Worst::new();
    for &u in &bd.t_grid {
        let alpha = (bd.alpha0)(u);
        let beta = (bd.beta0)(u);
        for p in &bd.grid {
            let hv = h.potential(p, u)?;
            let hu = h.potential_dt(p, u)?;
            above.record(beta - hv, beta.abs().max(hv.abs()), p, u);
            let rhs = alpha * (beta - hv);
            rate.record(rhs - hu.abs(), rhs.abs().max(hu.abs()), p, u);
        }
    }
    let below_ok = !above.violated && above.samples > 0;
    let mut rate = rate.report("|dH/du| <= alpha0 (beta0 - H)");
    if !below_ok {
        rate.passed = false;
        rate.dependent_failure = true;
    }
    let direct = vec![above.report("H <= beta0"), rate];

    let hv = h.clone();
    let hd = h.clone();
    let v = ForceSystem::new(move |x, t| -0.5 * hv.potential(x, t).unwrap_or(f64::NAN))
        .with_time_derivative(move |x, t| -0.5 * hd.potential_dt(x, t).unwrap_or(f64::NAN));
    let beta_h = bd.beta0.clone();
    let mapped_bd = BoundData {
        alpha0: bd.alpha0.clone(),
        beta0: Arc::new(move |u| -0.5 * beta_h(u)),
        grid: bd.grid.clone(),
        t_grid: bd.t_grid.clone(),
    };
    let below = check_bounded_below(&v, &mapped_bd)?;
    let dvdt = check_dvdt_bound(&v, &mapped_bd, TimeSign::TwoSided, below.passed)?;
    let mapped = vec![below, dvdt];
    let agree = direct.iter().zip(&mapped).all(|(a, b)| a.passed == b.passed);
    Ok(WaveBoundChecks { direct, mapped, agree })
}

/// Premise checks for the plane-wave corollaries on base `m` with profile `H(x, u)`
/// (the time argument of `h` is `u`).
pub fn certify_wave(
    m: &ChartManifold,
    h: &ForceSystem,
    bd: &BoundData,
    anchor: &[f64],
    claims: &[Claim],
) -> Result<CompletenessCertificate> {
    bd.validate_in(m)?;
    let mut out = Vec::new();
    for &claim in claims {
        match claim {
            Claim::Corollary2 => {
                let wb = check_wave_bounds(h, bd)?;
                let mut checks = vec![completeness_check(m)];
                checks.extend(wb.direct);
                let mut consistency = MarginReport {
                    premise: "agreement with the trajectory theorem for V = -H/2".into(),
                    passed: wb.agree,
                    margin: if wb.agree { 0.0 } else { f64::NEG_INFINITY },
                    at_point: Vec::new(),
                    at_t: f64::NAN,
                    samples: 0,
                    dependent_failure: false,
                    note: None,
                };
                consistency.note = Some(format!(
                    "mapped margins: {}",
                    wb.mapped.iter().map(|r| r.margin.to_string()).collect::<Vec<_>>().join(", ")
                ));
                checks.push(consistency);
                out.push(evidence(claim, checks));
            }
            Claim::Corollary3 => {
                let g = check_linear_growth_grad_h(m, h, bd, anchor)?;
                out.push(evidence(claim, vec![completeness_check(m), g.margin()]));
            }
            _ => {}
        }
    }
    Ok(assemble(out))
}
