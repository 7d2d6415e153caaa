//! Generalized plane waves `g = g₀ + 2 du dv + H(x, u) du²` on `M₀ × ℝ²`.
//!
//! Along a geodesic `u̇ = Δ` is constant, the base part solves the force
//! equation with potential `−(Δ²/2) H(x, u₀ + Δt)`, and `v` is recovered from
//!
//! ```text
//! v̈ = −Δ ⟨dH, ẋ⟩ − ½ ∂H/∂u Δ²,
//! ```
//!
//! integrated alongside the base. Conservation of `E = g(γ′, γ′)`, i.e.
//! `v̇ = (E − g₀(ẋ, ẋ) − H Δ²) / (2Δ)`, is then an independent check.
//!
//! [`full_geodesic_oracle`] integrates the geodesic equations of the full
//! Lorentzian metric independently and is used to validate the reduction.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dynamics::ForceSystem;
use crate::error::{Error, Result};
use crate::fd;
use crate::geometry::ChartManifold;
use crate::hypotheses::{certify_wave, BoundData, Claim, CompletenessCertificate};
use crate::integrate::{
    integrate, integrate_system, Direction, ForceEquation, IntegratorConfig, Outcome, SecondOrderSystem, StepRecord, Trajectory,
};

/// Base manifold plus the profile `H(x, u)`, stored as a [`ForceSystem`] whose
/// time argument is `u` (so `potential_dt` is `∂H/∂u`).
#[derive(Debug, Clone)]
pub struct GpwSpacetime {
    pub base: ChartManifold,
    pub h: ForceSystem,
    pub nonzero_witness: (Vec<f64>, f64),
}

impl GpwSpacetime {
    /// Fails with [`Error::ZeroProfile`] unless `H(witness) ≠ 0`.
    pub fn new(base: ChartManifold, h: ForceSystem, witness: (Vec<f64>, f64)) -> Result<Self> {
        if witness.0.len() != base.dim() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                got: witness.0.len(),
            });
        }
        if h.potential(&witness.0, witness.1)? == 0.0 {
            return Err(Error::ZeroProfile);
        }
        Ok(GpwSpacetime {
            base,
            h,
            nonzero_witness: witness,
        })
    }

    /// Searches a small fixed set of points for a witness of `H ≢ 0`.
    pub fn with_witness_search(base: ChartManifold, h: ForceSystem, probes: &[Vec<f64>]) -> Result<Self> {
        for u in [0.0, 1.0, -1.0, 0.5, 2.0] {
            for p in probes {
                if base.contains(p) && h.potential(p, u).is_ok_and(|v| v != 0.0) {
                    return GpwSpacetime::new(base, h, (p.clone(), u));
                }
            }
        }
        Err(Error::ZeroProfile)
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// `(n+2)×(n+2)` metric in coordinates `(x, u, v)`.
    pub fn full_metric(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let g0 = self.base.metric_at(&z[..n])?;
        let h = self.h.potential(&z[..n], z[n])?;
        let mut g = DMatrix::zeros(n + 2, n + 2);
        g.view_mut((0, 0), (n, n)).copy_from(&g0);
        g[(n, n)] = h;
        g[(n, n + 1)] = 1.0;
        g[(n + 1, n)] = 1.0;
        Ok(g)
    }

    /// `g(ż, ż)` in full coordinates.
    pub fn interval(&self, z: &[f64], zdot: &[f64]) -> Result<f64> {
        let g = self.full_metric(z)?;
        Ok(crate::geometry::quadratic_form(&g, zdot))
    }

    /// The base force system for `u̇ = Δ`: `V(x, t) = −(Δ²/2) H(x, u₀ + Δt)`.
    pub fn reduced_forces(&self, u0: f64, delta: f64) -> ForceSystem {
        let c = -0.5 * delta * delta;
        let (hv, hx, ht) = (self.h.clone(), self.h.clone(), self.h.clone());
        ForceSystem::new(move |x, t| c * hv.potential(x, u0 + delta * t).unwrap_or(f64::NAN))
            .with_gradient(move |x, t| match hx.potential_dx(x, u0 + delta * t) {
                Ok(d) => d.into_iter().map(|v| c * v).collect(),
                Err(_) => vec![f64::NAN; x.len()],
            })
            .with_time_derivative(move |x, t| c * delta * ht.potential_dt(x, u0 + delta * t).unwrap_or(f64::NAN))
    }
}

pub type ProfileFn = dyn Fn(f64) -> f64 + Send + Sync;

/// `H(x, y, u) = f₁(u) x² − f₂(u) y² + 2 f(u) x y` on Euclidean `ℝ²`.
#[derive(Clone)]
pub struct PlaneWave {
    pub f1: Arc<ProfileFn>,
    pub f2: Arc<ProfileFn>,
    pub f: Arc<ProfileFn>,
    /// `f₁ ≡ f₂` on the sampled `u` values.
    pub gravitational: bool,
}

impl fmt::Debug for PlaneWave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlaneWave")
            .field("gravitational", &self.gravitational)
            .finish()
    }
}

pub fn plane_wave_h<A, B, C>(f1: A, f2: B, f: C) -> PlaneWave
where
    A: Fn(f64) -> f64 + Send + Sync + 'static,
    B: Fn(f64) -> f64 + Send + Sync + 'static,
    C: Fn(f64) -> f64 + Send + Sync + 'static,
{
    let gravitational = (0..=200).all(|i| {
        let u = -10.0 + 0.1 * i as f64;
        let (a, b) = (f1(u), f2(u));
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
    });
    PlaneWave {
        f1: Arc::new(f1),
        f2: Arc::new(f2),
        f: Arc::new(f),
        gravitational,
    }
}

impl PlaneWave {
    pub fn eval(&self, x: f64, y: f64, u: f64) -> f64 {
        (self.f1)(u) * x * x - (self.f2)(u) * y * y + 2.0 * (self.f)(u) * x * y
    }

    /// `H` as a force system with closed-form `∂H/∂x`; `∂H/∂u` differentiates
    /// the profiles numerically.
    pub fn h_system(&self) -> ForceSystem {
        let (a, b) = (self.clone(), self.clone());
        let c = self.clone();
        ForceSystem::new(move |p, u| a.eval(p[0], p[1], u))
            .with_gradient(move |p, u| {
                let (f1, f2, f) = ((b.f1)(u), (b.f2)(u), (b.f)(u));
                vec![2.0 * f1 * p[0] + 2.0 * f * p[1], -2.0 * f2 * p[1] + 2.0 * f * p[0]]
            })
            .with_time_derivative(move |p, u| {
                let h = fd::step_for(u);
                let d = |g: &Arc<ProfileFn>| fd::central(|s| g(s), u, h);
                d(&c.f1) * p[0] * p[0] - d(&c.f2) * p[1] * p[1] + 2.0 * d(&c.f) * p[0] * p[1]
            })
    }

    pub fn spacetime(&self) -> Result<GpwSpacetime> {
        GpwSpacetime::with_witness_search(
            ChartManifold::euclidean(2),
            self.h_system(),
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeodesicInitialData {
    pub x0: Vec<f64>,
    pub xdot0: Vec<f64>,
    pub u0: f64,
    /// `Δ = u̇`, conserved.
    pub udot0: f64,
    pub v0: f64,
    pub vdot0: f64,
}

impl GeodesicInitialData {
    pub fn z0(&self) -> Vec<f64> {
        let mut z = self.x0.clone();
        z.extend([self.u0, self.v0]);
        z
    }

    pub fn zdot0(&self) -> Vec<f64> {
        let mut z = self.xdot0.clone();
        z.extend([self.udot0, self.vdot0]);
        z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CausalCharacter {
    Timelike,
    Null,
    Spacelike,
}

/// Reduced geodesic: base trajectory, affine `u`, and `v` sampled at the
/// base trajectory's accepted steps.
#[derive(Debug, Clone)]
pub struct SplitGeodesic {
    pub base_trajectory: Trajectory,
    pub u0: f64,
    pub delta: f64,
    pub v: Vec<f64>,
    pub vdot: Vec<f64>,
    pub vddot: Vec<f64>,
    pub e_const: f64,
    pub outcome: Outcome,
}

/// Full state `(z, ż)` in coordinates `(x, u, v)`.
pub type FullState = (Vec<f64>, Vec<f64>);

impl SplitGeodesic {
    pub fn times(&self) -> Vec<f64> {
        self.base_trajectory.times().collect()
    }

    pub fn u_at(&self, t: f64) -> f64 {
        self.u0 + self.delta * t
    }

    pub fn causal_character(&self) -> CausalCharacter {
        let scale = 1e-12;
        if self.e_const < -scale {
            CausalCharacter::Timelike
        } else if self.e_const > scale {
            CausalCharacter::Spacelike
        } else {
            CausalCharacter::Null
        }
    }

    /// Full state at accepted step `i`.
    pub fn state_at(&self, i: usize) -> FullState {
        let s = &self.base_trajectory.steps[i];
        let mut z = s.x.clone();
        z.extend([self.u_at(s.t), self.v[i]]);
        let mut zd = s.xdot.clone();
        zd.extend([self.delta, self.vdot[i]]);
        (z, zd)
    }

    /// Full state at any `t` in range, by Hermite interpolation.
    pub fn sample(&self, t: f64) -> Result<FullState> {
        let (x, xdot) = self.base_trajectory.sample(t)?;
        let steps = &self.base_trajectory.steps;
        let idx = steps.partition_point(|s| s.t < t);
        let (v, vdot) = if idx < steps.len() && steps[idx].t == t {
            (self.v[idx], self.vdot[idx])
        } else {
            let (a, b) = (idx - 1, idx);
            let h = steps[b].t - steps[a].t;
            let th = (t - steps[a].t) / h;
            (
                crate::integrate::hermite(th, h, self.v[a], self.vdot[a], self.v[b], self.vdot[b]),
                crate::integrate::hermite(th, h, self.vdot[a], self.vddot[a], self.vdot[b], self.vddot[b]),
            )
        };
        let mut z = x;
        z.extend([self.u_at(t), v]);
        let mut zd = xdot;
        zd.extend([self.delta, vdot]);
        Ok((z, zd))
    }

    /// Largest relative deviation of `g(γ′, γ′)` from `E` over the accepted steps.
    pub fn interval_drift(&self, st: &GpwSpacetime) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for i in 0..self.v.len() {
            let (z, zd) = self.state_at(i);
            let e = st.interval(&z, &zd)?;
            let scale = self.e_const.abs().max(zd.iter().map(|c| c * c).sum::<f64>()).max(f64::MIN_POSITIVE);
            worst = worst.max((e - self.e_const).abs() / scale);
        }
        Ok(worst)
    }

    /// CSV with header `t,u,v,x1..xn,xdot1..xdotn`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.base_trajectory.dim();
        let mut header = vec!["t".to_string(), "u".into(), "v".into()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("xdot{i}")));
        writeln!(out, "{}", header.join(","))?;
        for (i, s) in self.base_trajectory.steps.iter().enumerate() {
            let mut row = vec![s.t.to_string(), self.u_at(s.t).to_string(), self.v[i].to_string()];
            row.extend(s.x.iter().map(f64::to_string));
            row.extend(s.xdot.iter().map(f64::to_string));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn check_init(st: &GpwSpacetime, init: &GeodesicInitialData) -> Result<()> {
    let n = st.dim();
    if init.x0.len() != n || init.xdot0.len() != n {
        return Err(Error::InvalidInit(format!(
            "expected {n} base components, got {} and {}",
            init.x0.len(),
            init.xdot0.len()
        )));
    }
    let scalars = [init.u0, init.udot0, init.v0, init.vdot0];
    if scalars.iter().chain(&init.x0).chain(&init.xdot0).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInit("initial data must be finite".into()));
    }
    if !st.base.contains(&init.x0) {
        return Err(Error::InvalidInit(format!("initial point {:?} violates the chart guard", init.x0)));
    }
    Ok(())
}

/// Integrates the reduced system forward in the affine parameter.
pub fn reduce_geodesic(st: &GpwSpacetime, init: &GeodesicInitialData, cfg: &IntegratorConfig) -> Result<SplitGeodesic> {
    check_init(st, init)?;
    let delta = init.udot0;
    let e_const = st.interval(&init.z0(), &init.zdot0())?;

    if delta == 0.0 {
        let free = ForceSystem::free(st.dim());
        let tr = integrate(&st.base, &free, &init.x0, &init.xdot0, cfg, Direction::Forward)?;
        let v = tr.steps.iter().map(|s| init.v0 + init.vdot0 * s.t).collect();
        let k = tr.steps.len();
        return Ok(SplitGeodesic {
            outcome: tr.outcome,
            base_trajectory: tr,
            u0: init.u0,
            delta,
            v,
            vdot: vec![init.vdot0; k],
            vddot: vec![0.0; k],
            e_const,
        });
    }

    let forces = st.reduced_forces(init.u0, delta);
    let sys = Reduced {
        eq: ForceEquation::new(&st.base, &forces),
        st,
        u0: init.u0,
        delta,
    };
    let mut p = init.x0.clone();
    p.push(init.v0);
    let mut pd = init.xdot0.clone();
    pd.push(init.vdot0);
    let full = integrate_system(&sys, &p, &pd, cfg, Direction::Forward)?;
    let n = st.dim();
    let mut v = Vec::with_capacity(full.steps.len());
    let mut vdot = Vec::with_capacity(full.steps.len());
    let mut vddot = Vec::with_capacity(full.steps.len());
    let steps = full
        .steps
        .into_iter()
        .map(|s| {
            v.push(s.x[n]);
            vdot.push(s.xdot[n]);
            vddot.push(s.xddot[n]);
            StepRecord {
                t: s.t,
                x: s.x[..n].to_vec(),
                xdot: s.xdot[..n].to_vec(),
                xddot: s.xddot[..n].to_vec(),
            }
        })
        .collect();
    let tr = Trajectory {
        direction: full.direction,
        steps,
        outcome: full.outcome,
        stats: full.stats,
    };
    Ok(SplitGeodesic {
        outcome: tr.outcome,
        base_trajectory: tr,
        u0: init.u0,
        delta,
        v,
        vdot,
        vddot,
        e_const,
    })
}

/// Base force equation plus `v̈ = −Δ ⟨dH, ẋ⟩ − ½ ∂H/∂u Δ²` carried as one
/// extra coordinate; the speed watched for blow-up is the base speed.
struct Reduced<'a> {
    eq: ForceEquation<'a>,
    st: &'a GpwSpacetime,
    u0: f64,
    delta: f64,
}

impl SecondOrderSystem for Reduced<'_> {
    fn dim(&self) -> usize {
        self.st.dim() + 1
    }

    fn acceleration(&self, t: f64, x: &[f64], xdot: &[f64]) -> Result<Vec<f64>> {
        let n = self.st.dim();
        let mut acc = self.eq.acceleration(t, &x[..n], &xdot[..n])?;
        let u = self.u0 + self.delta * t;
        let dh = self.st.h.potential_dx(&x[..n], u)?;
        let hu = self.st.h.potential_dt(&x[..n], u)?;
        let dh_xdot: f64 = dh.iter().zip(&xdot[..n]).map(|(a, b)| a * b).sum();
        acc.push(-self.delta * dh_xdot - 0.5 * hu * self.delta * self.delta);
        Ok(acc)
    }

    fn speed(&self, t: f64, x: &[f64], xdot: &[f64]) -> Result<f64> {
        let n = self.st.dim();
        self.eq.speed(t, &x[..n], &xdot[..n])
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.st.base.contains(&x[..self.st.dim()])
    }
}

/// Geodesic equations of the full metric with Christoffel symbols from central
/// differences of the metric matrix; speeds are Euclidean in `(ẋ, u̇, v̇)`.
struct FullGeodesic<'a> {
    st: &'a GpwSpacetime,
}

impl FullGeodesic<'_> {
    fn christoffel(&self, z: &[f64]) -> Result<Vec<f64>> {
        let d = z.len();
        let g = self.st.full_metric(z)?;
        let ginv = g
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::NotPositiveDefinite {
                point: z.to_vec(),
                min_eigenvalue: 0.0,
            })?;
        // dg[l] = ∂_l g
        let mut dg = Vec::with_capacity(d);
        let mut zp = z.to_vec();
        for l in 0..d {
            let h = fd::step_for(z[l]);
            zp[l] = z[l] + h;
            let gp = self.st.full_metric(&zp)?;
            zp[l] = z[l] - h;
            let gm = self.st.full_metric(&zp)?;
            zp[l] = z[l];
            dg.push((gp - gm) / (2.0 * h));
        }
        let mut gamma = vec![0.0; d * d * d];
        for k in 0..d {
            for i in 0..d {
                for j in i..d {
                    let mut acc = 0.0;
                    for l in 0..d {
                        let c = dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)];
                        acc += ginv[(k, l)] * c;
                    }
                    gamma[(k * d + i) * d + j] = 0.5 * acc;
                    gamma[(k * d + j) * d + i] = 0.5 * acc;
                }
            }
        }
        Ok(gamma)
    }
}

impl SecondOrderSystem for FullGeodesic<'_> {
    fn dim(&self) -> usize {
        self.st.dim() + 2
    }

    fn acceleration(&self, _t: f64, z: &[f64], zdot: &[f64]) -> Result<Vec<f64>> {
        let d = z.len();
        let gamma = self.christoffel(z)?;
        Ok((0..d)
            .map(|k| {
                let mut acc = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        acc += gamma[(k * d + i) * d + j] * zdot[i] * zdot[j];
                    }
                }
                -acc
            })
            .collect())
    }

    fn speed(&self, _t: f64, _z: &[f64], zdot: &[f64]) -> Result<f64> {
        Ok(zdot.iter().map(|c| c * c).sum::<f64>().sqrt())
    }

    fn contains(&self, z: &[f64]) -> bool {
        self.st.base.contains(&z[..self.st.dim()])
    }
}

/// Direct integration in `(x, u, v)`; a validation path only.
pub fn full_geodesic_oracle(st: &GpwSpacetime, init: &GeodesicInitialData, cfg: &IntegratorConfig) -> Result<Trajectory> {
    check_init(st, init)?;
    integrate_system(&FullGeodesic { st }, &init.z0(), &init.zdot0(), cfg, Direction::Forward)
}

/// Premise checks of the plane-wave corollaries; `bd.t_grid` samples `u`.
pub fn classify_gpw_completeness(
    st: &GpwSpacetime,
    bd: &BoundData,
    anchor: &[f64],
    claims: &[Claim],
) -> Result<CompletenessCertificate> {
    certify_wave(&st.base, &st.h, bd, anchor, claims)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapEntry {
    pub init: GeodesicInitialData,
    pub outcome: Outcome,
}

/// Outcome of the reduced geodesic for each initial datum.
pub fn completeness_map(st: &GpwSpacetime, inits: &[GeodesicInitialData], cfg: &IntegratorConfig) -> Result<Vec<MapEntry>> {
    inits
        .iter()
        .map(|init| {
            reduce_geodesic(st, init, cfg).map(|sg| MapEntry {
                init: init.clone(),
                outcome: sg.outcome,
            })
        })
        .collect()
}

/// CSV with header `x1..xn,xdot1..xdotn,delta,outcome,t_star`; `t_star` is
/// empty unless the outcome is a suspected blow-up.
pub fn write_map_csv<W: Write>(entries: &[MapEntry], mut out: W) -> io::Result<()> {
    let n = entries.first().map_or(0, |e| e.init.x0.len());
    let mut header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    header.extend((1..=n).map(|i| format!("xdot{i}")));
    header.extend(["delta".into(), "outcome".into(), "t_star".into()]);
    writeln!(out, "{}", header.join(","))?;
    for e in entries {
        let mut row: Vec<String> = e.init.x0.iter().map(f64::to_string).collect();
        row.extend(e.init.xdot0.iter().map(f64::to_string));
        row.push(e.init.udot0.to_string());
        row.push(e.outcome.code().to_string());
        row.push(e.outcome.t_star().map_or(String::new(), |t| t.to_string()));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
