//! The force equation `D/dt γ̇ = F γ̇ − ∇V` in chart components, the
//! self-adjoint part of `F`, and the energy bookkeeping used by the Gronwall
//! envelope.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fd;
use crate::geometry::{quadratic_form, ChartManifold};

pub type ScalarField = dyn Fn(&[f64], f64) -> f64 + Send + Sync;
pub type CovectorField = dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync;
pub type TensorField = dyn Fn(&[f64], f64) -> DMatrix<f64> + Send + Sync;

/// Potential `V(x, t)` with optional closed-form derivatives, and an optional
/// `(1,1)` tensor field `F(x, t)` acting on velocities.
#[derive(Clone)]
pub struct ForceSystem {
    potential: Arc<ScalarField>,
    potential_dx: Option<Arc<CovectorField>>,
    potential_dt: Option<Arc<ScalarField>>,
    tensor: Option<Arc<TensorField>>,
}

impl fmt::Debug for ForceSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForceSystem")
            .field("analytic_dx", &self.potential_dx.is_some())
            .field("analytic_dt", &self.potential_dt.is_some())
            .field("tensor", &self.tensor.is_some())
            .finish()
    }
}

fn finite(value: f64, what: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { what })
    }
}

impl ForceSystem {
    pub fn new<F>(potential: F) -> Self
    where
        F: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        ForceSystem {
            potential: Arc::new(potential),
            potential_dx: None,
            potential_dt: None,
            tensor: None,
        }
    }

    /// `V ≡ 0`, `F ≡ 0`: trajectories are geodesics.
    pub fn free(n: usize) -> Self {
        ForceSystem::new(|_, _| 0.0)
            .with_gradient(move |_, _| vec![0.0; n])
            .with_time_derivative(|_, _| 0.0)
    }

    pub fn with_gradient<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64], f64) -> Vec<f64> + Send + Sync + 'static,
    {
        self.potential_dx = Some(Arc::new(f));
        self
    }

    pub fn with_time_derivative<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        self.potential_dt = Some(Arc::new(f));
        self
    }

    pub fn with_tensor<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64], f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.tensor = Some(Arc::new(f));
        self
    }

    pub fn has_tensor(&self) -> bool {
        self.tensor.is_some()
    }

    pub fn potential(&self, x: &[f64], t: f64) -> Result<f64> {
        finite((self.potential)(x, t), "potential")
    }

    /// `∂V/∂x` as a covector, closed form when available.
    pub fn potential_dx(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let dv = match &self.potential_dx {
            Some(f) => f(x, t),
            None => self.potential_dx_fd(x, t),
        };
        if dv.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: dv.len(),
            });
        }
        if dv.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "potential gradient",
            });
        }
        Ok(dv)
    }

    pub fn potential_dx_fd(&self, x: &[f64], t: f64) -> Vec<f64> {
        fd::gradient(|p| (self.potential)(p, t), x)
    }

    /// `∂V/∂t`, closed form when available.
    pub fn potential_dt(&self, x: &[f64], t: f64) -> Result<f64> {
        let v = match &self.potential_dt {
            Some(f) => f(x, t),
            None => self.potential_dt_fd(x, t),
        };
        finite(v, "potential time derivative")
    }

    pub fn potential_dt_fd(&self, x: &[f64], t: f64) -> f64 {
        fd::central(|s| (self.potential)(x, s), t, fd::step_for(t))
    }

    /// `F(x, t)` in chart components, `None` when `F ≡ 0`.
    pub fn tensor_at(&self, x: &[f64], t: f64) -> Result<Option<DMatrix<f64>>> {
        match &self.tensor {
            None => Ok(None),
            Some(f) => {
                let m = f(x, t);
                if m.nrows() != x.len() || m.ncols() != x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: x.len(),
                        got: m.nrows(),
                    });
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { what: "tensor F" });
                }
                Ok(Some(m))
            }
        }
    }
}

/// Acceleration `ẍᵏ = −Γᵏᵢⱼ ẋⁱ ẋʲ + (F ẋ)ᵏ − (∇V)ᵏ`.
pub fn rhs_e(m: &ChartManifold, fs: &ForceSystem, t: f64, x: &[f64], xdot: &[f64]) -> Result<Vec<f64>> {
    let (_, chol) = m.metric_factor(x)?;
    let gamma = m.christoffel_at(x)?;
    let dv = fs.potential_dx(x, t)?;
    let grad = chol.solve(&nalgebra::DVector::from_column_slice(&dv));
    let quad = gamma.contract(xdot);
    let mut acc: Vec<f64> = (0..x.len()).map(|k| -quad[k] - grad[k]).collect();
    if let Some(f) = fs.tensor_at(x, t)? {
        for k in 0..x.len() {
            for j in 0..x.len() {
                acc[k] += f[(k, j)] * xdot[j];
            }
        }
    }
    Ok(acc)
}

/// `S = ½(F + G⁻¹FᵀG)`, the `G`-self-adjoint part of `F`.
pub fn self_adjoint_part_of(g: &DMatrix<f64>, f: &DMatrix<f64>) -> DMatrix<f64> {
    let adj = g
        .clone()
        .cholesky()
        .map(|c| c.solve(&(f.transpose() * g)))
        .unwrap_or_else(|| g.clone().try_inverse().expect("metric must be invertible") * f.transpose() * g);
    (f + adj) * 0.5
}

/// Self-adjoint part of `F` at `(x, t)`; the zero matrix when `F ≡ 0`.
pub fn self_adjoint_part(m: &ChartManifold, fs: &ForceSystem, x: &[f64], t: f64) -> Result<DMatrix<f64>> {
    let g = m.metric_at(x)?;
    Ok(match fs.tensor_at(x, t)? {
        Some(f) => self_adjoint_part_of(&g, &f),
        None => DMatrix::zeros(m.dim(), m.dim()),
    })
}

/// Extreme Rayleigh quotients `g(v, S v)/g(v, v)` at one point.
fn spectral_extremes(m: &ChartManifold, fs: &ForceSystem, x: &[f64], t: f64) -> Result<(f64, f64)> {
    let (g, chol) = m.metric_factor(x)?;
    let f = match fs.tensor_at(x, t)? {
        Some(f) => f,
        None => return Ok((0.0, 0.0)),
    };
    // symmetric form ½(GF + FᵀG) = G·S, reduced with G = LLᵀ
    let sym = (&g * &f + f.transpose() * &g) * 0.5;
    let l = chol.l();
    let left = l
        .solve_lower_triangular(&sym)
        .ok_or_else(|| Error::EigFailure { point: x.to_vec() })?;
    let reduced = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::EigFailure { point: x.to_vec() })?;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(reduced, f64::EPSILON, 0)
        .ok_or_else(|| Error::EigFailure { point: x.to_vec() })?;
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::EigFailure { point: x.to_vec() });
    }
    Ok((lo, hi))
}

/// `(S_inf(t), S_sup(t))` over the sample grid.
pub fn operator_bounds(m: &ChartManifold, fs: &ForceSystem, grid: &[Vec<f64>], t: f64) -> Result<(f64, f64)> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("operator bounds need a nonempty grid".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in grid {
        let (a, b) = spectral_extremes(m, fs, p, t)?;
        lo = lo.min(a);
        hi = hi.max(b);
    }
    Ok((lo, hi))
}

/// Sampled `S_inf`, `S_sup` on a time grid. These are extremes over the spatial
/// sample grid only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorBounds {
    pub t: Vec<f64>,
    pub s_inf: Vec<f64>,
    pub s_sup: Vec<f64>,
    pub grid_points: usize,
}

impl OperatorBounds {
    pub fn sample(m: &ChartManifold, fs: &ForceSystem, grid: &[Vec<f64>], t_grid: &[f64]) -> Result<Self> {
        let mut s_inf = Vec::with_capacity(t_grid.len());
        let mut s_sup = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            let (lo, hi) = operator_bounds(m, fs, grid, t)?;
            s_inf.push(lo);
            s_sup.push(hi);
        }
        Ok(OperatorBounds {
            t: t_grid.to_vec(),
            s_inf,
            s_sup,
            grid_points: grid.len(),
        })
    }

    /// `max_t ‖S(t)‖ = max_t max(|S_sup|, |S_inf|)`.
    pub fn norm_bound(&self) -> f64 {
        self.s_inf
            .iter()
            .zip(&self.s_sup)
            .map(|(a, b)| a.abs().max(b.abs()))
            .fold(0.0, f64::max)
    }

    /// `max_t S_sup(t)`.
    pub fn upper_bound(&self) -> f64 {
        self.s_sup.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max_t −S_inf(t)`.
    pub fn lower_bound(&self) -> f64 {
        self.s_inf.iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Constants of the energy estimate on `[−T, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyFrame {
    pub horizon: f64,
    pub a_t: f64,
    pub b_t: f64,
    pub n_t: f64,
    pub a_t_star: f64,
}

impl EnergyFrame {
    /// `A_T* = 2 N_T + A_T`, which dominates `N_T u + A_T (V − B_T)` by `A_T* v`
    /// since `u ≤ 2v` and `V − B_T ≤ v`. Both constants are clamped at zero.
    pub fn new(horizon: f64, a_t: f64, b_t: f64, n_t: f64) -> Self {
        let a_t = a_t.max(0.0);
        let n_t = n_t.max(0.0);
        EnergyFrame {
            horizon,
            a_t,
            b_t,
            n_t,
            a_t_star: 2.0 * n_t + a_t,
        }
    }

    /// `A_T = max α₀`, `B_T = min β₀ − 1` over the time samples.
    pub fn from_bounds(
        horizon: f64,
        alpha0: impl Fn(f64) -> f64,
        beta0: impl Fn(f64) -> f64,
        t_grid: &[f64],
        n_t: f64,
    ) -> Self {
        let a_t = t_grid.iter().map(|&t| alpha0(t)).fold(f64::NEG_INFINITY, f64::max);
        let b_t = t_grid.iter().map(|&t| beta0(t)).fold(f64::INFINITY, f64::min) - 1.0;
        EnergyFrame::new(horizon, a_t, b_t, n_t)
    }
}

/// `½ g(ẋ, ẋ) + V(x, t)`.
pub fn mechanical_energy(m: &ChartManifold, fs: &ForceSystem, t: f64, x: &[f64], xdot: &[f64]) -> Result<f64> {
    Ok(0.5 * m.norm_sq(x, xdot)? + fs.potential(x, t)?)
}

/// `v = ½ g(ẋ, ẋ) + V(x, t) − B_T`.
pub fn energy_v(
    m: &ChartManifold,
    fs: &ForceSystem,
    frame: &EnergyFrame,
    t: f64,
    x: &[f64],
    xdot: &[f64],
) -> Result<f64> {
    if t.abs() > frame.horizon * (1.0 + 1e-12) {
        return Err(Error::OutOfRange {
            t,
            lo: -frame.horizon,
            hi: frame.horizon,
        });
    }
    Ok(mechanical_energy(m, fs, t, x, xdot)? - frame.b_t)
}

/// Exact `dv/dt` along solutions: `g(S ẋ, ẋ) + ∂V/∂t`.
pub fn energy_derivative_identity(
    m: &ChartManifold,
    fs: &ForceSystem,
    t: f64,
    x: &[f64],
    xdot: &[f64],
) -> Result<f64> {
    let dvdt = fs.potential_dt(x, t)?;
    let work = match fs.tensor_at(x, t)? {
        None => 0.0,
        Some(f) => {
            let g = m.metric_at(x)?;
            let s = self_adjoint_part_of(&g, &f);
            quadratic_form(&(&g * s), xdot)
        }
    };
    Ok(work + dvdt)
}
