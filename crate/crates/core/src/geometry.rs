//! Riemannian manifolds presented in a single coordinate chart.
//!
//! A [`ChartManifold`] owns the metric field `x ↦ G(x)` and knows how to produce
//! Levi-Civita Christoffel symbols, either from a user-supplied closed form or by
//! central differences of the metric. All metric evaluations go through
//! [`ChartManifold::metric_at`], which symmetrizes the matrix and rejects points
//! where it is not positive definite.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fd;

pub type MetricFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;
pub type ChristoffelFn = dyn Fn(&[f64]) -> Christoffel + Send + Sync;
pub type GuardFn = dyn Fn(&[f64]) -> bool + Send + Sync;

/// Christoffel symbols `Γᵏᵢⱼ` at one point, stored densely as `n³` reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(n: usize) -> Self {
        Christoffel {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, k: usize, i: usize, j: usize) -> usize {
        (k * self.n + i) * self.n + j
    }

    /// `Γᵏᵢⱼ` (upper index first).
    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[self.idx(k, i, j)]
    }

    /// Sets `Γᵏᵢⱼ` and `Γᵏⱼᵢ` together.
    pub fn set(&mut self, k: usize, i: usize, j: usize, value: f64) {
        let a = self.idx(k, i, j);
        let b = self.idx(k, j, i);
        self.data[a] = value;
        self.data[b] = value;
    }

    /// Quadratic contraction `Γᵏᵢⱼ vⁱ vʲ`.
    pub fn contract(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|k| {
                let mut acc = 0.0;
                for i in 0..n {
                    if v[i] == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        acc += self.get(k, i, j) * v[i] * v[j];
                    }
                }
                acc
            })
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Christoffel) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone)]
pub enum ChristoffelSource {
    Analytic(Arc<ChristoffelFn>),
    FiniteDifference,
}

/// A vector in the tangent space at a chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: Vec<f64>,
    pub components: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: Vec<f64>, components: Vec<f64>) -> Self {
        TangentVector { base, components }
    }

    /// `vᵀ G(base) v`.
    pub fn norm_sq(&self, m: &ChartManifold) -> Result<f64> {
        m.norm_sq(&self.base, &self.components)
    }
}

/// A connected Riemannian manifold covered by one chart.
#[derive(Clone)]
pub struct ChartManifold {
    name: String,
    dim: usize,
    metric: Arc<MetricFn>,
    christoffel: ChristoffelSource,
    guard: Option<Arc<GuardFn>>,
    complete: bool,
}

impl fmt::Debug for ChartManifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartManifold")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_christoffel", &self.has_analytic_christoffel())
            .field("guarded", &self.guard.is_some())
            .field("complete", &self.complete)
            .finish()
    }
}

impl ChartManifold {
    /// A manifold with finite-difference Christoffels, no chart guard, and no
    /// completeness assertion.
    pub fn new<F>(name: impl Into<String>, dim: usize, metric: F) -> Self
    where
        F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        assert!(dim > 0, "manifold dimension must be positive");
        ChartManifold {
            name: name.into(),
            dim,
            metric: Arc::new(metric),
            christoffel: ChristoffelSource::FiniteDifference,
            guard: None,
            complete: false,
        }
    }

    pub fn with_christoffel<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> Christoffel + Send + Sync + 'static,
    {
        self.christoffel = ChristoffelSource::Analytic(Arc::new(f));
        self
    }

    pub fn with_guard<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        self.guard = Some(Arc::new(f));
        self
    }

    /// Records the scenario author's assertion that the manifold is geodesically
    /// complete. Nothing here verifies it.
    pub fn assume_complete(mut self, complete: bool) -> Self {
        self.complete = complete;
        self
    }

    /// Flat `ℝⁿ`.
    pub fn euclidean(n: usize) -> Self {
        ChartManifold::new(format!("euclidean({n})"), n, move |_| DMatrix::identity(n, n))
            .with_christoffel(move |_| Christoffel::zeros(n))
            .assume_complete(true)
    }

    /// Upper half-plane `x² > 0` with metric `(dx¹² + dx²²)/(x²)²`.
    pub fn hyperbolic_half_plane() -> Self {
        ChartManifold::new("hyperbolic_half_plane", 2, |x| {
            let w = 1.0 / (x[1] * x[1]);
            DMatrix::from_diagonal(&DVector::from_vec(vec![w, w]))
        })
        .with_christoffel(|x| {
            let inv = 1.0 / x[1];
            let mut c = Christoffel::zeros(2);
            c.set(0, 0, 1, -inv);
            c.set(1, 0, 0, inv);
            c.set(1, 1, 1, -inv);
            c
        })
        .with_guard(|x| x[1] > 0.0)
        .assume_complete(true)
    }

    /// Conformally flat metric `e^{2σ(x)} I`.
    pub fn conformal<F>(n: usize, sigma: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        ChartManifold::new(format!("conformal({n})"), n, move |x| {
            DMatrix::identity(n, n) * (2.0 * sigma(x)).exp()
        })
    }

    /// Diagonal metric with the given entry functions.
    pub fn diagonal(entries: Vec<Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>>) -> Self {
        let n = entries.len();
        ChartManifold::new(format!("diagonal({n})"), n, move |x| {
            DMatrix::from_diagonal(&DVector::from_iterator(n, entries.iter().map(|g| g(x))))
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn has_analytic_christoffel(&self) -> bool {
        matches!(self.christoffel, ChristoffelSource::Analytic(_))
    }

    /// Whether `x` lies in the valid chart region.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim
            && x.iter().all(|v| v.is_finite())
            && self.guard.as_ref().is_none_or(|g| g(x))
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !self.contains(x) {
            return Err(Error::OutOfChart { point: x.to_vec() });
        }
        Ok(())
    }

    /// `G(x)`, symmetrized as `(G + Gᵀ)/2` and checked for positive definiteness.
    pub fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.metric_factor(x).map(|(g, _)| g)
    }

    /// Metric together with its Cholesky factor.
    pub fn metric_factor(&self, x: &[f64]) -> Result<(DMatrix<f64>, Cholesky<f64, Dyn>)> {
        self.check_point(x)?;
        let raw = (self.metric)(x);
        if raw.nrows() != self.dim || raw.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: raw.nrows(),
            });
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "metric" });
        }
        let g = (&raw + raw.transpose()) * 0.5;
        match Cholesky::new(g.clone()) {
            Some(chol) => Ok((g, chol)),
            None => {
                let min_eigenvalue = SymmetricEigen::new(g)
                    .eigenvalues
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                Err(Error::NotPositiveDefinite {
                    point: x.to_vec(),
                    min_eigenvalue,
                })
            }
        }
    }

    /// Levi-Civita Christoffel symbols at `x`, from the analytic source when one
    /// was supplied and from central differences of the metric otherwise.
    pub fn christoffel_at(&self, x: &[f64]) -> Result<Christoffel> {
        match &self.christoffel {
            ChristoffelSource::Analytic(f) => {
                self.check_point(x)?;
                let c = f(x);
                if c.data.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        what: "christoffel symbols",
                    });
                }
                Ok(c)
            }
            ChristoffelSource::FiniteDifference => self.christoffel_fd(x, None),
        }
    }

    /// Finite-difference Christoffels with an explicit uniform stencil `step`,
    /// or the default per-coordinate stencil when `step` is `None`.
    pub fn christoffel_fd(&self, x: &[f64], step: Option<f64>) -> Result<Christoffel> {
        let n = self.dim;
        let (_, chol) = self.metric_factor(x)?;
        let ginv = chol.inverse();

        // dg[l] = ∂_l G
        let mut probe = x.to_vec();
        let mut dg = Vec::with_capacity(n);
        for l in 0..n {
            let h = step.unwrap_or_else(|| fd::step_for(x[l]));
            probe[l] = x[l] + h;
            let up = self.metric_at(&probe)?;
            probe[l] = x[l] - h;
            let down = self.metric_at(&probe)?;
            probe[l] = x[l];
            dg.push((up - down) / (2.0 * h));
        }

        let mut c = Christoffel::zeros(n);
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut acc = 0.0;
                    for l in 0..n {
                        acc += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                    }
                    c.set(k, i, j, 0.5 * acc);
                }
            }
        }
        Ok(c)
    }

    /// Raises a covector with the metric: `G(x)⁻¹ · dv`.
    pub fn gradient(&self, x: &[f64], dv: &[f64]) -> Result<TangentVector> {
        if dv.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: dv.len(),
            });
        }
        let (_, chol) = self.metric_factor(x)?;
        let raised = chol.solve(&DVector::from_column_slice(dv));
        Ok(TangentVector::new(x.to_vec(), raised.iter().cloned().collect()))
    }

    pub fn norm_sq(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        let g = self.metric_at(x)?;
        Ok(quadratic_form(&g, v))
    }
}

/// `vᵀ A v`.
pub fn quadratic_form(a: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += v[i] * a[(i, j)] * v[j];
        }
    }
    acc
}
