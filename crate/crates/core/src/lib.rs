//! Trajectories of accelerated particles on Riemannian manifolds presented in a
//! single coordinate chart.
//!
//! The crate integrates the second-order equation
//!
//! ```text
//! D/dt γ̇ = F(γ, t) γ̇ − ∇V(γ, t)
//! ```
//!
//! checks sampled premises of the standard completeness results for it, builds
//! Gronwall-type dominating solutions, and reduces geodesics of generalized
//! plane-wave spacetimes `g = g₀ + 2 du dv + H(x, u) du²` to trajectories on the
//! base manifold.

pub mod comparison;
pub mod dynamics;
pub mod error;
pub mod fd;
pub mod geometry;
pub mod gpw;
pub mod hypotheses;
pub mod integrate;
pub mod quadrature;

pub use comparison::{DivergenceVerdict, DominatingSolution, EnvelopeReport, PhiFunction};
pub use dynamics::{EnergyFrame, ForceSystem, OperatorBounds};
pub use error::{Error, Result};
pub use geometry::{ChartManifold, Christoffel, TangentVector};
pub use gpw::{GeodesicInitialData, GpwSpacetime, PlaneWave, SplitGeodesic};
pub use hypotheses::{BoundData, CompletenessCertificate, Verdict};
pub use integrate::{Direction, IntegratorConfig, Outcome, Trajectory};
