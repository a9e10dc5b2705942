//! Gradient-based moment closures for slab-geometry radiative transfer,
//! with a constraint layer that keeps the learned closure globally
//! symmetrizable hyperbolic.
//!
//! The crate contains the full desk-scale pipeline:
//!
//! - [`legendre`]: polynomials, Gauss–Legendre quadrature, moment
//!   transforms;
//! - [`kinetic`]: the discrete-ordinates reference solver and the
//!   training-data generator;
//! - [`closure`]: closure coefficients, matrix assembly, and the
//!   hyperbolicity-enforcing postprocessing layer;
//! - [`hyperbolicity`]: block symmetrizers, constraint checks, the dense
//!   eigenvalue oracle, and the relaxation-coupling (structural
//!   stability) checker;
//! - [`nn`]: the fully-connected closure head with native training;
//! - [`momsolver`]: the WENO5/Lax–Friedrichs/SSP-RK3 moment solver in
//!   standard and diffusive scalings;
//! - [`diffusion`]: the diffusion-limit reference solver and the Knudsen
//!   sweep harness.

pub mod closure;
pub mod diffusion;
pub mod grid;
pub mod hyperbolicity;
pub mod kinetic;
pub mod legendre;
pub mod momsolver;
pub mod nn;
pub mod weno;

pub use closure::{Closure, ClosureCoefficients, CoefficientMatrix, PnClosure, SigmaFn};
pub use grid::Grid1d;
pub use kinetic::{CrossSections, Dataset, KineticField, XsProfile};
pub use legendre::Quadrature;
pub use momsolver::{MomentField, SolverOptions};
pub use nn::{DirectMlClosure, HyperbolicMlClosure, MlpModel, TrainConfig};
