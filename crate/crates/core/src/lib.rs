//! Geometrically exact mechanics of Kirchhoff rods.
//!
//! A Kirchhoff rod is a slender elastic body whose cross sections stay rigid,
//! planar, and orthogonal to the deformed axis. Its configuration is a framed
//! curve: a centerline `r(s)` plus a cross-section orientation `Λ(s) ∈ SO(3)`
//! whose third column is constrained to follow the unit tangent. This crate
//! provides the pieces needed to state and solve that model three equivalent
//! ways:
//!
//! * [`so3`]: rotation kernels: skew/axial maps, the Rodrigues exponential
//!   and its tangent maps, drill-free (twist-minimizing) rotations between
//!   directors, and the tangential/directorial split of such maps.
//! * [`frames`]: sampled framed curves: relatively parallel (Bishop)
//!   transport, Darboux vectors, the induced torsion of one-shot drill-free
//!   maps, and space-time compatibility diagnostics.
//! * [`rod_model`]: strain measures, hyperelastic stored energy, stress
//!   resultants, kinetic energy, and momenta for rods with general or
//!   transversely isotropic sections.
//! * [`discretization`]: cubic Hermite centerline plus linear twist fields
//!   on a breakpoint grid, Gauss quadrature, energy/gradient assembly, and
//!   constraint sampling.
//! * [`static_solver`]: Newton solvers for the unconstrained transversely
//!   isotropic path and the constrained general-section path (KKT saddle
//!   system), a mixed-form residual evaluator, and buckling detection by
//!   load continuation.
//! * [`dynamics`]: semidiscrete balance residuals and an energy-well-behaved
//!   implicit midpoint integrator for the regularized transversely isotropic
//!   model.
//! * [`linear_oracles`]: closed-form and discrete linear-beam references
//!   (cantilever formulas, clamped-free frequency roots, Rayleigh beam
//!   eigenproblem) used to cross-check the nonlinear machinery.
//!
//! Units are SI throughout: meters, newtons, seconds, radians.

pub mod discretization;
pub mod dynamics;
pub mod error;
pub mod frames;
pub mod linear_oracles;
pub mod rod_model;
pub mod so3;
pub mod static_solver;

pub use error::RodError;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, RodError>;
