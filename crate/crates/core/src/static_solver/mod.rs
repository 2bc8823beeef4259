//! Quasistatic equilibrium solvers.
//!
//! Three cooperating pieces:
//!
//! - [`solve_ti_static`]: unconstrained Newton minimization on the
//!   scalar-twist path (isotropic bending only);
//! - [`solve_general_static`]: Newton on the KKT system of the rotation path,
//!   where nodal frames are constrained to stay tangent-aligned by Lagrange
//!   multipliers;
//! - [`mixed_residual_check`]: strong-form residual evaluation of one
//!   converged state under two equivalent formulations, quantifying how far
//!   the discrete solution is from the continuum equations and how far the
//!   two formulations are from each other.
//!
//! [`continuation_buckling`] rides the trivial branch of a compressed column
//! and brackets the load where the reduced stiffness loses definiteness.

mod buckling;
mod general;
mod mixed;
mod ti;

pub use buckling::continuation_buckling;
pub use general::{solve_general_static, GeneralDofMap};
pub use mixed::{lift_multipliers, mixed_residual_check, MixedResiduals};
pub use ti::{reduced_hessian_definite, solve_ti_static, TiDofMap};

pub use crate::discretization::LoadCase;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::RodError;
use crate::so3::{chi_no_drill, Director, Rotation, Vec3};
use crate::Result;

/// Clamp data at `s = 0`: position, tangent direction, and base twist. The
/// tangent magnitude (axial stretch) at the base stays free.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClampedBase {
    /// Base position (m).
    pub position: Vec3,
    /// Base tangent direction (normalized on use).
    pub direction: Vec3,
    /// Base twist angle (rad); the rotation path folds it into the frame.
    pub twist: f64,
    /// Explicit base frame for the rotation path. When absent the frame is
    /// the drill-free image of the standard frame, drilled by `twist`.
    pub frame: Option<Rotation>,
}

impl ClampedBase {
    /// Clamp at the origin along `E₃` with zero twist.
    #[must_use]
    pub fn canonical() -> Self {
        Self {
            position: Vec3::zeros(),
            direction: Vec3::z(),
            twist: 0.0,
            frame: None,
        }
    }

    /// Clamp along an arbitrary direction.
    pub fn along(position: Vec3, direction: Vec3) -> Result<Self> {
        let dir = Director::new(direction)?.vector();
        Ok(Self {
            position,
            direction: dir,
            twist: 0.0,
            frame: None,
        })
    }

    /// The unit base direction.
    pub fn unit_direction(&self) -> Result<Vec3> {
        Ok(Director::new(self.direction)?.vector())
    }

    /// The base section frame used by the rotation path.
    pub fn base_frame(&self) -> Result<Rotation> {
        if let Some(frame) = &self.frame {
            let d = frame.column(2);
            if (d - self.unit_direction()?).norm() > 1e-8 {
                return Err(RodError::Validation(
                    "explicit base frame director disagrees with the clamp direction".into(),
                ));
            }
            return Ok(*frame);
        }
        let dir = Director::new(self.direction)?;
        let chi = chi_no_drill(&Director::e3(), &dir)?;
        let (s, c) = self.twist.sin_cos();
        let drill = crate::so3::Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        Ok(Rotation::from_matrix_unchecked(chi.matrix() * drill))
    }
}

/// Newton iteration parameters shared by the static solvers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewtonConfig {
    /// Convergence tolerance on the max-norm of the reduced residual.
    pub tol: f64,
    /// Iteration budget per load step.
    pub max_iter: usize,
    /// Uniform load-continuation steps (1 applies the full load at once).
    pub continuation_steps: usize,
    /// Armijo sufficient-decrease constant for the energy line search.
    pub armijo_c: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            continuation_steps: 1,
            armijo_c: 1e-4,
        }
    }
}

impl NewtonConfig {
    /// Validates parameter ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(RodError::Validation(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 || self.continuation_steps == 0 {
            return Err(RodError::Validation(
                "iteration and continuation budgets must be at least 1".into(),
            ));
        }
        if !(self.armijo_c.is_finite() && (0.0..0.5).contains(&self.armijo_c)) {
            return Err(RodError::Validation(format!(
                "Armijo constant must lie in [0, 0.5), got {}",
                self.armijo_c
            )));
        }
        Ok(())
    }

    /// Effective residual tolerance for `law`: the requested tolerance, but
    /// never below the arithmetic floor of the assembled gradient. Assembly
    /// roundoff scales with the stiffest section modulus, so for very stiff
    /// sections no iteration can reach a small absolute tolerance.
    pub(crate) fn effective_tol(&self, law: &crate::rod_model::MaterialLaw) -> f64 {
        let stiffness = law.ea.max(law.ei[0]).max(law.ei[1]).max(law.gj);
        self.tol.max(3e-14 * stiffness.max(1.0))
    }
}

/// Strain and stress-resultant magnitudes sampled at one arc-length station.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FieldSample {
    /// Arc-length coordinate (m).
    pub s: f64,
    /// Axial strain.
    pub eps: f64,
    /// Bending-strain magnitude `|K|` (1/m).
    pub curvature: f64,
    /// Twist rate (rad/m).
    pub twist_rate: f64,
    /// Axial force (N).
    pub axial_force: f64,
    /// Bending-moment magnitude (N·m).
    pub bending_moment: f64,
    /// Torsion moment (N·m).
    pub torsion_moment: f64,
}

/// Convergence diagnostics and solution summary of one static solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    /// Whether the residual dropped below the tolerance.
    pub converged: bool,
    /// Total Newton iterations across continuation steps.
    pub iterations: usize,
    /// Final max-norm of the reduced equilibrium residual.
    pub residual_norm: f64,
    /// Final max-norm of the constraint residual (zero on the scalar path).
    pub constraint_norm: f64,
    /// Residual after each accepted iteration.
    pub residual_history: Vec<f64>,
    /// Number of load-continuation steps actually taken.
    pub continuation_steps: usize,
    /// Final potential energy (J).
    pub energy: f64,
    /// Position of the free end (m).
    pub tip_position: Vec3,
    /// Twist of the free end relative to the base (rad).
    pub tip_twist: f64,
    /// Strains and resultants at the quadrature points.
    pub field_samples: Vec<FieldSample>,
}

impl SolveReport {
    pub(crate) fn empty() -> Self {
        Self {
            converged: false,
            iterations: 0,
            residual_norm: f64::INFINITY,
            constraint_norm: 0.0,
            residual_history: Vec::new(),
            continuation_steps: 0,
            energy: f64::NAN,
            tip_position: Vec3::zeros(),
            tip_twist: 0.0,
            field_samples: Vec::new(),
        }
    }
}

/// Multiplier fields of the constrained and mixed formulations.
///
/// `eta` holds the two tangency-constraint components per node (the rotation
/// path collocates that constraint at the nodes). `mu` holds the per-element
/// torsion multiplier of the mixed formulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagrangeFields {
    /// Nodal tangency multipliers spanning `(E₁, E₂)` (N).
    pub eta: Vec<Vector2<f64>>,
    /// Per-element torsion multipliers (N·m).
    pub mu: Vec<f64>,
}

impl LagrangeFields {
    /// Zero multipliers for a grid with `n_nodes` nodes.
    #[must_use]
    pub fn zeros(n_nodes: usize) -> Self {
        Self {
            eta: vec![Vector2::zeros(); n_nodes],
            mu: vec![0.0; n_nodes.saturating_sub(1)],
        }
    }
}

/// Samples strains and stress resultants at every quadrature point of a
/// state, on whichever path the state lives.
pub(crate) fn sample_fields(
    grid: &crate::discretization::Grid,
    dofs: &crate::discretization::DofVector,
    law: &crate::rod_model::MaterialLaw,
) -> Result<Vec<FieldSample>> {
    use crate::discretization::{element_twist, interpolate, section_frame};
    let mut out = Vec::with_capacity(grid.n_elements() * grid.rule().len());
    for e in 0..grid.n_elements() {
        let h = grid.element_length(e);
        let s0 = grid.node_s(e);
        let twist_rate = if dofs.has_rotations() {
            element_twist(dofs, e)? / h
        } else {
            (dofs.psi[e + 1] - dofs.psi[e]) / h
        };
        let torsion_moment = law.gj * twist_rate;
        for &xi in grid.rule().points() {
            let s = s0 + xi * h;
            let p = interpolate(grid, dofs, s)?;
            let sample = if dofs.has_rotations() {
                let n = p.r1.norm();
                let frame = section_frame(grid, dofs, s)?;
                let kappa = p.r1.cross(&p.r2) / (n * n);
                let k = frame.apply_inverse(&kappa);
                FieldSample {
                    s,
                    eps: n - 1.0,
                    curvature: kappa.norm(),
                    twist_rate,
                    axial_force: law.ea * (n - 1.0),
                    bending_moment: (law.ei[0] * k.x).hypot(law.ei[1] * k.y),
                    torsion_moment,
                }
            } else {
                let (eps, bend, tau) = crate::rod_model::strains_ti(&p.r1, &p.r2, p.psi1)?;
                FieldSample {
                    s,
                    eps,
                    curvature: bend,
                    twist_rate: tau,
                    axial_force: law.ea * eps,
                    bending_moment: law.bending_isotropic()? * bend,
                    torsion_moment,
                }
            };
            out.push(sample);
        }
    }
    Ok(out)
}
