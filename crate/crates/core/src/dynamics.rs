//! Time integration of the transversely isotropic rod.
//!
//! The semidiscrete model keeps the unknowns of the scalar-twist static path
//! (nodal positions, tangents and twist angles, with the clamp eliminated)
//! and equips them with the regularized kinetic energy
//!
//! ```text
//! T = 1/2 ∫ Aρ |ṙ|² + i⊥ |ḋ|² + i∥ ψ̇² ds,   ḋ = (I − d⊗d) ṙ′ / |r′|,
//! ```
//!
//! so the director rate is the one induced by the centerline. Because `ḋ`
//! divides by `|r′|` and projects along `d`, the consistent mass matrix
//! couples position and tangent dofs and depends on the configuration; the
//! balance of momentum then carries the gradient of the kinetic energy with
//! respect to the configuration next to the elastic forces.
//!
//! Steps use the implicit midpoint rule in momentum form. With
//! `x_m = (x_n + x₊)/2` and `v_m = (x₊ − x_n)/dt`, the update solves
//!
//! ```text
//! Φ(x₊) = 2 M(x_m) v_m − 2 pₙ − dt [ ∇ₓT(x_m, v_m) − ∇V(x_m) ] = 0,
//! p₊ = 2 M(x_m) v_m − pₙ.
//! ```
//!
//! The scheme is second order and symplectic, so the energy error stays
//! bounded over long runs instead of drifting. Each step runs a chord Newton
//! iteration: the finite-difference Jacobian of `Φ` is refreshed every few
//! steps and reused in between, which keeps the per-step cost at a handful of
//! residual evaluations.

use nalgebra::linalg::{SymmetricEigen, LU};
use nalgebra::{DMatrix, DVector, Dyn};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::discretization::{
    assemble_energy, assemble_gradient, combine, shape_rows, DofVector, Grid, LoadCase,
    TANGENT_FLOOR,
};
use crate::error::RodError;
use crate::rod_model::{MaterialLaw, SectionInertia};
use crate::so3::{Mat3, Vec3};
use crate::static_solver::{ClampedBase, TiDofMap};
use crate::Result;

/// Finite-difference step for the per-step Jacobian of the midpoint residual.
/// The chord iteration only needs the Jacobian approximately, so accuracy is
/// uncritical; the step is chosen to keep the difference well above roundoff.
const STEP_JACOBIAN_FD: f64 = 1e-7;

/// Finite-difference step for the stiffness matrix of the linearized model.
/// Larger than the Jacobian step above because the eigenvalues inherit the
/// noise of the differenced gradient amplified by the inverse mass.
const STIFFNESS_FD: f64 = 1e-5;

// ---------------------------------------------------------------------------
// Configuration and state
// ---------------------------------------------------------------------------

/// Parameters of the implicit midpoint integrator.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Time step (s).
    pub dt: f64,
    /// Number of steps to take.
    pub steps: usize,
    /// Relative residual tolerance of the per-step Newton iteration. The
    /// absolute tolerance scales with the momentum magnitude and with the
    /// arithmetic floor of the assembled elastic gradient.
    pub tol: f64,
    /// Iteration budget per step and per Jacobian refresh.
    pub max_newton_iter: usize,
    /// Steps between scheduled Jacobian refreshes. A refresh is also forced
    /// whenever the chord iteration fails to converge.
    pub jacobian_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            steps: 100,
            tol: 1e-10,
            max_newton_iter: 30,
            jacobian_every: 25,
        }
    }
}

impl IntegratorConfig {
    /// Checks the configuration for admissible values.
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(RodError::Validation(format!(
                "time step must be finite and positive, got {}",
                self.dt
            )));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(RodError::Validation(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_newton_iter == 0 {
            return Err(RodError::Validation(
                "iteration budget must be at least 1".into(),
            ));
        }
        if self.jacobian_every == 0 {
            return Err(RodError::Validation(
                "jacobian refresh interval must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Configuration and rates of the rod at one instant.
///
/// `rates` holds nodal time derivatives in the same layout as `dofs`
/// (positions, tangent coefficients, twist angles). Entries clamped by the
/// base are ignored: the base position and twist do not move, and the base
/// tangent rate only counts through its component along the clamp direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicState {
    /// Nodal configuration.
    pub dofs: DofVector,
    /// Nodal rates (time derivatives of `dofs`).
    pub rates: DofVector,
    /// Time (s) the state belongs to.
    pub time: f64,
}

impl DynamicState {
    /// State at rest (zero rates) at time zero.
    pub fn at_rest(dofs: DofVector) -> Self {
        let n = dofs.n_nodes();
        let rates = DofVector {
            r: vec![Vec3::zeros(); n],
            t: vec![Vec3::zeros(); n],
            psi: vec![0.0; n],
            rotations: None,
        };
        Self {
            dofs,
            rates,
            time: 0.0,
        }
    }
}

/// One recorded instant of a trajectory.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrajectorySample {
    /// Time (s).
    pub time: f64,
    /// Position of the last node (m).
    pub tip_position: Vec3,
    /// Twist angle of the last node relative to the base (rad).
    pub tip_twist: f64,
    /// Kinetic energy (J).
    pub kinetic: f64,
    /// Potential energy, elastic minus load work (J).
    pub potential: f64,
    /// Total energy (J).
    pub energy: f64,
}

/// Time series recorded by [`integrate`], one sample per step plus the
/// initial state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    /// Samples in time order.
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    /// Number of samples.
    #[must_use]
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Whether the trajectory holds no samples.
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// One Cartesian component (0, 1 or 2) of the tip position over time.
    #[must_use]
    pub fn tip_series(&self, component: usize) -> Vec<f64> {
        assert!(component < 3, "component must be 0, 1 or 2");
        self.samples
            .iter()
            .map(|s| s.tip_position[component])
            .collect()
    }

    /// Tip twist over time.
    #[must_use]
    pub fn tip_twist_series(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.tip_twist).collect()
    }

    /// Largest relative excursion of the total energy from its initial
    /// value. The excursion is scaled by the larger of the initial energy
    /// magnitude and the peak of `|kinetic| + |potential|`, so the measure
    /// stays meaningful when the total starts near zero.
    #[must_use]
    pub fn energy_drift(&self) -> f64 {
        let Some(first) = self.samples.first() else {
            return 0.0;
        };
        let mut excursion: f64 = 0.0;
        let mut scale = first.energy.abs();
        for s in &self.samples {
            excursion = excursion.max((s.energy - first.energy).abs());
            scale = scale.max(s.kinetic.abs() + s.potential.abs());
        }
        if scale == 0.0 {
            0.0
        } else {
            excursion / scale
        }
    }
}

/// Work counters of one [`integrate`] call.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntegrateReport {
    /// Steps taken.
    pub steps: usize,
    /// Newton iterations summed over all steps.
    pub newton_iterations: usize,
    /// Finite-difference Jacobian factorizations.
    pub jacobian_builds: usize,
    /// Largest accepted step residual (max norm of the momentum balance).
    pub max_residual: f64,
}

// ---------------------------------------------------------------------------
// Mass, kinetic energy and its configuration gradient
// ---------------------------------------------------------------------------

/// Where a nodal 3-vector lands in the reduced coordinate vector.
#[derive(Clone, Copy)]
enum VecSlot {
    /// Clamped entry, no dof.
    Fixed,
    /// Scalar dof at index 0, measured along the clamp direction.
    Axis,
    /// Full 3-vector starting at the index.
    Block(usize),
}

fn r_slot(node: usize) -> VecSlot {
    if node == 0 {
        VecSlot::Fixed
    } else {
        VecSlot::Block(1 + 7 * (node - 1))
    }
}

fn t_slot(node: usize) -> VecSlot {
    if node == 0 {
        VecSlot::Axis
    } else {
        VecSlot::Block(1 + 7 * (node - 1) + 3)
    }
}

fn psi_slot(node: usize) -> Option<usize> {
    if node == 0 {
        None
    } else {
        Some(1 + 7 * (node - 1) + 6)
    }
}

/// Adds a 3x3 coupling block between two nodal vector dofs, reducing through
/// the clamp: fixed entries are dropped and the base tangent is projected on
/// the clamp direction.
fn add_vec_block(m: &mut DMatrix<f64>, row: VecSlot, col: VecSlot, dir: &Vec3, block: &Mat3) {
    match (row, col) {
        (VecSlot::Fixed, _) | (_, VecSlot::Fixed) => {}
        (VecSlot::Axis, VecSlot::Axis) => {
            m[(0, 0)] += (dir.transpose() * block * dir)[(0, 0)];
        }
        (VecSlot::Axis, VecSlot::Block(c)) => {
            let row_vec = block.transpose() * dir;
            for k in 0..3 {
                m[(0, c + k)] += row_vec[k];
            }
        }
        (VecSlot::Block(r), VecSlot::Axis) => {
            let col_vec = block * dir;
            for k in 0..3 {
                m[(r + k, 0)] += col_vec[k];
            }
        }
        (VecSlot::Block(r), VecSlot::Block(c)) => {
            for kr in 0..3 {
                for kc in 0..3 {
                    m[(r + kr, c + kc)] += block[(kr, kc)];
                }
            }
        }
    }
}

/// Consistent mass matrix of the reduced coordinates at configuration `x`.
///
/// Per quadrature point the translational block is `Aρ N_a N_b I`, the
/// director block is `i⊥ N′_a N′_b (I − d⊗d)/|r′|²` (the rate of `d` induced
/// by the centerline), and the twist block is `i∥ ℓ_a ℓ_b` on the linear
/// twist shape functions. The matrix is symmetric positive definite for any
/// regular configuration.
pub fn mass_matrix(
    grid: &Grid,
    inertia: &SectionInertia,
    map: &TiDofMap,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let i_perp = inertia.transverse_scalar()?;
    let dofs = map.unpack(x)?;
    let dir = map.clamp_direction();
    let mut m = DMatrix::zeros(map.len(), map.len());
    let points = grid.rule().points().to_vec();
    let weights = grid.rule().weights().to_vec();
    for e in 0..grid.n_elements() {
        let h = grid.element_length(e);
        let slots = [r_slot(e), t_slot(e), r_slot(e + 1), t_slot(e + 1)];
        let psi_slots = [psi_slot(e), psi_slot(e + 1)];
        for (q, &xi) in points.iter().enumerate() {
            let w = weights[q] * h;
            let rows = shape_rows(xi, h);
            let r1 = combine(
                &rows.r1,
                &dofs.r[e],
                &dofs.t[e],
                &dofs.r[e + 1],
                &dofs.t[e + 1],
            );
            let n = r1.norm();
            if n < TANGENT_FLOOR {
                return Err(RodError::IrregularCurve {
                    index: e,
                    reason: format!("|r'| = {n:e} at a quadrature point"),
                });
            }
            let d = r1 / n;
            let proj = (Mat3::identity() - d * d.transpose()) / (n * n);
            for a in 0..4 {
                for b in 0..4 {
                    let block = Mat3::identity() * (w * inertia.a_rho * rows.r[a] * rows.r[b])
                        + proj * (w * i_perp * rows.r1[a] * rows.r1[b]);
                    add_vec_block(&mut m, slots[a], slots[b], &dir, &block);
                }
            }
            let shape = [1.0 - xi, xi];
            for a in 0..2 {
                for b in 0..2 {
                    if let (Some(pa), Some(pb)) = (psi_slots[a], psi_slots[b]) {
                        m[(pa, pb)] += w * inertia.i_par * shape[a] * shape[b];
                    }
                }
            }
        }
    }
    Ok(m)
}

/// Kinetic energy of nodal `rates` at configuration `dofs`, by direct
/// quadrature of the density. Serves as the independent check of
/// [`mass_matrix`]: both must agree to roundoff.
pub fn kinetic_energy(
    grid: &Grid,
    inertia: &SectionInertia,
    dofs: &DofVector,
    rates: &DofVector,
) -> Result<f64> {
    let i_perp = inertia.transverse_scalar()?;
    dofs.validate(grid)?;
    rates.validate(grid)?;
    if dofs.has_rotations() || rates.has_rotations() {
        return Err(RodError::Validation(
            "kinetic energy quadrature runs on the scalar-twist path, drop the rotation dofs"
                .into(),
        ));
    }
    let points = grid.rule().points().to_vec();
    let weights = grid.rule().weights().to_vec();
    let mut t = 0.0;
    for e in 0..grid.n_elements() {
        let h = grid.element_length(e);
        for (q, &xi) in points.iter().enumerate() {
            let w = weights[q] * h;
            let rows = shape_rows(xi, h);
            let rdot = combine(
                &rows.r,
                &rates.r[e],
                &rates.t[e],
                &rates.r[e + 1],
                &rates.t[e + 1],
            );
            let u = combine(
                &rows.r1,
                &rates.r[e],
                &rates.t[e],
                &rates.r[e + 1],
                &rates.t[e + 1],
            );
            let r1 = combine(
                &rows.r1,
                &dofs.r[e],
                &dofs.t[e],
                &dofs.r[e + 1],
                &dofs.t[e + 1],
            );
            let n2 = r1.norm_squared();
            if n2.sqrt() < TANGENT_FLOOR {
                return Err(RodError::IrregularCurve {
                    index: e,
                    reason: format!("|r'| = {:e} at a quadrature point", n2.sqrt()),
                });
            }
            let ddot2 = (u.norm_squared() - r1.dot(&u).powi(2) / n2) / n2;
            let psidot = (1.0 - xi) * rates.psi[e] + xi * rates.psi[e + 1];
            t += w
                * 0.5
                * (inertia.a_rho * rdot.norm_squared()
                    + i_perp * ddot2
                    + inertia.i_par * psidot * psidot);
        }
    }
    Ok(t)
}

/// Gradient of the kinetic energy with respect to the configuration at fixed
/// rates, `∇ₓ T(x, v) = 1/2 vᵀ (∂M/∂x) v`. Only the director term depends on
/// the configuration (through `r′`), so the gradient scatters over the
/// tangent-interpolation rows.
pub fn kinetic_config_gradient(
    grid: &Grid,
    inertia: &SectionInertia,
    map: &TiDofMap,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let i_perp = inertia.transverse_scalar()?;
    let dofs = map.unpack(x)?;
    let rates = map.unpack_rate(v)?;
    let dir = map.clamp_direction();
    let mut g = DVector::zeros(map.len());
    let points = grid.rule().points().to_vec();
    let weights = grid.rule().weights().to_vec();
    for e in 0..grid.n_elements() {
        let h = grid.element_length(e);
        let slots = [r_slot(e), t_slot(e), r_slot(e + 1), t_slot(e + 1)];
        for (q, &xi) in points.iter().enumerate() {
            let w = weights[q] * h;
            let rows = shape_rows(xi, h);
            let r1 = combine(
                &rows.r1,
                &dofs.r[e],
                &dofs.t[e],
                &dofs.r[e + 1],
                &dofs.t[e + 1],
            );
            let u = combine(
                &rows.r1,
                &rates.r[e],
                &rates.t[e],
                &rates.r[e + 1],
                &rates.t[e + 1],
            );
            let n2 = r1.norm_squared();
            if n2.sqrt() < TANGENT_FLOOR {
                return Err(RodError::IrregularCurve {
                    index: e,
                    reason: format!("|r'| = {:e} at a quadrature point", n2.sqrt()),
                });
            }
            let n4 = n2 * n2;
            let n6 = n4 * n2;
            let du = r1.dot(&u);
            let gw = (r1 * (-u.norm_squared()) - u * du) * (i_perp / n4)
                + r1 * (2.0 * i_perp * du * du / n6);
            for (&slot, &shape) in slots.iter().zip(rows.r1.iter()) {
                let contrib = gw * (w * shape);
                match slot {
                    VecSlot::Fixed => {}
                    VecSlot::Axis => g[0] += contrib.dot(&dir),
                    VecSlot::Block(s) => {
                        for k in 0..3 {
                            g[s + k] += contrib[k];
                        }
                    }
                }
            }
        }
    }
    Ok(g)
}

/// Reduced gradient of the total potential (elastic energy minus load work).
fn potential_gradient(
    grid: &Grid,
    law: &MaterialLaw,
    loads: &LoadCase,
    map: &TiDofMap,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let dofs = map.unpack(x)?;
    let grad = assemble_gradient(grid, &dofs, law, loads)?;
    map.reduce_gradient(&grad)
}

/// Right-hand side of the semidiscrete balance in reduced coordinates,
/// `∇ₓT(x, v) − ∇V(x)`. Equilibria of the static problem are exactly the
/// configurations where this vanishes at `v = 0`.
pub fn semidiscrete_force(
    grid: &Grid,
    law: &MaterialLaw,
    loads: &LoadCase,
    inertia: &SectionInertia,
    map: &TiDofMap,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(kinetic_config_gradient(grid, inertia, map, x, v)?
        - potential_gradient(grid, law, loads, map, x)?)
}

// ---------------------------------------------------------------------------
// Implicit midpoint stepping
// ---------------------------------------------------------------------------

/// Residual of one midpoint step as a function of the end configuration.
#[allow(clippy::too_many_arguments)]
fn midpoint_residual(
    grid: &Grid,
    law: &MaterialLaw,
    loads: &LoadCase,
    inertia: &SectionInertia,
    map: &TiDofMap,
    x_n: &DVector<f64>,
    p_n: &DVector<f64>,
    x_next: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    let x_m = (x_n + x_next) * 0.5;
    let v_m = (x_next - x_n) / dt;
    let m = mass_matrix(grid, inertia, map, &x_m)?;
    let force = semidiscrete_force(grid, law, loads, inertia, map, &x_m, &v_m)?;
    Ok((m * &v_m) * 2.0 - p_n * 2.0 - force * dt)
}

/// Central finite-difference Jacobian of the midpoint residual with respect
/// to the end configuration, evaluated at `x_next`.
#[allow(clippy::too_many_arguments)]
fn step_jacobian(
    grid: &Grid,
    law: &MaterialLaw,
    loads: &LoadCase,
    inertia: &SectionInertia,
    map: &TiDofMap,
    x_n: &DVector<f64>,
    p_n: &DVector<f64>,
    x_next: &DVector<f64>,
    dt: f64,
) -> Result<DMatrix<f64>> {
    let dim = x_next.len();
    let mut j = DMatrix::zeros(dim, dim);
    let mut xp = x_next.clone();
    for k in 0..dim {
        let step = STEP_JACOBIAN_FD * (1.0 + x_next[k].abs());
        // Use the actually representable offsets so the divisor matches.
        let hi = x_next[k] + step;
        let lo = x_next[k] - step;
        let delta = 0.5 * (hi - lo);
        xp[k] = hi;
        let fp = midpoint_residual(grid, law, loads, inertia, map, x_n, p_n, &xp, dt)?;
        xp[k] = lo;
        let fm = midpoint_residual(grid, law, loads, inertia, map, x_n, p_n, &xp, dt)?;
        xp[k] = x_next[k];
        j.column_mut(k).copy_from(&((fp - fm) / (2.0 * delta)));
    }
    Ok(j)
}

/// Velocity consistent with momentum `p` at configuration `x`.
fn velocity_from_momentum(
    grid: &Grid,
    inertia: &SectionInertia,
    map: &TiDofMap,
    x: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<DVector<f64>> {
    let m = mass_matrix(grid, inertia, map, x)?;
    let chol = m
        .cholesky()
        .ok_or_else(|| RodError::Validation("mass matrix is not positive definite".into()))?;
    Ok(chol.solve(p))
}

#[allow(clippy::too_many_arguments)]
fn record_sample(
    grid: &Grid,
    law: &MaterialLaw,
    loads: &LoadCase,
    map: &TiDofMap,
    time: f64,
    x: &DVector<f64>,
    v: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<TrajectorySample> {
    let dofs = map.unpack(x)?;
    let n = dofs.n_nodes();
    let kinetic = 0.5 * v.dot(p);
    let potential = assemble_energy(grid, &dofs, law, loads)?;
    Ok(TrajectorySample {
        time,
        tip_position: dofs.r[n - 1],
        tip_twist: dofs.psi[n - 1] - dofs.psi[0],
        kinetic,
        potential,
        energy: kinetic + potential,
    })
}

/// Integrates the rod forward in time with the implicit midpoint rule.
///
/// `loads` act throughout the run (their potential is part of the conserved
/// total). The clamp in `base` overrides the node-0 entries of the initial
/// state. Returns the final state, the recorded trajectory (initial sample
/// plus one per step) and work counters. Fails with
/// [`RodError::StepNonConvergence`] if a step exhausts its Newton budget
/// even after a fresh Jacobian.
pub fn integrate(
    grid: &Grid,
    initial: &DynamicState,
    law: &MaterialLaw,
    inertia: &SectionInertia,
    loads: &LoadCase,
    base: &ClampedBase,
    config: &IntegratorConfig,
) -> Result<(DynamicState, Trajectory, IntegrateReport)> {
    config.validate()?;
    law.validate()?;
    law.bending_isotropic()?;
    inertia.validate()?;
    inertia.transverse_scalar()?;
    loads.validate()?;
    if loads.tip_bending_moment.is_some() {
        return Err(RodError::Validation(
            "tip bending moments need rotation dofs, which the integrator does not carry".into(),
        ));
    }
    let map = TiDofMap::new(grid, base)?;
    let mut x = map.pack(&initial.dofs)?;
    let mut v = map.pack(&initial.rates)?;
    let mut p = &mass_matrix(grid, inertia, &map, &x)? * &v;

    let stiffness = law.ea.max(law.ei[0]).max(law.ei[1]).max(law.gj).max(1.0);
    let dt = config.dt;

    let mut report = IntegrateReport {
        steps: 0,
        newton_iterations: 0,
        jacobian_builds: 0,
        max_residual: 0.0,
    };
    let mut trajectory = Trajectory {
        samples: Vec::with_capacity(config.steps + 1),
    };
    trajectory.samples.push(record_sample(
        grid,
        law,
        loads,
        &map,
        initial.time,
        &x,
        &v,
        &p,
    )?);

    let mut jac: Option<LU<f64, Dyn, Dyn>> = None;
    let mut steps_since_build = usize::MAX;

    for step in 0..config.steps {
        let time = initial.time + step as f64 * dt;
        // The floor term mirrors the static solver: the elastic gradient
        // cannot be evaluated below roundoff that scales with the stiffest
        // modulus, and it enters the residual multiplied by dt.
        let tol = config.tol * (1.0 + 2.0 * p.amax()) + dt * 3e-14 * stiffness;

        let mut x_next = &x + &v * dt;
        let mut converged = false;
        let mut last_residual = f64::INFINITY;
        for attempt in 0..2 {
            let stale = steps_since_build >= config.jacobian_every || jac.is_none();
            if stale || attempt > 0 {
                let j = step_jacobian(grid, law, loads, inertia, &map, &x, &p, &x_next, dt)?;
                jac = Some(j.lu());
                report.jacobian_builds += 1;
                steps_since_build = 0;
            }
            let lu = jac.as_ref().expect("jacobian was just ensured");
            for _ in 0..config.max_newton_iter {
                let phi = midpoint_residual(grid, law, loads, inertia, &map, &x, &p, &x_next, dt)?;
                last_residual = phi.amax();
                if last_residual <= tol {
                    converged = true;
                    break;
                }
                report.newton_iterations += 1;
                let delta = lu.solve(&(-&phi)).ok_or(RodError::SingularKkt {
                    pivot: 0.0,
                    column: 0,
                })?;
                x_next += delta;
            }
            if converged {
                break;
            }
        }
        if !converged {
            return Err(RodError::StepNonConvergence {
                time,
                iterations: 2 * config.max_newton_iter,
                residual: last_residual,
            });
        }
        report.max_residual = report.max_residual.max(last_residual);

        let x_m = (&x + &x_next) * 0.5;
        let v_m = (&x_next - &x) / dt;
        let m_mid = mass_matrix(grid, inertia, &map, &x_m)?;
        p = (m_mid * &v_m) * 2.0 - p;
        x = x_next;
        v = velocity_from_momentum(grid, inertia, &map, &x, &p)?;

        report.steps += 1;
        steps_since_build += 1;
        let t_next = initial.time + (step + 1) as f64 * dt;
        trajectory
            .samples
            .push(record_sample(grid, law, loads, &map, t_next, &x, &v, &p)?);
    }

    let final_state = DynamicState {
        dofs: map.unpack(&x)?,
        rates: map.unpack_rate(&v)?,
        time: initial.time + config.steps as f64 * dt,
    };
    Ok((final_state, trajectory, report))
}

// ---------------------------------------------------------------------------
// Linearized spectrum
// ---------------------------------------------------------------------------

/// Angular frequencies (rad/s) of the model linearized about `dofs`, in
/// ascending order.
///
/// The stiffness is the finite-difference derivative of the reduced
/// potential gradient, the mass is the consistent matrix of the kinetic
/// energy, and the generalized symmetric eigenproblem is reduced with a
/// Cholesky factor of the mass. Negative stiffness eigenvalues (an unstable
/// configuration) are clamped to zero frequency.
pub fn linearized_frequencies(
    grid: &Grid,
    law: &MaterialLaw,
    inertia: &SectionInertia,
    loads: &LoadCase,
    base: &ClampedBase,
    dofs: &DofVector,
) -> Result<Vec<f64>> {
    law.validate()?;
    law.bending_isotropic()?;
    inertia.validate()?;
    loads.validate()?;
    let map = TiDofMap::new(grid, base)?;
    let x = map.pack(dofs)?;
    let dim = x.len();

    let mut k = DMatrix::zeros(dim, dim);
    let mut xp = x.clone();
    for j in 0..dim {
        let step = STIFFNESS_FD * (1.0 + x[j].abs());
        let hi = x[j] + step;
        let lo = x[j] - step;
        let delta = 0.5 * (hi - lo);
        xp[j] = hi;
        let gp = potential_gradient(grid, law, loads, &map, &xp)?;
        xp[j] = lo;
        let gm = potential_gradient(grid, law, loads, &map, &xp)?;
        xp[j] = x[j];
        k.column_mut(j).copy_from(&((gp - gm) / (2.0 * delta)));
    }
    let k = (&k + &k.transpose()) * 0.5;

    let m = mass_matrix(grid, inertia, &map, &x)?;
    let chol = m
        .cholesky()
        .ok_or_else(|| RodError::Validation("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(&k)
        .ok_or_else(|| RodError::Validation("mass factor is singular".into()))?;
    let a = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| RodError::Validation("mass factor is singular".into()))?;
    let a = (&a + &a.transpose()) * 0.5;
    let eigen = SymmetricEigen::new(a);
    let mut omega: Vec<f64> = eigen
        .eigenvalues
        .iter()
        .map(|&lambda| lambda.max(0.0).sqrt())
        .collect();
    omega.sort_by(|p, q| p.partial_cmp(q).expect("frequencies are finite"));
    Ok(omega)
}

// ---------------------------------------------------------------------------
// Spectral utilities
// ---------------------------------------------------------------------------

/// Dominant angular frequency (rad/s) of a uniformly sampled series.
///
/// The series is mean-removed, Hann-windowed and transformed; the strongest
/// interior bin seeds a golden-section style refinement of the windowed
/// transform magnitude between the two neighboring bins, which removes the
/// bin-quantization error. Needs at least 8 samples and a non-constant
/// series.
pub fn dominant_frequency(series: &[f64], dt: f64) -> Result<f64> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(RodError::Validation(format!(
            "sample spacing must be finite and positive, got {dt}"
        )));
    }
    let n = series.len();
    if n < 8 {
        return Err(RodError::Validation(format!(
            "need at least 8 samples to estimate a frequency, got {n}"
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(RodError::Validation(
            "series contains non-finite samples".into(),
        ));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let windowed: Vec<f64> = series
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let w = 0.5 - 0.5 * (TAU * k as f64 / n as f64).cos();
            (v - mean) * w
        })
        .collect();

    let mut buf: Vec<Complex<f64>> = windowed.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let half = n / 2;
    let mut k_star = 0;
    let mut best = 0.0_f64;
    for (k, value) in buf.iter().enumerate().take(half).skip(1) {
        let mag = value.norm_sqr();
        if mag > best {
            best = mag;
            k_star = k;
        }
    }
    if best <= 0.0 {
        return Err(RodError::Validation(
            "series is constant, no dominant frequency".into(),
        ));
    }

    let magnitude = |omega: f64| -> f64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (k, &v) in windowed.iter().enumerate() {
            let phase = omega * dt * k as f64;
            re += v * phase.cos();
            im -= v * phase.sin();
        }
        re * re + im * im
    };
    let bin = TAU / (n as f64 * dt);
    let mut lo = bin * (k_star as f64 - 1.0);
    let mut hi = bin * (k_star as f64 + 1.0);
    // The Hann-windowed magnitude is unimodal across the peak bin, so a
    // ternary search converges to the continuous maximizer.
    for _ in 0..120 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if magnitude(a) < magnitude(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    Ok(0.5 * (lo + hi))
}
