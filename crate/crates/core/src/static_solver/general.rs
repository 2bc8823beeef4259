//! Constrained Newton solver on the rotation path.
//!
//! Unknowns are the base tangent vector plus position, tangent, and an
//! incremental rotation vector per free node; nodal frames update
//! multiplicatively. Tangency of frames and centerline is enforced at the
//! nodes through Lagrange multipliers, so each Newton step solves a saddle
//! (KKT) system instead of a plain stiffness system. This path carries
//! anisotropic bending and dead tip bending moments, which the scalar-twist
//! path cannot.

use nalgebra::{DMatrix, DVector, Vector2};

use super::{sample_fields, ClampedBase, LagrangeFields, NewtonConfig, SolveReport};
use crate::discretization::{
    accumulated_twist, assemble_gradient, constraint_jacobian, nodal_constraints, node_weights,
    DofGradient, DofVector, Grid, LoadCase,
};
use crate::error::RodError;
use crate::rod_model::MaterialLaw;
use crate::so3::{chi_no_drill, exp_rodrigues, Director, Rotation, Vec3};
use crate::Result;

/// Step size floor below which the residual line search gives up.
const MIN_STEP: f64 = 1e-13;

/// Relative perturbation of the central differences behind the Hessian.
/// Small enough that the truncation error (third derivatives scale with the
/// axial stiffness) stays below the softest curvature of the energy; the
/// matching roundoff also scales with the stiffness, so the balance holds
/// across material ranges.
const HESSIAN_FD_STEP: f64 = 1e-8;

/// Pivot threshold (relative to the largest KKT entry) below which the
/// factorization is reported singular.
const PIVOT_TOL: f64 = 1e-14;

/// Agreement required between a supplied node-0 frame and the clamp frame.
const BASE_FRAME_TOL: f64 = 1e-8;

/// Index layout of the reduced rotation-path unknowns.
///
/// Layout: entries `0..3` are the base tangent vector (its direction is
/// steered onto the clamp axis by the node-0 constraint, its magnitude is
/// free), followed by `[r, t, θ]` blocks for nodes `1..n`. The `θ` entries
/// are increments: a step `δθ` updates the nodal frame as `exp(δθ̂)Λ`.
#[derive(Debug, Clone)]
pub struct GeneralDofMap {
    n_nodes: usize,
}

impl GeneralDofMap {
    /// Builds the map for `grid`.
    #[must_use]
    pub fn new(grid: &Grid) -> Self {
        Self {
            n_nodes: grid.n_nodes(),
        }
    }

    /// Number of reduced primal unknowns.
    #[must_use]
    pub fn dim_primal(&self) -> usize {
        3 + 9 * (self.n_nodes - 1)
    }

    /// Number of multiplier unknowns (two per node).
    #[must_use]
    pub fn dim_dual(&self) -> usize {
        2 * self.n_nodes
    }

    /// Column offset of node `i`'s tangent block.
    fn t_slot(&self, i: usize) -> usize {
        if i == 0 {
            0
        } else {
            3 + 9 * (i - 1) + 3
        }
    }

    /// Column offset of node `i`'s rotation block (nodes `1..n` only).
    fn theta_slot(&self, i: usize) -> usize {
        debug_assert!(i > 0);
        3 + 9 * (i - 1) + 6
    }

    /// Applies a scaled primal step to a state: additive on positions and
    /// tangents, multiplicative on frames. Node 0 keeps its position and
    /// frame (the clamp), but its tangent vector moves.
    #[allow(clippy::needless_range_loop)] // parallel arrays share the node index
    pub fn retract(&self, state: &DofVector, dz: &DVector<f64>, alpha: f64) -> DofVector {
        let mut out = state.clone();
        out.t[0] += Vec3::new(dz[0], dz[1], dz[2]) * alpha;
        let rot = out.rotations.as_mut().expect("rotation-path state");
        for i in 1..self.n_nodes {
            let at = 3 + 9 * (i - 1);
            out.r[i] += Vec3::new(dz[at], dz[at + 1], dz[at + 2]) * alpha;
            out.t[i] += Vec3::new(dz[at + 3], dz[at + 4], dz[at + 5]) * alpha;
            let theta = Vec3::new(dz[at + 6], dz[at + 7], dz[at + 8]) * alpha;
            rot[i] = exp_rodrigues(&theta) * rot[i];
        }
        out
    }

    /// Restricts a full gradient to the reduced primal unknowns.
    #[allow(clippy::needless_range_loop)] // parallel arrays share the node index
    fn reduce(&self, grad: &DofGradient) -> DVector<f64> {
        let theta = grad.theta.as_ref().expect("rotation-path gradient");
        let mut g = DVector::zeros(self.dim_primal());
        g.rows_mut(0, 3).copy_from(&grad.t[0]);
        for i in 1..self.n_nodes {
            let at = 3 + 9 * (i - 1);
            g.rows_mut(at, 3).copy_from(&grad.r[i]);
            g.rows_mut(at + 3, 3).copy_from(&grad.t[i]);
            g.rows_mut(at + 6, 3).copy_from(&theta[i]);
        }
        g
    }
}

/// Gradient of the Lagrangian `E + Σ wᵢ ηᵢ·cᵢ` over the primal unknowns,
/// at fixed multipliers.
fn lagrangian_gradient(
    map: &GeneralDofMap,
    grid: &Grid,
    state: &DofVector,
    law: &MaterialLaw,
    loads: &LoadCase,
    eta: &DVector<f64>,
    weights: &[f64],
) -> Result<DVector<f64>> {
    let grad = assemble_gradient(grid, state, law, loads)?;
    let mut g = map.reduce(&grad);
    for i in 0..map.n_nodes {
        let (jt, jtheta) = constraint_jacobian(state, i)?;
        let eta_i = Vector2::new(eta[2 * i], eta[2 * i + 1]) * weights[i];
        let pull_t = jt.transpose() * eta_i;
        let at = map.t_slot(i);
        for k in 0..3 {
            g[at + k] += pull_t[k];
        }
        if i > 0 {
            let pull_theta = jtheta.transpose() * eta_i;
            let at = map.theta_slot(i);
            for k in 0..3 {
                g[at + k] += pull_theta[k];
            }
        }
    }
    Ok(g)
}

/// Weighted constraint residual stack `wᵢ cᵢ`.
fn weighted_constraints(state: &DofVector, weights: &[f64]) -> Result<(DVector<f64>, f64)> {
    let c = nodal_constraints(state)?;
    let mut out = DVector::zeros(2 * c.len());
    let mut raw_max: f64 = 0.0;
    for (i, ci) in c.iter().enumerate() {
        out[2 * i] = weights[i] * ci.x;
        out[2 * i + 1] = weights[i] * ci.y;
        raw_max = raw_max.max(ci.amax());
    }
    Ok((out, raw_max))
}

/// Line-search merit: energy plus a stiffness-weighted quadratic penalty on
/// the nodal constraints. Returns `(value, penalty_sum)` with
/// `penalty_sum = Σ wᵢ |cᵢ|²`.
fn merit_value(
    grid: &Grid,
    state: &DofVector,
    law: &MaterialLaw,
    loads: &LoadCase,
    weights: &[f64],
    rho: f64,
) -> Result<(f64, f64)> {
    let c = nodal_constraints(state)?;
    let mut pen = 0.0;
    for (i, ci) in c.iter().enumerate() {
        pen += weights[i] * ci.norm_squared();
    }
    let energy = crate::discretization::assemble_energy(grid, state, law, loads)?;
    Ok((energy + 0.5 * rho * pen, pen))
}

/// Central-difference Hessian of the Lagrangian gradient over the primal
/// unknowns, using the same retraction as the Newton update, symmetrized.
#[allow(clippy::too_many_arguments)]
fn fd_lagrangian_hessian(
    map: &GeneralDofMap,
    grid: &Grid,
    state: &DofVector,
    law: &MaterialLaw,
    loads: &LoadCase,
    eta: &DVector<f64>,
    weights: &[f64],
) -> Result<DMatrix<f64>> {
    let n = map.dim_primal();
    let mut scale = DVector::zeros(n);
    scale.rows_mut(0, 3).copy_from(&state.t[0]);
    for i in 1..map.n_nodes {
        let at = 3 + 9 * (i - 1);
        scale.rows_mut(at, 3).copy_from(&state.r[i]);
        scale.rows_mut(at + 3, 3).copy_from(&state.t[i]);
        // Rotation increments are zero at the expansion point.
    }
    let mut h = DMatrix::zeros(n, n);
    let mut dz = DVector::zeros(n);
    for j in 0..n {
        let step = HESSIAN_FD_STEP * (1.0 + scale[j].abs());
        // Use the exactly representable perturbation around the stored value.
        let delta = 0.5 * ((scale[j] + step) - (scale[j] - step));
        dz[j] = delta;
        let sp = map.retract(state, &dz, 1.0);
        let gp = lagrangian_gradient(map, grid, &sp, law, loads, eta, weights)?;
        let sm = map.retract(state, &dz, -1.0);
        let gm = lagrangian_gradient(map, grid, &sm, law, loads, eta, weights)?;
        dz[j] = 0.0;
        h.column_mut(j).copy_from(&((gp - gm) / (2.0 * delta)));
    }
    let ht = h.transpose();
    Ok((h + ht) * 0.5)
}

/// Assembles and solves the KKT step. Returns `(dz, deta)`.
fn kkt_step(
    map: &GeneralDofMap,
    h: &DMatrix<f64>,
    state: &DofVector,
    weights: &[f64],
    grad_l: &DVector<f64>,
    c_w: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let nz = map.dim_primal();
    let ne = map.dim_dual();
    let dim = nz + ne;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (nz, nz)).copy_from(h);
    for (i, &w) in weights.iter().enumerate() {
        let (jt, jtheta) = constraint_jacobian(state, i)?;
        let row = nz + 2 * i;
        let at = map.t_slot(i);
        for rr in 0..2 {
            for cc in 0..3 {
                let v = w * jt[(rr, cc)];
                kkt[(row + rr, at + cc)] = v;
                kkt[(at + cc, row + rr)] = v;
            }
        }
        if i > 0 {
            let at = map.theta_slot(i);
            for rr in 0..2 {
                for cc in 0..3 {
                    let v = w * jtheta[(rr, cc)];
                    kkt[(row + rr, at + cc)] = v;
                    kkt[(at + cc, row + rr)] = v;
                }
            }
        }
    }
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, nz).copy_from(&(-grad_l));
    rhs.rows_mut(nz, ne).copy_from(&(-c_w));

    let magnitude = kkt.amax().max(1.0);
    let lu = kkt.lu();
    let diag = lu.u().diagonal();
    let (mut pivot, mut column) = (f64::INFINITY, 0);
    for (j, u) in diag.iter().enumerate() {
        if u.abs() < pivot {
            pivot = u.abs();
            column = j;
        }
    }
    if pivot < PIVOT_TOL * magnitude {
        return Err(RodError::SingularKkt { pivot, column });
    }
    let step = lu
        .solve(&rhs)
        .ok_or(RodError::SingularKkt { pivot, column })?;
    Ok((
        step.rows(0, nz).into_owned(),
        step.rows(nz, ne).into_owned(),
    ))
}

/// Builds nodal frames from the scalar data by drill-free transport of the
/// clamp frame, each node drilled by its twist relative to the base.
fn lift_from_base(dofs: &DofVector, frame0: &Rotation) -> Result<DofVector> {
    let n = dofs.n_nodes();
    let mut dirs = Vec::with_capacity(n);
    for (i, t) in dofs.t.iter().enumerate() {
        dirs.push(Director::new(*t).map_err(|_| RodError::IrregularCurve {
            index: i,
            reason: "nodal tangent has zero norm, cannot build a frame".into(),
        })?);
    }
    let mut out = dofs.clone();
    let mut rotations = Vec::with_capacity(n);
    let mut transport = *frame0;
    for i in 0..n {
        if i > 0 {
            transport = Rotation::from_matrix_unchecked(
                chi_no_drill(&dirs[i - 1], &dirs[i])?.matrix() * transport.matrix(),
            );
        }
        let delta = dofs.psi[i] - dofs.psi[0];
        let frame = transport.matrix() * exp_rodrigues(&(Vec3::z() * delta)).matrix();
        rotations.push(Rotation::from_matrix_unchecked(frame));
    }
    out.rotations = Some(rotations);
    Ok(out)
}

/// Prepares the initial rotation-path state: clamps node 0 and ensures the
/// state carries frames consistent with the clamp.
fn prepare_state(initial: &DofVector, base: &ClampedBase) -> Result<DofVector> {
    let frame0 = base.base_frame()?;
    let dir = base.unit_direction()?;
    let mut state = initial.clone();
    state.r[0] = base.position;
    let mag = state.t[0].dot(&dir).abs().max(1e-3);
    state.t[0] = dir * mag;
    if state.has_rotations() {
        let supplied = state.rotations.as_ref().expect("checked")[0];
        let gap = (supplied.matrix() - frame0.matrix()).amax();
        if gap > BASE_FRAME_TOL {
            return Err(RodError::Validation(format!(
                "initial node-0 frame differs from the clamp frame by {gap:.2e}"
            )));
        }
        Ok(state)
    } else {
        lift_from_base(&state, &frame0)
    }
}

/// Solves static equilibrium on the rotation path.
///
/// Newton iterations on the KKT conditions of the constrained minimization:
/// analytic gradient and constraint Jacobian, finite-difference Hessian of
/// the Lagrangian gradient, dense LU on the saddle system, and a
/// backtracking line search on the max-norm of the full residual. Loads
/// ramp up over `config.continuation_steps` uniform increments.
///
/// Returns the equilibrium state (with frames), the converged multipliers
/// (`eta` from the KKT system, `mu` the torsion-multiplier lift of the
/// mixed formulation), and a report.
pub fn solve_general_static(
    grid: &Grid,
    initial: &DofVector,
    law: &MaterialLaw,
    loads: &LoadCase,
    base: &ClampedBase,
    config: &NewtonConfig,
) -> Result<(DofVector, LagrangeFields, SolveReport)> {
    config.validate()?;
    law.validate()?;
    loads.validate()?;
    initial.validate(grid)?;
    let map = GeneralDofMap::new(grid);
    let weights = node_weights(grid);
    let mut state = prepare_state(initial, base)?;
    let mut eta = DVector::zeros(map.dim_dual());

    let mut report = SolveReport::empty();
    let steps = config.continuation_steps;
    let mut level_loads = loads.clone();
    let mut converged_level = true;
    for step in 1..=steps {
        let frac = step as f64 / steps as f64;
        level_loads = loads.with_factor(loads.load_factor * frac);
        converged_level = false;
        let tol = config.effective_tol(law);
        // Penalty weight of the line-search merit. The constraints misalign
        // tangents and directors, which is priced like an axial strain.
        let rho = law.ea;
        for _ in 0..config.max_iter {
            let grad_l =
                lagrangian_gradient(&map, grid, &state, law, &level_loads, &eta, &weights)?;
            let (c_w, c_raw) = weighted_constraints(&state, &weights)?;
            let res_grad = grad_l.amax();
            report.residual_norm = res_grad;
            report.constraint_norm = c_raw;
            report.residual_history.push(res_grad.max(c_raw));
            if res_grad <= tol && c_raw <= config.tol {
                converged_level = true;
                break;
            }
            report.iterations += 1;
            let h = fd_lagrangian_hessian(&map, grid, &state, law, &level_loads, &eta, &weights)?;
            let (dz, deta) = kkt_step(&map, &h, &state, &weights, &grad_l, &c_w)?;

            // The KKT residual grows quadratically along the step whenever
            // bending excites second-order stretch, so a monotone residual
            // test would strangle the step length. The merit is a true
            // progress measure; the residual only backs it up once merit
            // differences fall below the rounding floor.
            let grad_e = map.reduce(&assemble_gradient(grid, &state, law, &level_loads)?);
            let (merit0, pen0) = merit_value(grid, &state, law, &level_loads, &weights, rho)?;
            let slope = grad_e.dot(&dz) - rho * pen0;
            // An applied tip bending moment has no global potential, so the
            // assembled energy cannot see its work. Along the retraction ray
            // the left rotation increment is exactly `alpha * dz_theta`, so
            // subtracting its work keeps the evaluated merit consistent with
            // `slope`, which already contains the moment through the
            // gradient.
            let moment_work_rate = level_loads.tip_bending_moment.as_ref().map_or(0.0, |mb| {
                let at = map.theta_slot(map.n_nodes - 1);
                level_loads.load_factor * (mb.x * dz[at] + mb.y * dz[at + 1] + mb.z * dz[at + 2])
            });
            let res0 = res_grad.max(c_w.amax());
            let noise = 1e-13 * (1.0 + merit0.abs());
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha >= MIN_STEP {
                let trial = map.retract(&state, &dz, alpha);
                let eta_t = &eta + &deta * alpha;
                let (merit_t, _) = merit_value(grid, &trial, law, &level_loads, &weights, rho)?;
                let merit_t = merit_t - alpha * moment_work_rate;
                let armijo = slope < 0.0 && merit_t <= merit0 + config.armijo_c * alpha * slope;
                let in_noise = merit_t <= merit0 + noise && {
                    let grad_t = lagrangian_gradient(
                        &map,
                        grid,
                        &trial,
                        law,
                        &level_loads,
                        &eta_t,
                        &weights,
                    )?;
                    let (c_t, _) = weighted_constraints(&trial, &weights)?;
                    grad_t.amax().max(c_t.amax()) < res0
                };
                if armijo || in_noise {
                    state = trial;
                    eta = eta_t;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        report.continuation_steps = step;
        if !converged_level {
            break;
        }
    }

    let fields = multipliers_from(&map, grid, &state, law, &level_loads, &eta)?;
    finalize(&mut report, grid, &state, law, &level_loads)?;
    if !converged_level {
        return Err(RodError::NonConvergence {
            iterations: report.iterations,
            residual: report.residual_norm.max(report.constraint_norm),
            report: Box::new(report),
        });
    }
    report.converged = true;
    Ok((state, fields, report))
}

/// Packs the KKT multipliers and the per-element torsion-multiplier lift.
///
/// The lift is `μₑ = m∥ₑ − λ m̃∥_eff − λ m̄∥ (L − sₑ)` with `sₑ` the element
/// midpoint and `m̃∥_eff` the applied tip torque plus the tangential part of
/// any tip bending moment; it vanishes identically at exact equilibrium of
/// the twist equation.
fn multipliers_from(
    map: &GeneralDofMap,
    grid: &Grid,
    state: &DofVector,
    law: &MaterialLaw,
    loads: &LoadCase,
    eta: &DVector<f64>,
) -> Result<LagrangeFields> {
    let mut fields = LagrangeFields::zeros(map.n_nodes);
    for i in 0..map.n_nodes {
        fields.eta[i] = Vector2::new(eta[2 * i], eta[2 * i + 1]);
    }
    fields.mu = super::mixed::canonical_mu(grid, state, law, loads)?;
    Ok(fields)
}

fn finalize(
    report: &mut SolveReport,
    grid: &Grid,
    state: &DofVector,
    law: &MaterialLaw,
    loads: &LoadCase,
) -> Result<()> {
    report.energy = crate::discretization::assemble_energy(grid, state, law, loads)?;
    report.tip_position = state.r[state.n_nodes() - 1];
    report.tip_twist = *accumulated_twist(state)?.last().expect("at least one node");
    report.field_samples = sample_fields(grid, state, law)?;
    Ok(())
}
