//! Unconstrained Newton solver on the scalar-twist path.
//!
//! Unknowns are the free entries of the tangent-plus-twist parametrization:
//! the base tangent magnitude plus position, tangent, and twist of every
//! node past the clamp. The base position, tangent direction, and twist are
//! eliminated, so no constraints and no multipliers appear and equilibrium
//! is plain energy minimization. Bending must be isotropic on this path.

use nalgebra::{DMatrix, DVector};

use super::{sample_fields, ClampedBase, NewtonConfig, SolveReport};
use crate::discretization::{assemble_energy, assemble_gradient, DofVector, Grid, LoadCase};
use crate::error::RodError;
use crate::rod_model::MaterialLaw;
use crate::so3::Vec3;
use crate::Result;

/// Step size floor below which the energy line search gives up.
const MIN_STEP: f64 = 1e-13;

/// Relative perturbation of the central differences behind the Hessian.
/// Small enough that the truncation error (third derivatives scale with the
/// axial stiffness) stays below the softest curvature of the energy; the
/// matching roundoff also scales with the stiffness, so the balance holds
/// across material ranges.
const HESSIAN_FD_STEP: f64 = 1e-8;

/// Maps between the reduced unknown vector and full dof vectors.
///
/// Layout: entry `0` is the base tangent magnitude `α` (the base tangent is
/// `α·direction`), followed by `[r, t, ψ]` blocks for nodes `1..n`, giving
/// `1 + 7(n − 1)` entries for `n` nodes.
#[derive(Debug, Clone)]
pub struct TiDofMap {
    position: Vec3,
    direction: Vec3,
    twist: f64,
    n_nodes: usize,
}

impl TiDofMap {
    /// Builds the map for `grid` clamped at `base`.
    pub fn new(grid: &Grid, base: &ClampedBase) -> Result<Self> {
        Ok(Self {
            position: base.position,
            direction: base.unit_direction()?,
            twist: base.twist,
            n_nodes: grid.n_nodes(),
        })
    }

    /// Number of reduced unknowns.
    #[must_use]
    pub fn len(&self) -> usize {
        1 + 7 * (self.n_nodes - 1)
    }

    /// Whether the map is degenerate (never for a valid grid).
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.n_nodes < 2
    }

    /// Extracts the reduced vector from a full state. The base tangent is
    /// projected onto the clamp direction; transverse parts are discarded.
    pub fn pack(&self, dofs: &DofVector) -> Result<DVector<f64>> {
        self.check(dofs)?;
        let mut x = DVector::zeros(self.len());
        x[0] = dofs.t[0].dot(&self.direction);
        for i in 1..self.n_nodes {
            let at = 1 + 7 * (i - 1);
            x.rows_mut(at, 3).copy_from(&dofs.r[i]);
            x.rows_mut(at + 3, 3).copy_from(&dofs.t[i]);
            x[at + 6] = dofs.psi[i];
        }
        Ok(x)
    }

    /// Unit clamp direction of the base tangent.
    #[must_use]
    pub fn clamp_direction(&self) -> Vec3 {
        self.direction
    }

    /// Number of nodes of the mapped grid.
    #[must_use]
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Expands a reduced rate (velocity) vector into full nodal rates. The
    /// clamped entries are zero: the base position and twist do not move and
    /// the base tangent only changes magnitude along the clamp direction.
    pub fn unpack_rate(&self, v: &DVector<f64>) -> Result<DofVector> {
        if v.len() != self.len() {
            return Err(RodError::GridMismatch(format!(
                "reduced rate vector has {} entries, map expects {}",
                v.len(),
                self.len()
            )));
        }
        let n = self.n_nodes;
        let mut r = Vec::with_capacity(n);
        let mut t = Vec::with_capacity(n);
        let mut psi = Vec::with_capacity(n);
        r.push(Vec3::zeros());
        t.push(self.direction * v[0]);
        psi.push(0.0);
        for i in 1..n {
            let at = 1 + 7 * (i - 1);
            r.push(Vec3::new(v[at], v[at + 1], v[at + 2]));
            t.push(Vec3::new(v[at + 3], v[at + 4], v[at + 5]));
            psi.push(v[at + 6]);
        }
        Ok(DofVector {
            r,
            t,
            psi,
            rotations: None,
        })
    }

    /// Expands a reduced vector into a full state with the clamp applied.
    pub fn unpack(&self, x: &DVector<f64>) -> Result<DofVector> {
        if x.len() != self.len() {
            return Err(RodError::GridMismatch(format!(
                "reduced vector has {} entries, map expects {}",
                x.len(),
                self.len()
            )));
        }
        let n = self.n_nodes;
        let mut r = Vec::with_capacity(n);
        let mut t = Vec::with_capacity(n);
        let mut psi = Vec::with_capacity(n);
        r.push(self.position);
        t.push(self.direction * x[0]);
        psi.push(self.twist);
        for i in 1..n {
            let at = 1 + 7 * (i - 1);
            r.push(Vec3::new(x[at], x[at + 1], x[at + 2]));
            t.push(Vec3::new(x[at + 3], x[at + 4], x[at + 5]));
            psi.push(x[at + 6]);
        }
        Ok(DofVector {
            r,
            t,
            psi,
            rotations: None,
        })
    }

    /// Restricts a full gradient to the reduced unknowns.
    pub fn reduce_gradient(
        &self,
        grad: &crate::discretization::DofGradient,
    ) -> Result<DVector<f64>> {
        if grad.r.len() != self.n_nodes {
            return Err(RodError::GridMismatch(format!(
                "gradient has {} nodes, map expects {}",
                grad.r.len(),
                self.n_nodes
            )));
        }
        let mut g = DVector::zeros(self.len());
        g[0] = grad.t[0].dot(&self.direction);
        for i in 1..self.n_nodes {
            let at = 1 + 7 * (i - 1);
            g.rows_mut(at, 3).copy_from(&grad.r[i]);
            g.rows_mut(at + 3, 3).copy_from(&grad.t[i]);
            g[at + 6] = grad.psi[i];
        }
        Ok(g)
    }

    fn check(&self, dofs: &DofVector) -> Result<()> {
        if dofs.n_nodes() != self.n_nodes {
            return Err(RodError::GridMismatch(format!(
                "state has {} nodes, map expects {}",
                dofs.n_nodes(),
                self.n_nodes
            )));
        }
        if dofs.has_rotations() {
            return Err(RodError::Validation(
                "scalar-path map cannot carry rotation dofs".into(),
            ));
        }
        Ok(())
    }
}

/// Reduced energy gradient at `x`.
fn reduced_gradient(
    map: &TiDofMap,
    grid: &Grid,
    law: &MaterialLaw,
    loads: &LoadCase,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let dofs = map.unpack(x)?;
    let grad = assemble_gradient(grid, &dofs, law, loads)?;
    map.reduce_gradient(&grad)
}

/// Central-difference Hessian of the reduced energy, from the analytic
/// gradient, symmetrized.
fn fd_hessian(
    map: &TiDofMap,
    grid: &Grid,
    law: &MaterialLaw,
    loads: &LoadCase,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut xp = x.clone();
    for j in 0..n {
        let step = HESSIAN_FD_STEP * (1.0 + x[j].abs());
        // Use the exactly representable perturbation.
        let hi = x[j] + step;
        let lo = x[j] - step;
        let delta = 0.5 * (hi - lo);
        xp[j] = hi;
        let gp = reduced_gradient(map, grid, law, loads, &xp)?;
        xp[j] = lo;
        let gm = reduced_gradient(map, grid, law, loads, &xp)?;
        xp[j] = x[j];
        h.column_mut(j).copy_from(&((gp - gm) / (2.0 * delta)));
    }
    let ht = h.transpose();
    Ok((h + ht) * 0.5)
}

/// Newton direction from the (possibly shifted) factorized Hessian. Falls
/// back to steepest descent if no shift renders the matrix positive.
fn descent_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let scale = h.diagonal().amax().max(1.0);
    let mut tau = 0.0;
    loop {
        let shifted = if tau == 0.0 {
            h.clone()
        } else {
            let mut m = h.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += tau;
            }
            m
        };
        if let Some(chol) = shifted.cholesky() {
            return chol.solve(&(-g));
        }
        tau = if tau == 0.0 { 1e-8 * scale } else { tau * 10.0 };
        if tau > 1e12 * scale {
            return -g.clone();
        }
    }
}

/// Runs Newton on one load level. Returns the accepted iterate and whether
/// the tolerance was met within the budget.
#[allow(clippy::too_many_arguments)]
fn newton_level(
    map: &TiDofMap,
    grid: &Grid,
    law: &MaterialLaw,
    loads: &LoadCase,
    config: &NewtonConfig,
    x: &mut DVector<f64>,
    iterations: &mut usize,
    history: &mut Vec<f64>,
) -> Result<(bool, f64)> {
    let tol = config.effective_tol(law);
    let mut res = f64::INFINITY;
    for _ in 0..config.max_iter {
        let g = reduced_gradient(map, grid, law, loads, x)?;
        res = g.amax();
        history.push(res);
        if res <= tol {
            return Ok((true, res));
        }
        *iterations += 1;
        let h = fd_hessian(map, grid, law, loads, x)?;
        let p = descent_direction(&h, &g);
        let slope = g.dot(&p);
        let e0 = assemble_energy(grid, &map.unpack(x)?, law, loads)?;
        // Once the predicted decrease drops below the rounding floor of the
        // energy, sufficient decrease is unmeasurable; fall back to accepting
        // steps that shrink the gradient instead.
        let noise = 1e-13 * (1.0 + e0.abs());
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha >= MIN_STEP {
            let xt = &*x + &p * alpha;
            let et = assemble_energy(grid, &map.unpack(&xt)?, law, loads)?;
            let armijo = et <= e0 + config.armijo_c * alpha * slope;
            let in_noise =
                et <= e0 + noise && reduced_gradient(map, grid, law, loads, &xt)?.amax() < res;
            if armijo || in_noise {
                *x = xt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Ok((false, res));
        }
    }
    let g = reduced_gradient(map, grid, law, loads, x)?;
    res = res.min(g.amax());
    Ok((res <= tol, res))
}

/// Solves static equilibrium on the scalar-twist path.
///
/// Minimizes the total potential over the reduced unknowns with Newton
/// iterations: analytic gradient, finite-difference Hessian of that
/// gradient, Cholesky with an escalating diagonal shift when the Hessian
/// is indefinite, and an Armijo backtracking line search on the energy.
/// Loads ramp up over `config.continuation_steps` uniform increments.
///
/// The initial state must be rotation-free; tip bending moments are
/// rejected because the scalar path cannot pair with them.
pub fn solve_ti_static(
    grid: &Grid,
    initial: &DofVector,
    law: &MaterialLaw,
    loads: &LoadCase,
    base: &ClampedBase,
    config: &NewtonConfig,
) -> Result<(DofVector, SolveReport)> {
    config.validate()?;
    law.validate()?;
    law.bending_isotropic()?;
    loads.validate()?;
    initial.validate(grid)?;
    if loads.tip_bending_moment.is_some() {
        return Err(RodError::Validation(
            "tip bending moments need the rotation path; use the general solver".into(),
        ));
    }
    let map = TiDofMap::new(grid, base)?;
    let mut x = map.pack(initial)?;

    let mut report = SolveReport::empty();
    let steps = config.continuation_steps;
    let mut level_loads = loads.clone();
    for step in 1..=steps {
        let frac = step as f64 / steps as f64;
        level_loads = loads.with_factor(loads.load_factor * frac);
        let (ok, res) = newton_level(
            &map,
            grid,
            law,
            &level_loads,
            config,
            &mut x,
            &mut report.iterations,
            &mut report.residual_history,
        )?;
        report.continuation_steps = step;
        report.residual_norm = res;
        if !ok {
            let dofs = map.unpack(&x)?;
            finalize(&mut report, grid, &dofs, law, &level_loads)?;
            return Err(RodError::NonConvergence {
                iterations: report.iterations,
                residual: res,
                report: Box::new(report),
            });
        }
    }

    let dofs = map.unpack(&x)?;
    report.converged = true;
    finalize(&mut report, grid, &dofs, law, &level_loads)?;
    Ok((dofs, report))
}

fn finalize(
    report: &mut SolveReport,
    grid: &Grid,
    dofs: &DofVector,
    law: &MaterialLaw,
    loads: &LoadCase,
) -> Result<()> {
    report.energy = assemble_energy(grid, dofs, law, loads)?;
    report.tip_position = dofs.r[dofs.n_nodes() - 1];
    report.tip_twist = dofs.psi[dofs.n_nodes() - 1] - dofs.psi[0];
    report.field_samples = sample_fields(grid, dofs, law)?;
    Ok(())
}

/// Whether the reduced energy Hessian at `dofs` is positive definite.
///
/// Probes second-order stability of an equilibrium: a Cholesky factorization
/// of the unshifted finite-difference Hessian exists exactly when every
/// admissible perturbation increases the total potential to second order.
pub fn reduced_hessian_definite(
    grid: &Grid,
    dofs: &DofVector,
    law: &MaterialLaw,
    loads: &LoadCase,
    base: &ClampedBase,
) -> Result<bool> {
    law.bending_isotropic()?;
    let map = TiDofMap::new(grid, base)?;
    let x = map.pack(dofs)?;
    let h = fd_hessian(&map, grid, law, loads, &x)?;
    Ok(h.cholesky().is_some())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::interpolate;
    use approx::assert_relative_eq;

    fn law() -> MaterialLaw {
        MaterialLaw::transversely_isotropic(1e3, 1.0, 0.8).unwrap()
    }

    #[test]
    fn map_round_trips() {
        let grid = Grid::uniform(3, 1.0).unwrap();
        let base = ClampedBase::canonical();
        let map = TiDofMap::new(&grid, &base).unwrap();
        assert_eq!(map.len(), 1 + 7 * 3);
        let mut dofs = DofVector::straight(&grid, &Vec3::zeros(), &Vec3::z()).unwrap();
        dofs.r[2].x += 0.1;
        dofs.t[1].y -= 0.2;
        dofs.psi[3] = 0.3;
        let x = map.pack(&dofs).unwrap();
        let back = map.unpack(&x).unwrap();
        for i in 0..4 {
            assert_relative_eq!((back.r[i] - dofs.r[i]).norm(), 0.0);
            assert_relative_eq!((back.t[i] - dofs.t[i]).norm(), 0.0);
            assert_relative_eq!(back.psi[i], dofs.psi[i]);
        }
    }

    #[test]
    fn unloaded_rod_converges_immediately() {
        let grid = Grid::uniform(4, 1.0).unwrap();
        let base = ClampedBase::canonical();
        let dofs0 = DofVector::straight(&grid, &Vec3::zeros(), &Vec3::z()).unwrap();
        let (dofs, report) = solve_ti_static(
            &grid,
            &dofs0,
            &law(),
            &LoadCase::zero(),
            &base,
            &NewtonConfig::default(),
        )
        .unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 1);
        assert!(report.energy.abs() < 1e-14);
        assert_relative_eq!(
            (dofs.r[4] - Vec3::new(0.0, 0.0, 1.0)).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn tip_torque_twists_linearly() {
        let grid = Grid::uniform(8, 2.0).unwrap();
        let base = ClampedBase::canonical();
        let dofs0 = DofVector::straight(&grid, &Vec3::zeros(), &Vec3::z()).unwrap();
        let torque = 0.35;
        let loads = LoadCase {
            tip_moment: torque,
            ..LoadCase::zero()
        };
        let m = law();
        let (dofs, report) =
            solve_ti_static(&grid, &dofs0, &m, &loads, &base, &NewtonConfig::default()).unwrap();
        assert!(report.converged);
        let expected = torque * 2.0 / m.gj;
        assert_relative_eq!(report.tip_twist, expected, epsilon = 1e-10);
        // Twist grows linearly along the rod and the centerline stays put.
        assert_relative_eq!(dofs.psi[4], expected / 2.0, epsilon = 1e-10);
        assert_relative_eq!(
            (dofs.r[8] - Vec3::new(0.0, 0.0, 2.0)).norm(),
            0.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn small_tip_force_matches_linear_deflection() {
        // FL²/EI = 1e-3 keeps geometric corrections far below the tolerance.
        let grid = Grid::uniform(32, 1.0).unwrap();
        let base = ClampedBase::canonical();
        let dofs0 = DofVector::straight(&grid, &Vec3::zeros(), &Vec3::z()).unwrap();
        let m = MaterialLaw::transversely_isotropic(1e7, 1.0, 0.8).unwrap();
        let f = 1e-3;
        let loads = LoadCase {
            tip_force: Vec3::new(f, 0.0, 0.0),
            ..LoadCase::zero()
        };
        let (dofs, report) =
            solve_ti_static(&grid, &dofs0, &m, &loads, &base, &NewtonConfig::default()).unwrap();
        assert!(report.converged);
        let expected = f / (3.0 * m.bending_isotropic().unwrap());
        assert_relative_eq!(dofs.r[32].x, expected, max_relative = 5e-3);
        // Interior deflection x(s) = F s² (3L − s) / 6EI.
        let mid = interpolate(&grid, &dofs, 0.5).unwrap();
        let expected_mid = f * 0.25 * (3.0 - 0.5) / 6.0;
        assert_relative_eq!(mid.r.x, expected_mid, max_relative = 5e-3);
    }

    #[test]
    fn continuation_reaches_large_deflection() {
        let grid = Grid::uniform(16, 1.0).unwrap();
        let base = ClampedBase::canonical();
        let dofs0 = DofVector::straight(&grid, &Vec3::zeros(), &Vec3::z()).unwrap();
        let m = MaterialLaw::transversely_isotropic(1e4, 1.0, 0.8).unwrap();
        let loads = LoadCase {
            tip_force: Vec3::new(2.0, 0.0, 0.0),
            ..LoadCase::zero()
        };
        let config = NewtonConfig {
            continuation_steps: 4,
            ..NewtonConfig::default()
        };
        let (dofs, report) = solve_ti_static(&grid, &dofs0, &m, &loads, &base, &config).unwrap();
        assert!(report.converged);
        assert_eq!(report.continuation_steps, 4);
        // Strongly nonlinear regime: tip deflection well below the linear
        // estimate but clearly large.
        let linear = 2.0 / 3.0;
        assert!(dofs.r[16].x > 0.3 * linear && dofs.r[16].x < 0.95 * linear);
        // Energy balance: equilibrium residual is tiny.
        assert!(report.residual_norm <= 1e-10);
    }

    #[test]
    fn starved_iteration_budget_reports_nonconvergence() {
        let grid = Grid::uniform(8, 1.0).unwrap();
        let base = ClampedBase::canonical();
        let dofs0 = DofVector::straight(&grid, &Vec3::zeros(), &Vec3::z()).unwrap();
        let m = MaterialLaw::transversely_isotropic(1e4, 1.0, 0.8).unwrap();
        let loads = LoadCase {
            tip_force: Vec3::new(1.5, 0.0, 0.0),
            ..LoadCase::zero()
        };
        let config = NewtonConfig {
            max_iter: 1,
            ..NewtonConfig::default()
        };
        let err = solve_ti_static(&grid, &dofs0, &m, &loads, &base, &config).unwrap_err();
        match err {
            RodError::NonConvergence { report, .. } => {
                assert!(!report.converged);
                assert!(report.residual_norm > 1e-10);
            }
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_tip_bending_moment() {
        let grid = Grid::uniform(4, 1.0).unwrap();
        let base = ClampedBase::canonical();
        let dofs0 = DofVector::straight(&grid, &Vec3::zeros(), &Vec3::z()).unwrap();
        let loads = LoadCase {
            tip_bending_moment: Some(Vec3::new(0.1, 0.0, 0.0)),
            ..LoadCase::zero()
        };
        let err = solve_ti_static(
            &grid,
            &dofs0,
            &law(),
            &loads,
            &base,
            &NewtonConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, RodError::Validation(_)));
    }

    #[test]
    fn straight_state_is_stable_below_compression() {
        let grid = Grid::uniform(8, 1.0).unwrap();
        let base = ClampedBase::canonical();
        let m = MaterialLaw::transversely_isotropic(1e4, 1.0, 0.8).unwrap();
        let dofs = DofVector::straight(&grid, &Vec3::zeros(), &Vec3::z()).unwrap();
        let stable = reduced_hessian_definite(&grid, &dofs, &m, &LoadCase::zero(), &base).unwrap();
        assert!(stable);
    }
}
