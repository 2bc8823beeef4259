//! Critical-load detection along the trivial branch of an axially
//! compressed clamped-free rod.
//!
//! A straight rod under a compressive tip force stays straight at every
//! load level (uniform axial strain is an exact equilibrium of the
//! discretization), but past the critical load that equilibrium stops being
//! a minimum. The detector walks the load range, probes positive
//! definiteness of the reduced Hessian at each trivial equilibrium, and
//! bisects the first bracket where definiteness is lost.

use super::{reduced_hessian_definite, solve_ti_static, ClampedBase, NewtonConfig};
use crate::discretization::{DofVector, Grid, LoadCase};
use crate::error::RodError;
use crate::rod_model::MaterialLaw;
use crate::Result;

/// Relative width at which the bisection stops.
const BISECTION_REL_TOL: f64 = 1e-10;

/// Bisection iteration cap.
const BISECTION_MAX_ITER: usize = 80;

/// Trivial compressed equilibrium under tip load `p` toward the clamp:
/// uniform stretch `α = 1 − p/EA` along the clamp direction.
fn trivial_state(grid: &Grid, law: &MaterialLaw, base: &ClampedBase, p: f64) -> Result<DofVector> {
    let dir = base.unit_direction()?;
    let alpha = 1.0 - p / law.ea;
    if alpha <= 0.0 {
        return Err(RodError::Validation(format!(
            "compressive load {p} exceeds the axial collapse load EA = {}",
            law.ea
        )));
    }
    let n = grid.n_nodes();
    Ok(DofVector {
        r: (0..n)
            .map(|i| base.position + dir * (alpha * grid.node_s(i)))
            .collect(),
        t: vec![dir * alpha; n],
        psi: vec![base.twist; n],
        rotations: None,
    })
}

/// Stability probe at compressive load `p`. Re-solves from the closed-form
/// trivial state (a no-op when the algebra is exact) and tests the reduced
/// Hessian.
fn stable_at(
    grid: &Grid,
    law: &MaterialLaw,
    base: &ClampedBase,
    config: &NewtonConfig,
    p: f64,
) -> Result<bool> {
    let dir = base.unit_direction()?;
    let loads = LoadCase {
        tip_force: -dir * p,
        ..LoadCase::zero()
    };
    let guess = trivial_state(grid, law, base, p)?;
    let (state, _report) = solve_ti_static(grid, &guess, law, &loads, base, config)?;
    reduced_hessian_definite(grid, &state, law, &loads, base)
}

/// Finds the critical compressive tip load of a clamped-free rod.
///
/// Scans `steps` uniform increments of `load_range = (lo, hi)` (newtons,
/// compression positive, applied along `−base.direction`), solving the
/// trivial branch and probing stability at each level. The first
/// stable-to-unstable bracket is bisected to a relative width of `1e-10`.
///
/// Fails with [`RodError::BucklingNotDetected`] when the whole range stays
/// stable, and with a validation error when the range starts unstable
/// (the critical load lies below `lo`).
pub fn continuation_buckling(
    grid: &Grid,
    law: &MaterialLaw,
    base: &ClampedBase,
    load_range: (f64, f64),
    steps: usize,
    config: &NewtonConfig,
) -> Result<f64> {
    let (lo, hi) = load_range;
    if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi <= lo || steps == 0 {
        return Err(RodError::Validation(format!(
            "load range ({lo}, {hi}) with {steps} steps is not a valid scan"
        )));
    }
    law.bending_isotropic()?;

    if !stable_at(grid, law, base, config, lo)? {
        return Err(RodError::Validation(format!(
            "trivial branch is already unstable at the lower load {lo}"
        )));
    }
    let mut p_stable = lo;
    let mut bracket = None;
    for k in 1..=steps {
        let p = lo + (hi - lo) * (k as f64) / (steps as f64);
        if stable_at(grid, law, base, config, p)? {
            p_stable = p;
        } else {
            bracket = Some((p_stable, p));
            break;
        }
    }
    let (mut a, mut b) = bracket.ok_or(RodError::BucklingNotDetected { lo, hi, steps })?;

    for _ in 0..BISECTION_MAX_ITER {
        if (b - a) <= BISECTION_REL_TOL * b.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (a + b);
        if stable_at(grid, law, base, config, mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::Vec3;
    use std::f64::consts::PI;

    fn column_law() -> MaterialLaw {
        MaterialLaw::transversely_isotropic(1e4, 1.0, 0.8).unwrap()
    }

    #[test]
    fn trivial_state_is_exact_equilibrium() {
        let grid = Grid::uniform(6, 1.0).unwrap();
        let base = ClampedBase::canonical();
        let law = column_law();
        let p = 1.2;
        let loads = LoadCase {
            tip_force: Vec3::new(0.0, 0.0, -p),
            ..LoadCase::zero()
        };
        let guess = trivial_state(&grid, &law, &base, p).unwrap();
        let grad = crate::discretization::assemble_gradient(&grid, &guess, &law, &loads).unwrap();
        // Only the clamped entries carry reaction forces.
        let mut interior_max: f64 = 0.0;
        for i in 1..grid.n_nodes() {
            interior_max = interior_max.max(grad.r[i].amax()).max(grad.t[i].amax());
            interior_max = interior_max.max(grad.psi[i].abs());
        }
        interior_max = interior_max.max(grad.t[0].dot(&Vec3::z()).abs());
        assert!(interior_max < 1e-9, "interior residual {interior_max}");
    }

    #[test]
    fn detects_euler_load_on_coarse_mesh() {
        let grid = Grid::uniform(8, 1.0).unwrap();
        let base = ClampedBase::canonical();
        let law = column_law();
        let euler = PI * PI / 4.0;
        let p = continuation_buckling(
            &grid,
            &law,
            &base,
            (0.5 * euler, 1.5 * euler),
            6,
            &NewtonConfig::default(),
        )
        .unwrap();
        // Extensibility shifts the critical load below the inextensible
        // Euler value by roughly 2P_E/EA; the mesh itself is fourth-order
        // accurate, so 1% slack absorbs both on this coarse grid.
        assert!((p - euler).abs() / euler < 0.01, "critical load {p}");
    }

    #[test]
    fn stable_range_reports_no_buckling() {
        let grid = Grid::uniform(4, 1.0).unwrap();
        let base = ClampedBase::canonical();
        let law = column_law();
        let err =
            continuation_buckling(&grid, &law, &base, (0.1, 0.5), 4, &NewtonConfig::default())
                .unwrap_err();
        assert!(matches!(err, RodError::BucklingNotDetected { .. }));
    }
}
