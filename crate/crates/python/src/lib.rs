//! Python bindings: thin wrappers over the rotation kernel, the static
//! solvers, the midpoint integrator and the transport diagnostics.
//!
//! Vectors cross the boundary as 3-tuples, rotations as row-major nested
//! lists, solver results as dicts. Validation failures raise `ValueError`,
//! solver non-convergence raises `RuntimeError`.

use std::f64::consts::TAU;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rodsim_core::discretization::{accumulated_twist, DofVector, Grid, LoadCase};
use rodsim_core::dynamics::{self, DynamicState, IntegratorConfig, Trajectory};
use rodsim_core::frames::{
    accumulated_correction_angle, bishop_transport, unwrapped_relative_angle, FrameField,
    SampledCurve,
};
use rodsim_core::rod_model::{MaterialLaw, SectionInertia};
use rodsim_core::so3::{self, Director, Mat3, Vec3};
use rodsim_core::static_solver::{
    continuation_buckling, solve_general_static, solve_ti_static, ClampedBase, NewtonConfig,
    SolveReport,
};
use rodsim_core::RodError;

type V3 = (f64, f64, f64);

fn v3(t: V3) -> Vec3 {
    Vec3::new(t.0, t.1, t.2)
}

fn t3(v: &Vec3) -> V3 {
    (v.x, v.y, v.z)
}

fn mat_to_rows(m: &Mat3) -> Vec<Vec<f64>> {
    (0..3)
        .map(|i| (0..3).map(|j| m[(i, j)]).collect())
        .collect()
}

fn rows_to_mat(rows: Vec<Vec<f64>>) -> PyResult<Mat3> {
    if rows.len() != 3 || rows.iter().any(|r| r.len() != 3) {
        return Err(PyValueError::new_err("rotation must be a 3x3 nested list"));
    }
    let mut m = Mat3::zeros();
    for (i, row) in rows.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            m[(i, j)] = *x;
        }
    }
    Ok(m)
}

fn to_py_err(e: RodError) -> PyErr {
    match e {
        RodError::NonConvergence { .. }
        | RodError::StepNonConvergence { .. }
        | RodError::SingularKkt { .. }
        | RodError::BucklingNotDetected { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Rotation matrix of the axis-angle vector (Rodrigues formula).
#[pyfunction]
fn exp_rodrigues(theta: V3) -> Vec<Vec<f64>> {
    mat_to_rows(so3::exp_rodrigues(&v3(theta)).matrix())
}

/// Axis-angle vector of a rotation matrix.
#[pyfunction]
fn log_rotation(matrix: Vec<Vec<f64>>) -> PyResult<V3> {
    let rot = so3::Rotation::from_matrix(rows_to_mat(matrix)?).map_err(to_py_err)?;
    Ok(t3(&so3::log_rotation(&rot)))
}

/// Drill-free rotation carrying one unit vector onto another.
#[pyfunction]
fn drill_free_rotation(from: V3, to: V3) -> PyResult<Vec<Vec<f64>>> {
    let d0 = Director::new(v3(from)).map_err(to_py_err)?;
    let d1 = Director::new(v3(to)).map_err(to_py_err)?;
    let chi = so3::chi_no_drill(&d0, &d1).map_err(to_py_err)?;
    Ok(mat_to_rows(chi.matrix()))
}

fn build_loads(
    tip_force: Option<V3>,
    tip_moment: f64,
    distributed_force: Option<V3>,
    tangent_moment_density: f64,
    tip_bending_moment: Option<V3>,
) -> LoadCase {
    let mut loads = LoadCase::zero();
    if let Some(f) = tip_force {
        loads.tip_force = v3(f);
    }
    loads.tip_moment = tip_moment;
    if let Some(q) = distributed_force {
        loads.distributed_force = v3(q);
    }
    loads.tangent_moment_density = tangent_moment_density;
    loads.tip_bending_moment = tip_bending_moment.map(v3);
    loads
}

fn report_dict<'py>(
    py: Python<'py>,
    report: &SolveReport,
    dofs: &DofVector,
    psi_l: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("converged", report.converged)?;
    d.set_item("iterations", report.iterations)?;
    d.set_item("residual_norm", report.residual_norm)?;
    d.set_item("constraint_norm", report.constraint_norm)?;
    d.set_item("energy", report.energy)?;
    d.set_item("tip", t3(&report.tip_position))?;
    d.set_item("psi_l", psi_l)?;
    d.set_item("positions", dofs.r.iter().map(t3).collect::<Vec<_>>())?;
    Ok(d)
}

/// Static equilibrium on the scalar-twist path (transversely isotropic).
#[pyfunction]
#[pyo3(signature = (length, elements, ea, ei, gj, tip_force=None, tip_moment=0.0,
                    distributed_force=None, tangent_moment_density=0.0))]
#[allow(clippy::too_many_arguments)]
fn solve_static_ti<'py>(
    py: Python<'py>,
    length: f64,
    elements: usize,
    ea: f64,
    ei: f64,
    gj: f64,
    tip_force: Option<V3>,
    tip_moment: f64,
    distributed_force: Option<V3>,
    tangent_moment_density: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = Grid::uniform(elements, length).map_err(to_py_err)?;
    let law = MaterialLaw::transversely_isotropic(ea, ei, gj).map_err(to_py_err)?;
    let loads = build_loads(
        tip_force,
        tip_moment,
        distributed_force,
        tangent_moment_density,
        None,
    );
    let base = ClampedBase::canonical();
    let start = DofVector::straight(&grid, &base.position, &Vec3::z()).map_err(to_py_err)?;
    let (dofs, report) =
        solve_ti_static(&grid, &start, &law, &loads, &base, &NewtonConfig::default())
            .map_err(to_py_err)?;
    let psi_l = report.tip_twist;
    report_dict(py, &report, &dofs, psi_l)
}

/// Static equilibrium on the constrained rotation path (general sections).
#[pyfunction]
#[pyo3(signature = (length, elements, ea, ei1, ei2, gj, tip_force=None, tip_moment=0.0,
                    distributed_force=None, tangent_moment_density=0.0,
                    tip_bending_moment=None))]
#[allow(clippy::too_many_arguments)]
fn solve_static_general<'py>(
    py: Python<'py>,
    length: f64,
    elements: usize,
    ea: f64,
    ei1: f64,
    ei2: f64,
    gj: f64,
    tip_force: Option<V3>,
    tip_moment: f64,
    distributed_force: Option<V3>,
    tangent_moment_density: f64,
    tip_bending_moment: Option<V3>,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = Grid::uniform(elements, length).map_err(to_py_err)?;
    let law = MaterialLaw::new(ea, ei1, ei2, gj).map_err(to_py_err)?;
    let loads = build_loads(
        tip_force,
        tip_moment,
        distributed_force,
        tangent_moment_density,
        tip_bending_moment,
    );
    let base = ClampedBase::canonical();
    let start = DofVector::straight(&grid, &base.position, &Vec3::z()).map_err(to_py_err)?;
    let (dofs, _, report) =
        solve_general_static(&grid, &start, &law, &loads, &base, &NewtonConfig::default())
            .map_err(to_py_err)?;
    let twist = accumulated_twist(&dofs).map_err(to_py_err)?;
    let psi_l = twist[twist.len() - 1];
    report_dict(py, &report, &dofs, psi_l)
}

/// Implicit-midpoint dynamics on the scalar-twist path, started at rest.
///
/// With `release=True` the loads shape a static pluck that is then let go;
/// otherwise they act during the motion.
#[pyfunction]
#[pyo3(signature = (length, elements, ea, ei, gj, a_rho, i_perp, i_par, dt, steps,
                    tip_force=None, tip_moment=0.0, release=false))]
#[allow(clippy::too_many_arguments)]
fn integrate_ti<'py>(
    py: Python<'py>,
    length: f64,
    elements: usize,
    ea: f64,
    ei: f64,
    gj: f64,
    a_rho: f64,
    i_perp: f64,
    i_par: f64,
    dt: f64,
    steps: usize,
    tip_force: Option<V3>,
    tip_moment: f64,
    release: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = Grid::uniform(elements, length).map_err(to_py_err)?;
    let law = MaterialLaw::transversely_isotropic(ea, ei, gj).map_err(to_py_err)?;
    let inertia = SectionInertia::round(a_rho, i_perp, i_par).map_err(to_py_err)?;
    let loads = build_loads(tip_force, tip_moment, None, 0.0, None);
    let base = ClampedBase::canonical();
    let straight = DofVector::straight(&grid, &base.position, &Vec3::z()).map_err(to_py_err)?;
    let (start, motion_loads) = if release {
        let (dofs, _) = solve_ti_static(
            &grid,
            &straight,
            &law,
            &loads,
            &base,
            &NewtonConfig::default(),
        )
        .map_err(to_py_err)?;
        (dofs, LoadCase::zero())
    } else {
        (straight, loads)
    };
    let config = IntegratorConfig {
        dt,
        steps,
        ..IntegratorConfig::default()
    };
    let (_, trajectory, report) = dynamics::integrate(
        &grid,
        &DynamicState::at_rest(start),
        &law,
        &inertia,
        &motion_loads,
        &base,
        &config,
    )
    .map_err(to_py_err)?;
    trajectory_dict(py, &trajectory, report.newton_iterations)
}

fn trajectory_dict<'py>(
    py: Python<'py>,
    trajectory: &Trajectory,
    newton_iterations: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item(
        "times",
        trajectory
            .samples
            .iter()
            .map(|s| s.time)
            .collect::<Vec<_>>(),
    )?;
    d.set_item("tip_x", trajectory.tip_series(0))?;
    d.set_item("tip_y", trajectory.tip_series(1))?;
    d.set_item("tip_z", trajectory.tip_series(2))?;
    d.set_item("tip_twist", trajectory.tip_twist_series())?;
    d.set_item(
        "energy",
        trajectory
            .samples
            .iter()
            .map(|s| s.energy)
            .collect::<Vec<_>>(),
    )?;
    d.set_item("energy_drift", trajectory.energy_drift())?;
    d.set_item("newton_iterations", newton_iterations)?;
    Ok(d)
}

/// Critical compressive load of the clamped-free column by continuation.
#[pyfunction]
#[pyo3(signature = (length, elements, ea, ei, gj, lo, hi, steps=8))]
#[allow(clippy::too_many_arguments)]
fn buckling_load(
    length: f64,
    elements: usize,
    ea: f64,
    ei: f64,
    gj: f64,
    lo: f64,
    hi: f64,
    steps: usize,
) -> PyResult<f64> {
    let grid = Grid::uniform(elements, length).map_err(to_py_err)?;
    let law = MaterialLaw::transversely_isotropic(ea, ei, gj).map_err(to_py_err)?;
    continuation_buckling(
        &grid,
        &law,
        &ClampedBase::canonical(),
        (lo, hi),
        steps,
        &NewtonConfig::default(),
    )
    .map_err(to_py_err)
}

/// Dominant angular frequency (rad/s) of a uniformly sampled series.
#[pyfunction]
fn dominant_frequency(series: Vec<f64>, dt: f64) -> PyResult<f64> {
    dynamics::dominant_frequency(&series, dt).map_err(to_py_err)
}

/// Parallel-transport holonomy of the closed tangent circle at the given
/// colatitude, with the drill-free correction-angle cross-check.
#[pyfunction]
#[pyo3(signature = (colatitude_degrees, samples=10001))]
fn holonomy<'py>(
    py: Python<'py>,
    colatitude_degrees: f64,
    samples: usize,
) -> PyResult<Bound<'py, PyDict>> {
    if !(colatitude_degrees.is_finite() && colatitude_degrees > 0.0 && colatitude_degrees < 180.0) {
        return Err(PyValueError::new_err(
            "colatitude must lie strictly between 0 and 180 degrees",
        ));
    }
    if samples < 16 {
        return Err(PyValueError::new_err("need at least 16 samples"));
    }
    let alpha = colatitude_degrees.to_radians();
    let (b1, b2) = (Vec3::x(), Vec3::y());
    let axis = Vec3::z();
    let (sa, ca) = (alpha.sin(), alpha.cos());
    let s: Vec<f64> = (0..samples)
        .map(|i| TAU * i as f64 / (samples - 1) as f64)
        .collect();
    let curve = SampledCurve::from_fn(s, move |s| {
        let d = axis * ca + (b1 * s.cos() + b2 * s.sin()) * sa;
        let r = axis * (ca * s) + (b1 * s.sin() - b2 * s.cos()) * sa;
        let d1 = (b2 * s.cos() - b1 * s.sin()) * sa;
        (r, d, d1)
    })
    .map_err(to_py_err)?;
    let normals: Vec<Vec3> = (0..curve.len())
        .map(|i| {
            let d = curve.tangent(i);
            (axis - d * axis.dot(&d)).normalize()
        })
        .collect();
    let reference = FrameField::from_normals(&curve, normals).map_err(to_py_err)?;
    let transported = bishop_transport(&curve, reference.u()[0]).map_err(to_py_err)?;
    let angle = unwrapped_relative_angle(&reference, &transported).map_err(to_py_err)?;
    // The reference field makes one negative turn about the tangent per
    // traversal, hence the winding correction.
    let measured = angle[angle.len() - 1] - angle[0] + TAU;
    let d0 = Director::new(axis).map_err(to_py_err)?;
    let correction = accumulated_correction_angle(&curve, &d0, TAU).map_err(to_py_err)?;

    let d = PyDict::new(py);
    d.set_item("holonomy", measured)?;
    d.set_item("cap_area", TAU * (1.0 - alpha.cos()))?;
    d.set_item("correction", correction)?;
    Ok(d)
}

#[pymodule]
fn rodsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(exp_rodrigues, m)?)?;
    m.add_function(wrap_pyfunction!(log_rotation, m)?)?;
    m.add_function(wrap_pyfunction!(drill_free_rotation, m)?)?;
    m.add_function(wrap_pyfunction!(solve_static_ti, m)?)?;
    m.add_function(wrap_pyfunction!(solve_static_general, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_ti, m)?)?;
    m.add_function(wrap_pyfunction!(buckling_load, m)?)?;
    m.add_function(wrap_pyfunction!(dominant_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(holonomy, m)?)?;
    Ok(())
}
