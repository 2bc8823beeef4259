//! Mode dispatch: solve, measure, and write artifacts.

use std::f64::consts::TAU;
use std::path::PathBuf;

use serde_json::json;

use rodsim_core::discretization::{accumulated_twist, DofVector, Grid, LoadCase};
use rodsim_core::dynamics::{integrate, DynamicState};
use rodsim_core::frames::{
    accumulated_correction_angle, bishop_transport, unwrapped_relative_angle, FrameField,
    SampledCurve,
};
use rodsim_core::linear_oracles::{
    cantilever_bending_frequency, cantilever_statics, rayleigh_operator, torsion_fundamental,
    CantileverCase, LinearBeamParams,
};
use rodsim_core::so3::{Director, Vec3};
use rodsim_core::static_solver::{solve_general_static, solve_ti_static, SolveReport};

use crate::failure::Failure;
use crate::output::{num, prepare_directory, write_report, Table};
use crate::scenario::{Mode, Plan};

/// Everything one `rodsim run` invocation needs.
pub struct RunContext {
    pub plan: Plan,
    pub scenario_name: String,
    pub out_dir: PathBuf,
    pub deterministic: bool,
    pub convergence: Option<usize>,
    pub jobs: usize,
}

impl RunContext {
    fn file(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn meta_into(&self, table: &mut Table) {
        table.meta(format!("rodsim {} results", env!("CARGO_PKG_VERSION")));
        table.meta(format!("mode: {}", self.plan.mode.name()));
        table.meta(format!("scenario: {}", self.scenario_name));
    }

    fn base_report(&self) -> serde_json::Value {
        json!({
            "tool": format!("rodsim {}", env!("CARGO_PKG_VERSION")),
            "mode": self.plan.mode.name(),
            "scenario": self.scenario_name,
            "deterministic": self.deterministic,
        })
    }
}

/// Runs the scenario and writes the artifacts. On solver failure a report
/// describing the failure is still written before the error propagates.
pub fn execute(ctx: &RunContext) -> Result<(), Failure> {
    prepare_directory(&ctx.out_dir)?;
    let outcome = match ctx.plan.mode {
        Mode::StaticTi | Mode::StaticGeneral => {
            if let Some(levels) = ctx.convergence {
                run_convergence(ctx, levels)
            } else {
                run_static(ctx)
            }
        }
        Mode::DynamicTi => run_dynamic(ctx),
        Mode::Diagnostic => run_diagnostic(ctx),
        Mode::Oracle => run_oracle(ctx),
    };
    if let Err(Failure::Solver(message, payload)) = &outcome {
        let mut report = ctx.base_report();
        report["status"] = json!("failed");
        report["error"] = json!(message);
        if let Some(p) = payload {
            report["solve"] = p.clone();
        }
        // Best effort: the exit code already communicates the failure.
        let _ = write_report(&ctx.file("report.json"), &report);
    }
    outcome
}

/// One static solve on one grid. Returns the tip position, the accumulated
/// end twist and the solver report.
fn solve_static_once(
    mode: Mode,
    grid: &Grid,
    plan: &Plan,
) -> Result<(Vec3, f64, SolveReport), Failure> {
    let law = plan.law.as_ref().expect("validated static plan");
    let direction = plan.base.unit_direction()?;
    let start = DofVector::straight(grid, &plan.base.position, &direction)?;
    match mode {
        Mode::StaticTi => {
            let (dofs, report) =
                solve_ti_static(grid, &start, law, &plan.loads, &plan.base, &plan.newton)?;
            let tip = dofs.r[grid.n_nodes() - 1];
            let psi_l = report.tip_twist;
            Ok((tip, psi_l, report))
        }
        Mode::StaticGeneral => {
            let (dofs, _, report) =
                solve_general_static(grid, &start, law, &plan.loads, &plan.base, &plan.newton)?;
            let tip = dofs.r[grid.n_nodes() - 1];
            let twist = accumulated_twist(&dofs)?;
            let psi_l = twist[twist.len() - 1];
            Ok((tip, psi_l, report))
        }
        _ => unreachable!("static dispatch"),
    }
}

fn results_table(ctx: &RunContext) -> Table {
    let mut table = Table::new(&[
        "converged [bool]",
        "iterations [1]",
        "tip_x [m]",
        "tip_y [m]",
        "tip_z [m]",
        "psi_L [rad]",
        "energy [J]",
    ]);
    ctx.meta_into(&mut table);
    table
}

fn summary_row(
    converged: bool,
    iterations: usize,
    tip: &Vec3,
    psi_l: f64,
    energy: f64,
) -> Vec<String> {
    vec![
        converged.to_string(),
        iterations.to_string(),
        num(tip.x),
        num(tip.y),
        num(tip.z),
        num(psi_l),
        num(energy),
    ]
}

fn run_static(ctx: &RunContext) -> Result<(), Failure> {
    let plan = &ctx.plan;
    let grid = plan.grid.as_ref().expect("validated static plan");
    let (tip, psi_l, report) = solve_static_once(plan.mode, grid, plan)?;

    let mut table = results_table(ctx);
    table.row(summary_row(
        report.converged,
        report.iterations,
        &tip,
        psi_l,
        report.energy,
    ));
    table.write(&ctx.file("results.csv"))?;

    let mut doc = ctx.base_report();
    doc["status"] = json!("ok");
    doc["psi_l"] = json!(psi_l);
    doc["solve"] = serde_json::to_value(&report).expect("serializable report");
    write_report(&ctx.file("report.json"), &doc)?;
    Ok(())
}

fn run_convergence(ctx: &RunContext, levels: usize) -> Result<(), Failure> {
    let plan = &ctx.plan;
    if levels == 0 {
        return Err(Failure::Schema(
            "--convergence: must be at least 1".to_string(),
        ));
    }
    let meshes: Vec<usize> = (0..levels).map(|i| plan.elements << i).collect();
    let solve_level = |&elements: &usize| -> Result<(Vec3, f64, SolveReport), Failure> {
        let grid = match plan.quadrature {
            Some(q) => Grid::with_quadrature(elements, plan.length, q),
            None => Grid::uniform(elements, plan.length),
        }?;
        solve_static_once(plan.mode, &grid, plan)
    };

    let solved: Vec<(Vec3, f64, SolveReport)> = if ctx.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(ctx.jobs)
            .build()
            .map_err(|e| Failure::Io(e.to_string()))?;
        pool.install(|| {
            use rayon::prelude::*;
            meshes.par_iter().map(solve_level).collect::<Result<_, _>>()
        })?
    } else {
        meshes.iter().map(solve_level).collect::<Result<_, _>>()?
    };

    // Successive-difference errors and observed order between levels.
    let diffs: Vec<f64> = solved
        .windows(2)
        .map(|w| (w[0].0 - w[1].0).norm())
        .collect();
    let orders: Vec<f64> = diffs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();

    let mut table = Table::new(&[
        "level [1]",
        "elements [1]",
        "tip_x [m]",
        "tip_y [m]",
        "tip_z [m]",
        "psi_L [rad]",
        "diff_to_next [m]",
        "observed_order [1]",
    ]);
    ctx.meta_into(&mut table);
    table.meta("diff_to_next: |tip - tip(next level)|; observed_order: log2 of successive diffs");
    for (i, (tip, psi_l, _)) in solved.iter().enumerate() {
        table.row(vec![
            i.to_string(),
            meshes[i].to_string(),
            num(tip.x),
            num(tip.y),
            num(tip.z),
            num(*psi_l),
            diffs.get(i).map(|d| num(*d)).unwrap_or_default(),
            orders.get(i).map(|o| num(*o)).unwrap_or_default(),
        ]);
    }
    table.write(&ctx.file("convergence.csv"))?;

    // The finest level also produces the regular artifacts.
    let (tip, psi_l, report) = solved.last().expect("at least one level");
    let mut table = results_table(ctx);
    table.row(summary_row(
        report.converged,
        report.iterations,
        tip,
        *psi_l,
        report.energy,
    ));
    table.write(&ctx.file("results.csv"))?;

    let mut doc = ctx.base_report();
    doc["status"] = json!("ok");
    doc["psi_l"] = json!(psi_l);
    doc["solve"] = serde_json::to_value(report).expect("serializable report");
    doc["convergence"] = json!(meshes
        .iter()
        .zip(&solved)
        .enumerate()
        .map(|(i, (elements, (tip, psi_l, _)))| {
            json!({
                "elements": elements,
                "tip": [tip.x, tip.y, tip.z],
                "psi_l": psi_l,
                "diff_to_next": diffs.get(i),
                "observed_order": orders.get(i),
            })
        })
        .collect::<Vec<_>>());
    write_report(&ctx.file("report.json"), &doc)?;
    Ok(())
}

fn run_dynamic(ctx: &RunContext) -> Result<(), Failure> {
    let plan = &ctx.plan;
    let grid = plan.grid.as_ref().expect("validated dynamic plan");
    let law = plan.law.as_ref().expect("validated dynamic plan");
    let inertia = plan.inertia.as_ref().expect("validated dynamic plan");
    let config = plan.integrator.as_ref().expect("validated dynamic plan");
    let direction = plan.base.unit_direction()?;
    let straight = DofVector::straight(grid, &plan.base.position, &direction)?;

    // Release runs pluck the rod statically first and integrate load-free;
    // otherwise the loads act during the motion.
    let (start, motion_loads, presolve) = if plan.release {
        let (dofs, report) =
            solve_ti_static(grid, &straight, law, &plan.loads, &plan.base, &plan.newton)?;
        (dofs, LoadCase::zero(), Some(report))
    } else {
        (straight, plan.loads.clone(), None)
    };

    let initial = DynamicState::at_rest(start);
    let (_, trajectory, report) = integrate(
        grid,
        &initial,
        law,
        inertia,
        &motion_loads,
        &plan.base,
        config,
    )?;

    let mut table = Table::new(&[
        "t [s]",
        "tip_x [m]",
        "tip_y [m]",
        "tip_z [m]",
        "tip_twist [rad]",
        "kinetic [J]",
        "potential [J]",
        "total [J]",
    ]);
    ctx.meta_into(&mut table);
    table.meta(format!("output stride: {} steps", ctx.plan.output_stride));
    let last = trajectory.len() - 1;
    for (i, s) in trajectory.samples.iter().enumerate() {
        if i % ctx.plan.output_stride != 0 && i != last {
            continue;
        }
        table.row(vec![
            num(s.time),
            num(s.tip_position.x),
            num(s.tip_position.y),
            num(s.tip_position.z),
            num(s.tip_twist),
            num(s.kinetic),
            num(s.potential),
            num(s.energy),
        ]);
    }
    table.write(&ctx.file("trajectory.csv"))?;

    let final_sample = trajectory.samples[last];
    let mut table = results_table(ctx);
    table.row(summary_row(
        true,
        report.newton_iterations,
        &final_sample.tip_position,
        final_sample.tip_twist,
        final_sample.energy,
    ));
    table.write(&ctx.file("results.csv"))?;

    let mut doc = ctx.base_report();
    doc["status"] = json!("ok");
    doc["integration"] = serde_json::to_value(report).expect("serializable report");
    doc["energy_drift"] = json!(trajectory.energy_drift());
    doc["release"] = json!(plan.release);
    if let Some(pre) = presolve {
        doc["presolve"] = serde_json::to_value(&pre).expect("serializable report");
    }
    write_report(&ctx.file("report.json"), &doc)?;
    Ok(())
}

/// Unit-speed curve whose tangent traces the circle of colatitude `alpha`
/// about `z`, sampled over one period.
fn tangent_circle(alpha: f64, n: usize) -> Result<SampledCurve, Failure> {
    let (b1, b2) = (Vec3::x(), Vec3::y());
    let axis = Vec3::z();
    let (sa, ca) = (alpha.sin(), alpha.cos());
    let s: Vec<f64> = (0..n).map(|i| TAU * i as f64 / (n - 1) as f64).collect();
    Ok(SampledCurve::from_fn(s, move |s| {
        let d = axis * ca + (b1 * s.cos() + b2 * s.sin()) * sa;
        let r = axis * (ca * s) + (b1 * s.sin() - b2 * s.cos()) * sa;
        let d1 = (b2 * s.cos() - b1 * s.sin()) * sa;
        (r, d, d1)
    })?)
}

fn run_diagnostic(ctx: &RunContext) -> Result<(), Failure> {
    let (col_deg, samples) = ctx.plan.diagnostic.expect("validated diagnostic plan");
    let alpha = col_deg.to_radians();
    let curve = tangent_circle(alpha, samples)?;

    // Reference field: spherical-coordinate normals, single valued around
    // the loop but making one negative turn about the tangent, hence the
    // 2 pi winding correction on the relative angle.
    let axis = Vec3::z();
    let normals: Vec<Vec3> = (0..curve.len())
        .map(|i| {
            let d = curve.tangent(i);
            (axis - d * axis.dot(&d)).normalize()
        })
        .collect();
    let reference = FrameField::from_normals(&curve, normals)?;
    let transported = bishop_transport(&curve, reference.u()[0])?;
    let angle = unwrapped_relative_angle(&reference, &transported)?;
    let holonomy = angle[angle.len() - 1] - angle[0] + TAU;
    let cap_area = TAU * (1.0 - alpha.cos());

    // Drill-free accumulated torsion, referenced to the cap axis (clear of
    // every tangent antipode for colatitudes below 180 degrees).
    let d0 = Director::new(axis)?;
    let correction = accumulated_correction_angle(&curve, &d0, TAU)?;
    let frame_defect = transported.orthonormality_defect();

    let mut table = Table::new(&[
        "colatitude [deg]",
        "samples [1]",
        "holonomy [rad]",
        "cap_area [rad]",
        "holonomy_error [rad]",
        "correction_magnitude [rad]",
        "frame_defect [1]",
    ]);
    ctx.meta_into(&mut table);
    table.row(vec![
        num(col_deg),
        samples.to_string(),
        num(holonomy),
        num(cap_area),
        num((holonomy - cap_area).abs()),
        num(correction.abs()),
        num(frame_defect),
    ]);
    table.write(&ctx.file("results.csv"))?;

    let mut doc = ctx.base_report();
    doc["status"] = json!("ok");
    doc["holonomy"] = json!(holonomy);
    doc["cap_area"] = json!(cap_area);
    doc["correction"] = json!(correction);
    doc["frame_defect"] = json!(frame_defect);
    write_report(&ctx.file("report.json"), &doc)?;
    Ok(())
}

fn run_oracle(ctx: &RunContext) -> Result<(), Failure> {
    let plan = &ctx.plan;
    let law = plan.law.as_ref().expect("validated oracle plan");
    let inertia = plan.inertia.as_ref().expect("validated oracle plan");
    let i_perp = inertia
        .transverse_scalar()
        .expect("round section from validation");

    // The oracle formulas consume only the products EI, GJ, rho A, rho I;
    // the raw factors are free, so normalize the density to one.
    let params = LinearBeamParams {
        e: law.ei[0] / i_perp,
        g: law.gj / inertia.i_par,
        a: inertia.a_rho,
        i11: i_perp,
        i22: i_perp,
        i33: inertia.i_par,
        rho: 1.0,
        l: plan.length,
    };

    let modes = plan.oracle_modes;
    let unit_force = cantilever_statics(&params, CantileverCase::TipForce(1.0))?;
    let unit_torque = cantilever_statics(&params, CantileverCase::TipTorque(1.0))?;
    let unit_moment = cantilever_statics(&params, CantileverCase::TipBendingMoment(1.0))?;
    let buckling = cantilever_statics(&params, CantileverCase::BucklingLoad)?;
    let torsion = torsion_fundamental(&params)?;
    let bending: Vec<f64> = (1..=modes)
        .map(|k| cantilever_bending_frequency(&params, k))
        .collect::<Result<_, _>>()?;
    let (discrete, _) = rayleigh_operator(&params, modes, plan.oracle_elements)?;

    let mut header: Vec<String> = vec![
        "unit_force_tip_deflection [m/N]".to_string(),
        "unit_torque_tip_twist [rad/(N*m)]".to_string(),
        "unit_moment_curvature [1/(N*m^2)]".to_string(),
        "buckling_load [N]".to_string(),
        "torsion_omega_1 [rad/s]".to_string(),
    ];
    let mut row: Vec<String> = vec![
        num(unit_force),
        num(unit_torque),
        num(unit_moment),
        num(buckling),
        num(torsion),
    ];
    for (k, w) in bending.iter().enumerate() {
        header.push(format!("bending_omega_{} [rad/s]", k + 1));
        row.push(num(*w));
    }
    for (k, w) in discrete.iter().enumerate() {
        header.push(format!("discrete_omega_{} [rad/s]", k + 1));
        row.push(num(*w));
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Table::new(&header_refs);
    ctx.meta_into(&mut table);
    table.meta(format!(
        "discrete operator: {} elements, {} modes",
        plan.oracle_elements, modes
    ));
    table.row(row);
    table.write(&ctx.file("results.csv"))?;

    let mut doc = ctx.base_report();
    doc["status"] = json!("ok");
    doc["unit_force_tip_deflection"] = json!(unit_force);
    doc["unit_torque_tip_twist"] = json!(unit_torque);
    doc["unit_moment_curvature"] = json!(unit_moment);
    doc["buckling_load"] = json!(buckling);
    doc["torsion_omega"] = json!(torsion);
    doc["bending_omega"] = json!(bending);
    doc["discrete_omega"] = json!(discrete);
    write_report(&ctx.file("report.json"), &doc)?;
    Ok(())
}
