//! Scenario file schema and validation.
//!
//! A scenario is a single JSON document. Parsing rejects unknown fields so
//! typos surface as schema errors, and validation reports the dotted path of
//! the offending field. Sections beyond the mode's requirements are allowed
//! but checked for consistency when present.

use serde::Deserialize;

use rodsim_core::discretization::{Grid, LoadCase};
use rodsim_core::dynamics::IntegratorConfig;
use rodsim_core::rod_model::{MaterialLaw, SectionInertia};
use rodsim_core::so3::Vec3;
use rodsim_core::static_solver::{ClampedBase, NewtonConfig};

/// Scenario validation failure: dotted field path plus message.
#[derive(Debug)]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn bad(path: &str, message: impl Into<String>) -> SchemaError {
    SchemaError {
        path: path.to_string(),
        message: message.into(),
    }
}

/// Solver dispatch selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Scalar-twist static equilibrium (transversely isotropic sections).
    StaticTi,
    /// Constrained rotation-path static equilibrium (general sections).
    StaticGeneral,
    /// Implicit-midpoint dynamics on the scalar-twist path.
    DynamicTi,
    /// Frame-transport diagnostics on a closed tangent loop.
    Diagnostic,
    /// Closed-form cantilever and spectrum reference values.
    Oracle,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::StaticTi => "static_ti",
            Mode::StaticGeneral => "static_general",
            Mode::DynamicTi => "dynamic_ti",
            Mode::Diagnostic => "diagnostic",
            Mode::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    /// Rod length (m).
    pub length: f64,
    /// Number of uniform elements.
    pub elements: usize,
    /// Gauss points per element (library default when absent).
    #[serde(default)]
    pub quadrature: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    /// Axial stiffness EA (N).
    pub ea: f64,
    /// Bending stiffness about the first section axis (N·m²).
    pub ei1: f64,
    /// Bending stiffness about the second section axis (N·m²).
    pub ei2: f64,
    /// Torsional stiffness (N·m²).
    pub gj: f64,
    /// Mass per unit length (kg/m); dynamic and oracle modes.
    #[serde(default)]
    pub a_rho: Option<f64>,
    /// Transverse rotary inertia per unit length (kg·m); dynamic and oracle.
    #[serde(default)]
    pub i_perp: Option<f64>,
    /// Axial rotary inertia per unit length (kg·m); dynamic and oracle.
    #[serde(default)]
    pub i_par: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LoadsSection {
    #[serde(default)]
    pub distributed_force: Option<[f64; 3]>,
    #[serde(default)]
    pub tangent_moment_density: Option<f64>,
    #[serde(default)]
    pub tip_force: Option<[f64; 3]>,
    #[serde(default)]
    pub tip_moment: Option<f64>,
    #[serde(default)]
    pub tip_bending_moment: Option<[f64; 3]>,
    #[serde(default)]
    pub load_factor: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ClampSection {
    #[serde(default)]
    pub position: Option<[f64; 3]>,
    #[serde(default)]
    pub direction: Option<[f64; 3]>,
    #[serde(default)]
    pub twist: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub continuation_steps: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    /// Time step (s).
    pub dt: f64,
    /// Number of steps.
    pub steps: usize,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_newton_iter: Option<usize>,
    #[serde(default)]
    pub jacobian_every: Option<usize>,
    /// Trajectory rows are written every this many steps (default 1).
    #[serde(default)]
    pub output_stride: Option<usize>,
    /// Solve statics under the loads first, then integrate the release with
    /// the loads removed (ring-down experiment).
    #[serde(default)]
    pub release: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticSection {
    /// Colatitude of the closed tangent circle (degrees).
    pub colatitude_degrees: f64,
    /// Samples along the loop (default 10001).
    #[serde(default)]
    pub samples: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// Number of bending modes to report (default 3).
    #[serde(default)]
    pub bending_modes: Option<usize>,
    /// Elements of the discrete reference operator (default 64).
    #[serde(default)]
    pub elements: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Directory the artifacts are written to (default the working
    /// directory; the `--out` flag overrides).
    #[serde(default)]
    pub directory: Option<String>,
}

/// Raw scenario document as parsed from JSON.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub mode: Mode,
    #[serde(default)]
    pub geometry: Option<GeometrySection>,
    #[serde(default)]
    pub material: Option<MaterialSection>,
    #[serde(default)]
    pub loads: Option<LoadsSection>,
    #[serde(default)]
    pub clamp: Option<ClampSection>,
    #[serde(default)]
    pub solver: Option<SolverSection>,
    #[serde(default)]
    pub integrator: Option<IntegratorSection>,
    #[serde(default)]
    pub diagnostic: Option<DiagnosticSection>,
    #[serde(default)]
    pub oracle: Option<OracleSection>,
    #[serde(default)]
    pub output: Option<OutputSection>,
}

/// Scenario after mode-dependent validation, with library types built.
#[derive(Debug)]
pub struct Plan {
    pub mode: Mode,
    pub grid: Option<Grid>,
    pub length: f64,
    pub elements: usize,
    pub quadrature: Option<usize>,
    pub law: Option<MaterialLaw>,
    pub inertia: Option<SectionInertia>,
    pub loads: LoadCase,
    pub base: ClampedBase,
    pub newton: NewtonConfig,
    pub integrator: Option<IntegratorConfig>,
    pub output_stride: usize,
    pub release: bool,
    pub diagnostic: Option<(f64, usize)>,
    pub oracle_modes: usize,
    pub oracle_elements: usize,
    pub output_directory: Option<String>,
}

fn check_positive(path: &str, v: f64) -> Result<f64, SchemaError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(bad(path, format!("must be finite and positive (got {v})")))
    }
}

fn check_finite_vec(path: &str, v: [f64; 3]) -> Result<Vec3, SchemaError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(Vec3::new(v[0], v[1], v[2]))
    } else {
        Err(bad(path, format!("components must be finite (got {v:?})")))
    }
}

impl Scenario {
    /// Parses a scenario document from JSON text.
    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        serde_json::from_str(text).map_err(|e| bad("scenario", e.to_string()))
    }

    /// Mode-dependent validation; returns the executable plan.
    pub fn validate(self) -> Result<Plan, SchemaError> {
        let mode = self.mode;
        let needs_grid = !matches!(mode, Mode::Diagnostic);
        let needs_solver = matches!(mode, Mode::StaticTi | Mode::StaticGeneral | Mode::DynamicTi);

        let (grid, length) = if needs_grid {
            let g = self
                .geometry
                .as_ref()
                .ok_or_else(|| bad("geometry", format!("required for mode `{}`", mode.name())))?;
            let length = check_positive("geometry.length", g.length)?;
            if g.elements == 0 {
                return Err(bad("geometry.elements", "must be at least 1"));
            }
            let grid = match g.quadrature {
                Some(q) => Grid::with_quadrature(g.elements, length, q),
                None => Grid::uniform(g.elements, length),
            }
            .map_err(|e| bad("geometry", e.to_string()))?;
            (Some(grid), length)
        } else {
            (None, 0.0)
        };

        let law = if needs_solver || mode == Mode::Oracle {
            let m = self
                .material
                .as_ref()
                .ok_or_else(|| bad("material", format!("required for mode `{}`", mode.name())))?;
            let ea = check_positive("material.ea", m.ea)?;
            let ei1 = check_positive("material.ei1", m.ei1)?;
            let ei2 = check_positive("material.ei2", m.ei2)?;
            let gj = check_positive("material.gj", m.gj)?;
            if matches!(mode, Mode::StaticTi | Mode::DynamicTi | Mode::Oracle) && ei1 != ei2 {
                return Err(bad(
                    "material.ei2",
                    format!(
                        "mode `{}` requires a transversely isotropic section (ei1 == ei2); \
                         got ei1 = {ei1}, ei2 = {ei2}",
                        mode.name()
                    ),
                ));
            }
            Some(MaterialLaw::new(ea, ei1, ei2, gj).map_err(|e| bad("material", e.to_string()))?)
        } else {
            None
        };

        let inertia = if matches!(mode, Mode::DynamicTi | Mode::Oracle) {
            let m = self.material.as_ref().expect("checked above");
            let a_rho = check_positive(
                "material.a_rho",
                m.a_rho.ok_or_else(|| {
                    bad(
                        "material.a_rho",
                        format!("required for mode `{}`", mode.name()),
                    )
                })?,
            )?;
            let i_perp = check_positive(
                "material.i_perp",
                m.i_perp.ok_or_else(|| {
                    bad(
                        "material.i_perp",
                        format!("required for mode `{}`", mode.name()),
                    )
                })?,
            )?;
            let i_par = check_positive(
                "material.i_par",
                m.i_par.ok_or_else(|| {
                    bad(
                        "material.i_par",
                        format!("required for mode `{}`", mode.name()),
                    )
                })?,
            )?;
            Some(
                SectionInertia::round(a_rho, i_perp, i_par)
                    .map_err(|e| bad("material", e.to_string()))?,
            )
        } else {
            None
        };

        let loads = {
            let l = self.loads.unwrap_or_default();
            let mut out = LoadCase::zero();
            if let Some(v) = l.distributed_force {
                out.distributed_force = check_finite_vec("loads.distributed_force", v)?;
            }
            if let Some(v) = l.tangent_moment_density {
                if !v.is_finite() {
                    return Err(bad("loads.tangent_moment_density", "must be finite"));
                }
                out.tangent_moment_density = v;
            }
            if let Some(v) = l.tip_force {
                out.tip_force = check_finite_vec("loads.tip_force", v)?;
            }
            if let Some(v) = l.tip_moment {
                if !v.is_finite() {
                    return Err(bad("loads.tip_moment", "must be finite"));
                }
                out.tip_moment = v;
            }
            if let Some(v) = l.tip_bending_moment {
                if matches!(mode, Mode::StaticTi | Mode::DynamicTi) {
                    return Err(bad(
                        "loads.tip_bending_moment",
                        format!(
                            "not supported in mode `{}`; a vector end moment needs the \
                             rotation path (`static_general`)",
                            mode.name()
                        ),
                    ));
                }
                out.tip_bending_moment = Some(check_finite_vec("loads.tip_bending_moment", v)?);
            }
            if let Some(v) = l.load_factor {
                if !v.is_finite() {
                    return Err(bad("loads.load_factor", "must be finite"));
                }
                out.load_factor = v;
            }
            out
        };

        let base = {
            let c = self.clamp.unwrap_or_default();
            let position = match c.position {
                Some(p) => check_finite_vec("clamp.position", p)?,
                None => Vec3::zeros(),
            };
            let direction = match c.direction {
                Some(d) => check_finite_vec("clamp.direction", d)?,
                None => Vec3::z(),
            };
            let mut base = ClampedBase::along(position, direction)
                .map_err(|e| bad("clamp.direction", e.to_string()))?;
            if let Some(t) = c.twist {
                if !t.is_finite() {
                    return Err(bad("clamp.twist", "must be finite"));
                }
                base.twist = t;
            }
            base
        };

        let newton = {
            let s = self.solver.unwrap_or_default();
            let mut cfg = NewtonConfig::default();
            if let Some(t) = s.tol {
                cfg.tol = check_positive("solver.tol", t)?;
            }
            if let Some(n) = s.max_iter {
                if n == 0 {
                    return Err(bad("solver.max_iter", "must be at least 1"));
                }
                cfg.max_iter = n;
            }
            if let Some(n) = s.continuation_steps {
                if n == 0 {
                    return Err(bad("solver.continuation_steps", "must be at least 1"));
                }
                cfg.continuation_steps = n;
            }
            cfg
        };

        let (integrator, output_stride, release) = if mode == Mode::DynamicTi {
            let i = self
                .integrator
                .as_ref()
                .ok_or_else(|| bad("integrator", format!("required for mode `{}`", mode.name())))?;
            let mut cfg = IntegratorConfig {
                dt: check_positive("integrator.dt", i.dt)?,
                steps: i.steps,
                ..IntegratorConfig::default()
            };
            if i.steps == 0 {
                return Err(bad("integrator.steps", "must be at least 1"));
            }
            if let Some(t) = i.tol {
                cfg.tol = check_positive("integrator.tol", t)?;
            }
            if let Some(n) = i.max_newton_iter {
                if n == 0 {
                    return Err(bad("integrator.max_newton_iter", "must be at least 1"));
                }
                cfg.max_newton_iter = n;
            }
            if let Some(n) = i.jacobian_every {
                if n == 0 {
                    return Err(bad("integrator.jacobian_every", "must be at least 1"));
                }
                cfg.jacobian_every = n;
            }
            let stride = i.output_stride.unwrap_or(1);
            if stride == 0 {
                return Err(bad("integrator.output_stride", "must be at least 1"));
            }
            (Some(cfg), stride, i.release.unwrap_or(false))
        } else {
            (None, 1, false)
        };

        let diagnostic = if mode == Mode::Diagnostic {
            let d = self
                .diagnostic
                .as_ref()
                .ok_or_else(|| bad("diagnostic", format!("required for mode `{}`", mode.name())))?;
            let col = d.colatitude_degrees;
            if !(col.is_finite() && col > 0.0 && col < 180.0) {
                return Err(bad(
                    "diagnostic.colatitude_degrees",
                    format!("must lie strictly between 0 and 180 (got {col})"),
                ));
            }
            let samples = d.samples.unwrap_or(10_001);
            if samples < 16 {
                return Err(bad("diagnostic.samples", "must be at least 16"));
            }
            Some((col, samples))
        } else {
            None
        };

        let (oracle_modes, oracle_elements) = {
            let o = self.oracle.unwrap_or_default();
            let modes = o.bending_modes.unwrap_or(3);
            let elements = o.elements.unwrap_or(64);
            if mode == Mode::Oracle {
                if modes == 0 {
                    return Err(bad("oracle.bending_modes", "must be at least 1"));
                }
                if elements == 0 {
                    return Err(bad("oracle.elements", "must be at least 1"));
                }
                if modes > 2 * elements {
                    return Err(bad(
                        "oracle.bending_modes",
                        format!(
                            "at most twice oracle.elements (got {modes} > {})",
                            2 * elements
                        ),
                    ));
                }
            }
            (modes, elements)
        };

        let (elements, quadrature) = self
            .geometry
            .as_ref()
            .map_or((0, None), |g| (g.elements, g.quadrature));
        Ok(Plan {
            mode,
            grid,
            length,
            elements,
            quadrature,
            law,
            inertia,
            loads,
            base,
            newton,
            integrator,
            output_stride,
            release,
            diagnostic,
            oracle_modes,
            oracle_elements,
            output_directory: self.output.and_then(|o| o.directory),
        })
    }
}
