//! Finite element discretization of rod fields on `[0, L]`.
//!
//! The centerline is interpolated with cubic Hermite elements over free
//! (unnormalized) nodal tangents, so bending needs no derivative recovery and
//! the axial stretch `|r′|` remains a genuine unknown. Twist is piecewise
//! linear. Two assembly paths share this centerline:
//!
//! - the scalar-twist path stores a nodal angle `ψ` and evaluates the reduced
//!   energy `½EA ε² + ½EI |d′|² + ½GJ ψ′²` (isotropic bending only);
//! - the rotation path stores a nodal section frame `Λᵢ` and evaluates the
//!   full anisotropic energy. Within an element the frame is interpolated as
//!   `A(ξ) = χ[Dᵢ, d(ξ)] Λᵢ exp(ξ φₑ Ê₃)`, where `Dᵢ = Λᵢ E₃`, `d` is the
//!   unit tangent of the Hermite centerline and `φₑ` is the relative drill
//!   angle between the nodal frames after drill-free transport. This
//!   interpolant keeps `A E₃ = d` exactly, so the discrete torsion is the
//!   single per-element rate `φₑ / h` and the bending strain has no spurious
//!   third component.
//!
//! With that construction, a rotation state built by drill-free transport
//! from a scalar-twist state reproduces its energy exactly (not just up to
//! mesh error), which is what makes the two solution paths comparable at
//! tight tolerances on the same grid.
//!
//! The tangency constraint of the rotation path, `(Λᵀ r′) × E₃ = 0`, is
//! collocated at the nodes with trapezoidal weights. Collocating it at all
//! quadrature points would impose more conditions than the rotation field
//! has degrees of freedom and locks the mesh; the nodal choice matches
//! constraints to unknowns one-to-one. Quadrature-point samples remain
//! available as a diagnostic through [`assemble_constraints`].

use nalgebra::{Matrix2x3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::RodError;
use crate::rod_model::MaterialLaw;
use crate::so3::{chi_no_drill, drill_angle, exp_rodrigues, Director, Mat3, Rotation, Vec3};
use crate::Result;

/// Quadrature points per element used when no explicit rule is requested.
pub const DEFAULT_QUADRATURE: usize = 3;

/// Smallest admissible `|r′|` at a quadrature point during assembly.
pub const TANGENT_FLOOR: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

/// Gauss-Legendre rule on the unit interval `[0, 1]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussRule {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    /// Rule with `n` points (1 to 5), exact for polynomials of degree `2n-1`.
    pub fn legendre(n: usize) -> Result<Self> {
        // Abscissae/weights on [-1, 1], mapped to [0, 1] below.
        let (xs, ws): (Vec<f64>, Vec<f64>) = match n {
            1 => (vec![0.0], vec![2.0]),
            2 => {
                let a = 1.0 / 3.0_f64.sqrt();
                (vec![-a, a], vec![1.0, 1.0])
            }
            3 => {
                let a = 0.6_f64.sqrt();
                (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
            }
            4 => (
                vec![
                    -0.861_136_311_594_052_6,
                    -0.339_981_043_584_856_3,
                    0.339_981_043_584_856_3,
                    0.861_136_311_594_052_6,
                ],
                vec![
                    0.347_854_845_137_453_85,
                    0.652_145_154_862_546_1,
                    0.652_145_154_862_546_1,
                    0.347_854_845_137_453_85,
                ],
            ),
            5 => (
                vec![
                    -0.906_179_845_938_664,
                    -0.538_469_310_105_683_1,
                    0.0,
                    0.538_469_310_105_683_1,
                    0.906_179_845_938_664,
                ],
                vec![
                    0.236_926_885_056_189_08,
                    0.478_628_670_499_366_47,
                    0.568_888_888_888_888_9,
                    0.478_628_670_499_366_47,
                    0.236_926_885_056_189_08,
                ],
            ),
            _ => {
                return Err(RodError::Validation(format!(
                    "quadrature order {n} not supported (use 1 to 5)"
                )))
            }
        };
        Ok(Self {
            points: xs.iter().map(|x| 0.5 * (1.0 + x)).collect(),
            weights: ws.iter().map(|w| 0.5 * w).collect(),
        })
    }

    /// Points in `[0, 1]`.
    #[must_use]
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Weights on `[0, 1]`; they sum to one.
    #[must_use]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of points.
    #[must_use]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Whether the rule is empty (never true for constructed rules).
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Element partition of `[0, L]` plus the per-element quadrature rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grid {
    breakpoints: Vec<f64>,
    rule: GaussRule,
}

impl Grid {
    /// Uniform grid with `n_elements` elements and the default rule.
    pub fn uniform(n_elements: usize, length: f64) -> Result<Self> {
        Self::with_quadrature(n_elements, length, DEFAULT_QUADRATURE)
    }

    /// Uniform grid with an explicit quadrature order.
    pub fn with_quadrature(n_elements: usize, length: f64, order: usize) -> Result<Self> {
        if n_elements == 0 {
            return Err(RodError::Validation(
                "grid needs at least one element".into(),
            ));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(RodError::Validation(format!(
                "grid length must be positive and finite, got {length}"
            )));
        }
        let h = length / n_elements as f64;
        let breakpoints = (0..=n_elements)
            .map(|i| {
                if i == n_elements {
                    length
                } else {
                    i as f64 * h
                }
            })
            .collect();
        Ok(Self {
            breakpoints,
            rule: GaussRule::legendre(order)?,
        })
    }

    /// Grid over explicit strictly increasing breakpoints.
    pub fn from_breakpoints(breakpoints: Vec<f64>, order: usize) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(RodError::Validation(
                "grid needs at least two breakpoints".into(),
            ));
        }
        if breakpoints[0] != 0.0 {
            return Err(RodError::Validation(format!(
                "first breakpoint must be 0, got {}",
                breakpoints[0]
            )));
        }
        for w in breakpoints.windows(2) {
            if !(w[1].is_finite() && w[1] > w[0]) {
                return Err(RodError::Validation(
                    "breakpoints must be finite and strictly increasing".into(),
                ));
            }
        }
        Ok(Self {
            breakpoints,
            rule: GaussRule::legendre(order)?,
        })
    }

    /// Number of elements.
    #[must_use]
    pub fn n_elements(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Number of nodes (`elements + 1`).
    #[must_use]
    pub fn n_nodes(&self) -> usize {
        self.breakpoints.len()
    }

    /// Total length `L`.
    #[must_use]
    pub fn length(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Element boundary coordinates.
    #[must_use]
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Arc-length coordinate of node `i`.
    #[must_use]
    pub fn node_s(&self, i: usize) -> f64 {
        self.breakpoints[i]
    }

    /// Length of element `e`.
    #[must_use]
    pub fn element_length(&self, e: usize) -> f64 {
        self.breakpoints[e + 1] - self.breakpoints[e]
    }

    /// The shared quadrature rule on `[0, 1]`.
    #[must_use]
    pub fn rule(&self) -> &GaussRule {
        &self.rule
    }

    /// Element index and local coordinate `ξ ∈ [0, 1]` containing `s`.
    pub fn locate(&self, s: f64) -> Result<(usize, f64)> {
        let length = self.length();
        let slack = 1e-12 * length.max(1.0);
        if !s.is_finite() || s < -slack || s > length + slack {
            return Err(RodError::Validation(format!(
                "coordinate s = {s} outside [0, {length}]"
            )));
        }
        let s = s.clamp(0.0, length);
        let e = match self.breakpoints.partition_point(|&b| b <= s) {
            0 => 0,
            k => (k - 1).min(self.n_elements() - 1),
        };
        let xi = (s - self.breakpoints[e]) / self.element_length(e);
        Ok((e, xi.clamp(0.0, 1.0)))
    }
}

// ---------------------------------------------------------------------------
// Hermite shape functions
// ---------------------------------------------------------------------------

/// Cubic Hermite shape values and their first two `ξ`-derivatives.
///
/// Ordering: start value, start slope, end value, end slope. Slope shapes are
/// unscaled; assembly multiplies them by the element length.
#[derive(Debug, Clone, Copy)]
pub struct HermiteBasis {
    /// Shape values at `ξ`.
    pub value: [f64; 4],
    /// First derivatives with respect to `ξ`.
    pub d1: [f64; 4],
    /// Second derivatives with respect to `ξ`.
    pub d2: [f64; 4],
}

/// Evaluates the cubic Hermite basis at `ξ ∈ [0, 1]`.
#[must_use]
pub fn hermite_basis(xi: f64) -> HermiteBasis {
    let x2 = xi * xi;
    let x3 = x2 * xi;
    HermiteBasis {
        value: [
            1.0 - 3.0 * x2 + 2.0 * x3,
            xi - 2.0 * x2 + x3,
            3.0 * x2 - 2.0 * x3,
            -x2 + x3,
        ],
        d1: [
            -6.0 * xi + 6.0 * x2,
            1.0 - 4.0 * xi + 3.0 * x2,
            6.0 * xi - 6.0 * x2,
            -2.0 * xi + 3.0 * x2,
        ],
        d2: [
            -6.0 + 12.0 * xi,
            -4.0 + 6.0 * xi,
            6.0 - 12.0 * xi,
            -2.0 + 6.0 * xi,
        ],
    }
}

/// Per-quadrature-point coefficient rows mapping the four element dofs
/// `(r_i, t_i, r_j, t_j)` to `r`, `r′`, `r″`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ShapeRows {
    pub(crate) r: [f64; 4],
    pub(crate) r1: [f64; 4],
    pub(crate) r2: [f64; 4],
}

pub(crate) fn shape_rows(xi: f64, h: f64) -> ShapeRows {
    let b = hermite_basis(xi);
    ShapeRows {
        r: [b.value[0], b.value[1] * h, b.value[2], b.value[3] * h],
        r1: [b.d1[0] / h, b.d1[1], b.d1[2] / h, b.d1[3]],
        r2: [
            b.d2[0] / (h * h),
            b.d2[1] / h,
            b.d2[2] / (h * h),
            b.d2[3] / h,
        ],
    }
}

pub(crate) fn combine(rows: &[f64; 4], a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> Vec3 {
    a * rows[0] + b * rows[1] + c * rows[2] + d * rows[3]
}

// ---------------------------------------------------------------------------
// Loads
// ---------------------------------------------------------------------------

/// Dead loads entering the potential energy, all scaled by `load_factor`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadCase {
    /// Distributed force per unit length (N/m), constant along the rod.
    pub distributed_force: Vec3,
    /// Distributed moment density about the tangent (N·m/m).
    pub tangent_moment_density: f64,
    /// Point force at the free end (N).
    pub tip_force: Vec3,
    /// Point moment about the tangent at the free end (N·m).
    pub tip_moment: f64,
    /// Optional dead bending moment at the free end (N·m). Only the rotation
    /// path can carry it; it pairs directly with the end-node rotation
    /// variation and has no potential, so energy-based line searches and
    /// finite differencing of the energy exclude it.
    pub tip_bending_moment: Option<Vec3>,
    /// Dimensionless load multiplier applied to every term above.
    pub load_factor: f64,
}

impl Default for LoadCase {
    fn default() -> Self {
        Self::zero()
    }
}

impl LoadCase {
    /// A load case with every term zero and unit load factor.
    #[must_use]
    pub fn zero() -> Self {
        Self {
            distributed_force: Vec3::zeros(),
            tangent_moment_density: 0.0,
            tip_force: Vec3::zeros(),
            tip_moment: 0.0,
            tip_bending_moment: None,
            load_factor: 1.0,
        }
    }

    /// Same loads with a different multiplier.
    #[must_use]
    pub fn with_factor(&self, load_factor: f64) -> Self {
        Self {
            load_factor,
            ..self.clone()
        }
    }

    /// Checks all entries are finite.
    pub fn validate(&self) -> Result<()> {
        let mut finite = self.distributed_force.iter().all(|v| v.is_finite())
            && self.tip_force.iter().all(|v| v.is_finite())
            && self.tangent_moment_density.is_finite()
            && self.tip_moment.is_finite()
            && self.load_factor.is_finite();
        if let Some(m) = &self.tip_bending_moment {
            finite = finite && m.iter().all(|v| v.is_finite());
        }
        if finite {
            Ok(())
        } else {
            Err(RodError::Validation(
                "load case has non-finite entries".into(),
            ))
        }
    }
}

// ---------------------------------------------------------------------------
// Degrees of freedom
// ---------------------------------------------------------------------------

/// Nodal unknowns of the discrete rod.
///
/// `r` and `t` are the Hermite position and tangent coefficients, `psi` is
/// the nodal twist of the scalar path. When `rotations` is present the state
/// belongs to the rotation path: the energy then reads twist from the frames
/// and `psi` is kept only as a diagnostic companion field (for example the
/// starting twist of a lifted state).
///
/// Clamped-end conditions (fixed `r(0)`, fixed direction of `t(0)`, fixed
/// base twist or base frame) are imposed by the solvers' dof maps, not by
/// this container; assembly treats every entry as free.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DofVector {
    /// Nodal positions (m).
    pub r: Vec<Vec3>,
    /// Nodal tangent coefficients (unnormalized).
    pub t: Vec<Vec3>,
    /// Nodal twist angles (rad), scalar path.
    pub psi: Vec<f64>,
    /// Nodal section frames, rotation path.
    pub rotations: Option<Vec<Rotation>>,
}

impl DofVector {
    /// Straight reference state along a unit `direction` starting at `origin`.
    pub fn straight(grid: &Grid, origin: &Vec3, direction: &Vec3) -> Result<Self> {
        let d = Director::new(*direction)?.vector();
        let n = grid.n_nodes();
        Ok(Self {
            r: (0..n).map(|i| origin + d * grid.node_s(i)).collect(),
            t: vec![d; n],
            psi: vec![0.0; n],
            rotations: None,
        })
    }

    /// Number of nodes.
    #[must_use]
    pub fn n_nodes(&self) -> usize {
        self.r.len()
    }

    /// Whether the state carries rotation dofs.
    #[must_use]
    pub fn has_rotations(&self) -> bool {
        self.rotations.is_some()
    }

    /// Checks array lengths against `grid` and entry finiteness.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let n = grid.n_nodes();
        if self.r.len() != n || self.t.len() != n || self.psi.len() != n {
            return Err(RodError::GridMismatch(format!(
                "dof arrays ({}, {}, {}) do not match {} nodes",
                self.r.len(),
                self.t.len(),
                self.psi.len(),
                n
            )));
        }
        if let Some(rot) = &self.rotations {
            if rot.len() != n {
                return Err(RodError::GridMismatch(format!(
                    "rotation array ({}) does not match {} nodes",
                    rot.len(),
                    n
                )));
            }
        }
        let finite = self
            .r
            .iter()
            .chain(self.t.iter())
            .all(|v| v.iter().all(|x| x.is_finite()))
            && self.psi.iter().all(|x| x.is_finite());
        if !finite {
            return Err(RodError::Validation(
                "dof vector has non-finite entries".into(),
            ));
        }
        Ok(())
    }

    /// Equips the state with nodal frames built by drill-free transport of a
    /// base frame along the nodal tangent directions, each frame then drilled
    /// by the nodal `psi`. The base frame is the drill-free image of the
    /// standard frame, so a straight `E₃`-aligned state lifts to identity
    /// rotations.
    ///
    /// The construction satisfies the tangency constraint exactly at every
    /// node and reproduces the nodal twist differences as the element drill
    /// angles, provided `|ψᵢ₊₁ − ψᵢ| < π` on every element.
    pub fn with_bishop_rotations(mut self) -> Result<Self> {
        let n = self.n_nodes();
        let mut rotations = Vec::with_capacity(n);
        let mut dirs = Vec::with_capacity(n);
        for (i, t) in self.t.iter().enumerate() {
            dirs.push(Director::new(*t).map_err(|_| RodError::IrregularCurve {
                index: i,
                reason: "nodal tangent has zero norm, cannot build a frame".into(),
            })?);
        }
        let mut transport = chi_no_drill(&Director::e3(), &dirs[0])?;
        for i in 0..n {
            if i > 0 {
                transport = Rotation::from_matrix_unchecked(
                    chi_no_drill(&dirs[i - 1], &dirs[i])?.matrix() * transport.matrix(),
                );
            }
            let drill = rot_z(self.psi[i]);
            rotations.push(Rotation::from_matrix_unchecked(transport.matrix() * drill));
        }
        self.rotations = Some(rotations);
        Ok(self)
    }

    /// Flattens the scalar-path dofs as `[r, t, ψ]` per node.
    #[must_use]
    pub fn flatten_ti(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(7 * self.n_nodes());
        for i in 0..self.n_nodes() {
            out.extend_from_slice(self.r[i].as_slice());
            out.extend_from_slice(self.t[i].as_slice());
            out.push(self.psi[i]);
        }
        out
    }

    /// Rebuilds scalar-path dofs from a flat `[r, t, ψ]` layout.
    pub fn from_flat_ti(grid: &Grid, flat: &[f64]) -> Result<Self> {
        let n = grid.n_nodes();
        if flat.len() != 7 * n {
            return Err(RodError::GridMismatch(format!(
                "flat dof vector has {} entries, expected {}",
                flat.len(),
                7 * n
            )));
        }
        let mut r = Vec::with_capacity(n);
        let mut t = Vec::with_capacity(n);
        let mut psi = Vec::with_capacity(n);
        for i in 0..n {
            let b = 7 * i;
            r.push(Vec3::new(flat[b], flat[b + 1], flat[b + 2]));
            t.push(Vec3::new(flat[b + 3], flat[b + 4], flat[b + 5]));
            psi.push(flat[b + 6]);
        }
        Ok(Self {
            r,
            t,
            psi,
            rotations: None,
        })
    }
}

/// Pointwise interpolated fields.
#[derive(Debug, Clone, Copy)]
pub struct PointSample {
    /// Position (m).
    pub r: Vec3,
    /// First arc-length derivative.
    pub r1: Vec3,
    /// Second arc-length derivative.
    pub r2: Vec3,
    /// Twist angle (rad).
    pub psi: f64,
    /// Twist rate (rad/m).
    pub psi1: f64,
}

/// Evaluates the interpolants at `s ∈ [0, L]`.
///
/// Cubic Hermite for the centerline (smooth inside elements, `C¹` across),
/// linear for the twist. Reproduces cubic centerlines and linear twists
/// exactly.
pub fn interpolate(grid: &Grid, dofs: &DofVector, s: f64) -> Result<PointSample> {
    dofs.validate(grid)?;
    let (e, xi) = grid.locate(s)?;
    let h = grid.element_length(e);
    let rows = shape_rows(xi, h);
    let (ri, ti, rj, tj) = (&dofs.r[e], &dofs.t[e], &dofs.r[e + 1], &dofs.t[e + 1]);
    Ok(PointSample {
        r: combine(&rows.r, ri, ti, rj, tj),
        r1: combine(&rows.r1, ri, ti, rj, tj),
        r2: combine(&rows.r2, ri, ti, rj, tj),
        psi: (1.0 - xi) * dofs.psi[e] + xi * dofs.psi[e + 1],
        psi1: (dofs.psi[e + 1] - dofs.psi[e]) / h,
    })
}

// ---------------------------------------------------------------------------
// Gradient container
// ---------------------------------------------------------------------------

/// Covector paired with [`DofVector`] variations.
///
/// `theta` entries pair with left-invariant rotation increments
/// `δΛ = hat(δθ) Λ` and are present exactly when the state carries rotations.
#[derive(Debug, Clone)]
pub struct DofGradient {
    /// Conjugate to nodal positions.
    pub r: Vec<Vec3>,
    /// Conjugate to nodal tangent coefficients.
    pub t: Vec<Vec3>,
    /// Conjugate to nodal twist angles (zero on the rotation path).
    pub psi: Vec<f64>,
    /// Conjugate to nodal rotation increments.
    pub theta: Option<Vec<Vec3>>,
}

impl DofGradient {
    fn zeros(n: usize, with_theta: bool) -> Self {
        Self {
            r: vec![Vec3::zeros(); n],
            t: vec![Vec3::zeros(); n],
            psi: vec![0.0; n],
            theta: with_theta.then(|| vec![Vec3::zeros(); n]),
        }
    }

    /// Flattens the scalar-path entries as `[r, t, ψ]` per node.
    #[must_use]
    pub fn flatten_ti(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(7 * self.r.len());
        for i in 0..self.r.len() {
            out.extend_from_slice(self.r[i].as_slice());
            out.extend_from_slice(self.t[i].as_slice());
            out.push(self.psi[i]);
        }
        out
    }

    /// Largest absolute entry over all components.
    #[must_use]
    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.r.len() {
            m = m
                .max(self.r[i].amax())
                .max(self.t[i].amax())
                .max(self.psi[i].abs());
            if let Some(th) = &self.theta {
                m = m.max(th[i].amax());
            }
        }
        m
    }
}

// ---------------------------------------------------------------------------
// Energy and gradient assembly
// ---------------------------------------------------------------------------

/// Total potential energy of the discrete rod under `loads`.
///
/// Dispatches on the presence of rotation dofs: without them the law must be
/// transversely isotropic and the scalar-twist energy is used; with them the
/// full anisotropic energy is used. An applied tip bending moment has no
/// potential and is ignored here (see [`LoadCase::tip_bending_moment`]).
pub fn assemble_energy(
    grid: &Grid,
    dofs: &DofVector,
    law: &MaterialLaw,
    loads: &LoadCase,
) -> Result<f64> {
    dofs.validate(grid)?;
    law.validate()?;
    loads.validate()?;
    if dofs.has_rotations() {
        general_energy(grid, dofs, law, loads)
    } else {
        ti_energy(grid, dofs, law, loads)
    }
}

/// Analytic first variation of [`assemble_energy`], including the
/// non-potential tip bending moment when present on the rotation path.
pub fn assemble_gradient(
    grid: &Grid,
    dofs: &DofVector,
    law: &MaterialLaw,
    loads: &LoadCase,
) -> Result<DofGradient> {
    dofs.validate(grid)?;
    law.validate()?;
    loads.validate()?;
    if dofs.has_rotations() {
        general_gradient(grid, dofs, law, loads)
    } else {
        ti_gradient(grid, dofs, law, loads)
    }
}

/// Unit tangent and derived quadrature-point kinematics.
struct QpKinematics {
    n: f64,
    d: Vec3,
    r1: Vec3,
    r2: Vec3,
}

fn qp_kinematics(e: usize, rows: &ShapeRows, dofs: &DofVector) -> Result<QpKinematics> {
    let (ri, ti, rj, tj) = (&dofs.r[e], &dofs.t[e], &dofs.r[e + 1], &dofs.t[e + 1]);
    let r1 = combine(&rows.r1, ri, ti, rj, tj);
    let r2 = combine(&rows.r2, ri, ti, rj, tj);
    let n = r1.norm();
    if n < TANGENT_FLOOR {
        return Err(RodError::IrregularCurve {
            index: e,
            reason: format!("|r'| = {n:e} at a quadrature point"),
        });
    }
    Ok(QpKinematics {
        n,
        d: r1 / n,
        r1,
        r2,
    })
}

fn ti_energy(grid: &Grid, dofs: &DofVector, law: &MaterialLaw, loads: &LoadCase) -> Result<f64> {
    let ei = law.bending_isotropic()?;
    let lam = loads.load_factor;
    let mut energy = 0.0;
    for e in 0..grid.n_elements() {
        let h = grid.element_length(e);
        let tau = (dofs.psi[e + 1] - dofs.psi[e]) / h;
        for (q, &xi) in grid.rule().points().iter().enumerate() {
            let w = grid.rule().weights()[q] * h;
            let rows = shape_rows(xi, h);
            let k = qp_kinematics(e, &rows, dofs)?;
            let f = (k.r2 - k.d * k.d.dot(&k.r2)) / k.n;
            let eps = k.n - 1.0;
            let psi_q = (1.0 - xi) * dofs.psi[e] + xi * dofs.psi[e + 1];
            let r_q = combine(
                &rows.r,
                &dofs.r[e],
                &dofs.t[e],
                &dofs.r[e + 1],
                &dofs.t[e + 1],
            );
            let stored =
                0.5 * law.ea * eps * eps + 0.5 * ei * f.norm_squared() + 0.5 * law.gj * tau * tau;
            energy += w
                * (stored
                    - lam * loads.distributed_force.dot(&r_q)
                    - lam * loads.tangent_moment_density * psi_q);
        }
    }
    let last = grid.n_nodes() - 1;
    energy -= lam * loads.tip_force.dot(&dofs.r[last]);
    energy -= lam * loads.tip_moment * dofs.psi[last];
    Ok(energy)
}

fn ti_gradient(
    grid: &Grid,
    dofs: &DofVector,
    law: &MaterialLaw,
    loads: &LoadCase,
) -> Result<DofGradient> {
    let ei = law.bending_isotropic()?;
    let lam = loads.load_factor;
    let mut g = DofGradient::zeros(grid.n_nodes(), false);
    for e in 0..grid.n_elements() {
        let h = grid.element_length(e);
        let tau = (dofs.psi[e + 1] - dofs.psi[e]) / h;
        for (q, &xi) in grid.rule().points().iter().enumerate() {
            let w = grid.rule().weights()[q] * h;
            let rows = shape_rows(xi, h);
            let k = qp_kinematics(e, &rows, dofs)?;
            let dr2 = k.d.dot(&k.r2);
            let f = (k.r2 - k.d * dr2) / k.n;
            let eps = k.n - 1.0;
            // Conjugates to r', r'' and r of the stored energy and loads.
            let g1 = k.d * (law.ea * eps)
                - (f * (dr2 / (k.n * k.n)) + k.d * (f.norm_squared() / k.n)) * ei;
            let g2 = f * (ei / k.n);
            let g0 = -loads.distributed_force * lam;
            for (slot, node, is_t) in [
                (0, e, false),
                (1, e, true),
                (2, e + 1, false),
                (3, e + 1, true),
            ] {
                let contrib = (g0 * rows.r[slot] + g1 * rows.r1[slot] + g2 * rows.r2[slot]) * w;
                if is_t {
                    g.t[node] += contrib;
                } else {
                    g.r[node] += contrib;
                }
            }
            let m_dist = lam * loads.tangent_moment_density;
            g.psi[e] += w * (-law.gj * tau / h - m_dist * (1.0 - xi));
            g.psi[e + 1] += w * (law.gj * tau / h - m_dist * xi);
        }
    }
    let last = grid.n_nodes() - 1;
    g.r[last] -= loads.tip_force * lam;
    g.psi[last] -= lam * loads.tip_moment;
    Ok(g)
}

// ---------------------------------------------------------------------------
// Rotation path internals
// ---------------------------------------------------------------------------

/// Rotation by `angle` about `E₃`.
fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Linear form `(δa, δb) ↦ q · δχ[a, b] y` of the drill-free map.
///
/// Returns `(ca, cb)` with the pairing `ca·δa + cb·δb`. Valid wherever
/// `1 + a·b` is bounded away from zero.
fn dchi_pairing(a: &Vec3, b: &Vec3, q: &Vec3, y: &Vec3) -> (Vec3, Vec3) {
    let c = a.dot(b);
    let g = a.cross(b);
    let opc = 1.0 + c;
    let alpha = q.dot(y) - q.dot(&g) * g.dot(y) / (opc * opc);
    let v = y.cross(q) + (q * g.dot(y) + y * q.dot(&g)) / opc;
    (b * alpha + b.cross(&v), a * alpha + v.cross(a))
}

/// Relative drill data of one element of the rotation path.
struct ElementTwist {
    phi: f64,
    dphi_i: Vec3,
    dphi_j: Vec3,
    d_i: Vec3,
}

fn element_twist_data(lam_i: &Rotation, lam_j: &Rotation) -> Result<ElementTwist> {
    let d_i = lam_i.column(2);
    let d_j = lam_j.column(2);
    let chi = chi_no_drill(&Director::new(d_i)?, &Director::new(d_j)?)?;
    let m = lam_i.matrix().transpose() * chi.matrix().transpose() * lam_j.matrix();
    let x = m[(0, 0)] + m[(1, 1)];
    let y = m[(1, 0)] - m[(0, 1)];
    let denom = x * x + y * y;
    if denom < 1e-12 {
        return Err(RodError::Validation(
            "element drill angle is at the ±π branch point".into(),
        ));
    }
    let phi = y.atan2(x);
    let mut dx = [Vec3::zeros(), Vec3::zeros()];
    let mut dy = [Vec3::zeros(), Vec3::zeros()];
    for (p, q, sign, target_x) in [
        (0usize, 0usize, 1.0, true),
        (1, 1, 1.0, true),
        (1, 0, 1.0, false),
        (0, 1, -1.0, false),
    ] {
        let lam_i_ep = lam_i.column(p);
        let lam_j_eq = lam_j.column(q);
        let (ca, cb) = dchi_pairing(&d_i, &d_j, &lam_j_eq, &lam_i_ep);
        let dm_i = -chi.apply_inverse(&lam_j_eq).cross(&lam_i_ep) + d_i.cross(&ca);
        let dm_j = lam_j_eq.cross(&chi.apply(&lam_i_ep)) + d_j.cross(&cb);
        let (acc, s) = if target_x {
            (&mut dx, sign)
        } else {
            (&mut dy, sign)
        };
        acc[0] += dm_i * s;
        acc[1] += dm_j * s;
    }
    Ok(ElementTwist {
        phi,
        dphi_i: (dy[0] * x - dx[0] * y) / denom,
        dphi_j: (dy[1] * x - dx[1] * y) / denom,
        d_i,
    })
}

fn rotations_of(dofs: &DofVector) -> Result<&[Rotation]> {
    dofs.rotations
        .as_deref()
        .ok_or_else(|| RodError::Validation("operation requires rotation dofs on the state".into()))
}

/// Drill angle `φₑ` of element `e`: the rotation from the drill-free
/// transport of the start frame to the actual end frame, measured about the
/// end director.
pub fn element_twist(dofs: &DofVector, e: usize) -> Result<f64> {
    let rot = rotations_of(dofs)?;
    if e + 1 >= rot.len() {
        return Err(RodError::Validation(format!(
            "element index {e} out of range for {} nodes",
            rot.len()
        )));
    }
    let chi = {
        let d_i = Director::new(rot[e].column(2))?;
        let d_j = Director::new(rot[e + 1].column(2))?;
        chi_no_drill(&d_i, &d_j)?
    };
    let m = Rotation::from_matrix_unchecked(
        rot[e].matrix().transpose() * chi.matrix().transpose() * rot[e + 1].matrix(),
    );
    Ok(drill_angle(&m))
}

/// Cumulative twist of the rotation path measured from the base frame:
/// entry `i` is the sum of element drill angles before node `i` (entry 0 is
/// zero). For a lifted scalar state this equals `ψᵢ − ψ₀` exactly.
pub fn accumulated_twist(dofs: &DofVector) -> Result<Vec<f64>> {
    let rot = rotations_of(dofs)?;
    let mut out = Vec::with_capacity(rot.len());
    let mut acc = 0.0;
    out.push(0.0);
    for e in 0..rot.len() - 1 {
        acc += element_twist(dofs, e)?;
        out.push(acc);
    }
    Ok(out)
}

/// Section frame of the rotation path at `s`: drill-free transport of the
/// element's start frame to the local tangent, drilled by the accrued share
/// of the element twist. Satisfies `A E₃ = d(s)` exactly.
pub fn section_frame(grid: &Grid, dofs: &DofVector, s: f64) -> Result<Rotation> {
    let rot = rotations_of(dofs)?;
    let (e, xi) = grid.locate(s)?;
    let h = grid.element_length(e);
    let rows = shape_rows(xi, h);
    let k = qp_kinematics(e, &rows, dofs)?;
    let tw = element_twist_data(&rot[e], &rot[e + 1])?;
    let chi_q = chi_no_drill(&Director::new(tw.d_i)?, &Director::new(k.d)?)?;
    Ok(Rotation::from_matrix_unchecked(
        chi_q.matrix() * rot[e].matrix() * rot_z(xi * tw.phi),
    ))
}

/// Tail sums of the trapezoidal node weights: `tail[e]` integrates a unit
/// density over the part of the rod beyond element `e`'s start twist, which
/// is the lever arm of `φₑ` in the distributed tangent-moment potential.
fn twist_tail_weights(grid: &Grid) -> Vec<f64> {
    let w = node_weights(grid);
    let ne = grid.n_elements();
    let mut tail = vec![0.0; ne];
    let mut acc = 0.0;
    for e in (0..ne).rev() {
        acc += w[e + 1];
        tail[e] = acc;
    }
    tail
}

fn general_energy(
    grid: &Grid,
    dofs: &DofVector,
    law: &MaterialLaw,
    loads: &LoadCase,
) -> Result<f64> {
    let rot = rotations_of(dofs)?;
    let lam = loads.load_factor;
    let tails = twist_tail_weights(grid);
    let mut energy = 0.0;
    for e in 0..grid.n_elements() {
        let h = grid.element_length(e);
        let tw = element_twist_data(&rot[e], &rot[e + 1])?;
        let tau = tw.phi / h;
        energy += 0.5 * law.gj * tau * tau * h;
        energy -= lam * (loads.tip_moment + loads.tangent_moment_density * tails[e]) * tw.phi;
        for (q, &xi) in grid.rule().points().iter().enumerate() {
            let w = grid.rule().weights()[q] * h;
            let rows = shape_rows(xi, h);
            let k = qp_kinematics(e, &rows, dofs)?;
            let kappa = k.r1.cross(&k.r2) / (k.n * k.n);
            let chi_q = chi_no_drill(&Director::new(tw.d_i)?, &Director::new(k.d)?)?;
            let g_vec = rot[e].apply_inverse(&chi_q.apply_inverse(&kappa));
            let kk = rot_z(-xi * tw.phi) * g_vec;
            let eps = k.n - 1.0;
            let r_q = combine(
                &rows.r,
                &dofs.r[e],
                &dofs.t[e],
                &dofs.r[e + 1],
                &dofs.t[e + 1],
            );
            let stored = 0.5 * law.ea * eps * eps
                + 0.5 * (law.ei[0] * kk.x * kk.x + law.ei[1] * kk.y * kk.y);
            energy += w * (stored - lam * loads.distributed_force.dot(&r_q));
        }
    }
    let last = grid.n_nodes() - 1;
    energy -= lam * loads.tip_force.dot(&dofs.r[last]);
    Ok(energy)
}

fn general_gradient(
    grid: &Grid,
    dofs: &DofVector,
    law: &MaterialLaw,
    loads: &LoadCase,
) -> Result<DofGradient> {
    let rot = rotations_of(dofs)?;
    let lam = loads.load_factor;
    let tails = twist_tail_weights(grid);
    let mut g = DofGradient::zeros(grid.n_nodes(), true);
    let theta = g.theta.as_mut().unwrap();
    for e in 0..grid.n_elements() {
        let h = grid.element_length(e);
        let tw = element_twist_data(&rot[e], &rot[e + 1])?;
        let tau = tw.phi / h;
        // Everything pairing with δφₑ: elastic torsion, the tip tangent
        // moment (each element contributes to the end twist), and the
        // distributed tangent moment through its tail lever arm.
        let mut c_phi =
            law.gj * tau - lam * (loads.tip_moment + loads.tangent_moment_density * tails[e]);
        for (q, &xi) in grid.rule().points().iter().enumerate() {
            let w = grid.rule().weights()[q] * h;
            let rows = shape_rows(xi, h);
            let k = qp_kinematics(e, &rows, dofs)?;
            let nn = k.n * k.n;
            let kappa = k.r1.cross(&k.r2) / nn;
            let chi_q = chi_no_drill(&Director::new(tw.d_i)?, &Director::new(k.d)?)?;
            let u = chi_q.apply_inverse(&kappa);
            let g_vec = rot[e].apply_inverse(&u);
            let kk = rot_z(-xi * tw.phi) * g_vec;
            let m_k = Vec3::new(law.ei[0] * kk.x, law.ei[1] * kk.y, 0.0);
            let eps = k.n - 1.0;

            // Twist-angle sensitivity of the in-element drill.
            c_phi += w * (-xi) * (law.ei[1] - law.ei[0]) * kk.x * kk.y;

            // Frame sensitivities: start-node rotation carried by Λᵢ itself
            // and by Dᵢ inside the drill-free map.
            let y = rot[e].apply(&(rot_z(xi * tw.phi) * m_k));
            theta[e] += (-u.cross(&y)) * w;
            let (ca, cb) = dchi_pairing(&tw.d_i, &k.d, &kappa, &y);
            theta[e] += tw.d_i.cross(&ca) * w;

            // Centerline sensitivities: the unit tangent inside the
            // drill-free map, the curvature vector, and the axial stretch.
            let z = chi_q.apply(&y);
            let pcb = cb - k.d * k.d.dot(&cb);
            let g1 = pcb / k.n
                + (k.r2.cross(&z) / nn - k.d * (2.0 * kappa.dot(&z) / k.n))
                + k.d * (law.ea * eps);
            let g2 = z.cross(&k.r1) / nn;
            let g0 = -loads.distributed_force * lam;
            for (slot, node, is_t) in [
                (0, e, false),
                (1, e, true),
                (2, e + 1, false),
                (3, e + 1, true),
            ] {
                let contrib = (g0 * rows.r[slot] + g1 * rows.r1[slot] + g2 * rows.r2[slot]) * w;
                if is_t {
                    g.t[node] += contrib;
                } else {
                    g.r[node] += contrib;
                }
            }
        }
        theta[e] += tw.dphi_i * c_phi;
        theta[e + 1] += tw.dphi_j * c_phi;
    }
    let last = grid.n_nodes() - 1;
    g.r[last] -= loads.tip_force * lam;
    if let Some(m_tip) = &loads.tip_bending_moment {
        theta[last] -= m_tip * lam;
    }
    Ok(g)
}

// ---------------------------------------------------------------------------
// Constraints
// ---------------------------------------------------------------------------

/// Trapezoidal integration weights at the nodes; they sum to the rod length
/// and turn nodal collocation residuals into a discrete constraint integral.
#[must_use]
pub fn node_weights(grid: &Grid) -> Vec<f64> {
    let n = grid.n_nodes();
    let mut w = vec![0.0; n];
    for e in 0..grid.n_elements() {
        let half = 0.5 * grid.element_length(e);
        w[e] += half;
        w[e + 1] += half;
    }
    w
}

/// Nodal tangency residuals `cᵢ = [(Λᵢᵀ tᵢ) × E₃]₁,₂`, the two components
/// that vanish exactly when the nodal tangent is director-aligned.
pub fn nodal_constraints(dofs: &DofVector) -> Result<Vec<Vector2<f64>>> {
    let rot = rotations_of(dofs)?;
    Ok(rot
        .iter()
        .zip(dofs.t.iter())
        .map(|(lam, t)| {
            let u = lam.apply_inverse(t);
            Vector2::new(u.y, -u.x)
        })
        .collect())
}

/// Jacobian blocks of the nodal residual `cᵢ` with respect to the nodal
/// tangent and the left rotation increment: `(∂c/∂t, ∂c/∂θ)`.
pub fn constraint_jacobian(dofs: &DofVector, i: usize) -> Result<(Matrix2x3<f64>, Matrix2x3<f64>)> {
    let rot = rotations_of(dofs)?;
    if i >= rot.len() {
        return Err(RodError::Validation(format!(
            "node index {i} out of range for {} nodes",
            rot.len()
        )));
    }
    let lam = &rot[i];
    let t = &dofs.t[i];
    // c = ((Λᵀt)·E₂', -(Λᵀt)·E₁') rows; δ(Λᵀt) = Λᵀδt + Λᵀ(t × δθ).
    let row = |v: Vec3| (v.y, -v.x);
    let mut jt = Matrix2x3::zeros();
    let mut jth = Matrix2x3::zeros();
    for col in 0..3 {
        let ek = Vec3::ith(col, 1.0);
        let (a, b) = row(lam.apply_inverse(&ek));
        jt[(0, col)] = a;
        jt[(1, col)] = b;
        let (a, b) = row(lam.apply_inverse(&t.cross(&ek)));
        jth[(0, col)] = a;
        jth[(1, col)] = b;
    }
    Ok((jt, jth))
}

/// Constraint residual samples of a rotation-path state.
#[derive(Debug, Clone)]
pub struct ConstraintSamples {
    /// Nodal tangency residuals, the quantities the constrained solver
    /// actually drives to zero.
    pub nodal_shear: Vec<Vector2<f64>>,
    /// Tangency residual sampled at quadrature points with geodesically
    /// interpolated frames. Measures the interpolation gap inside elements,
    /// so it vanishes only with mesh refinement, at second order.
    pub qp_shear: Vec<Vector2<f64>>,
    /// Per-element gap between the scalar twist rate `(ψᵢ₊₁ − ψᵢ)/h` and the
    /// frame twist rate `φₑ/h` (rad/m). Zero to round-off for lifted states.
    pub element_twist_gap: Vec<f64>,
}

impl ConstraintSamples {
    /// Largest nodal residual magnitude.
    #[must_use]
    pub fn max_nodal(&self) -> f64 {
        self.nodal_shear
            .iter()
            .map(|c| c.amax())
            .fold(0.0, f64::max)
    }

    /// Largest quadrature-point residual magnitude.
    #[must_use]
    pub fn max_qp(&self) -> f64 {
        self.qp_shear.iter().map(|c| c.amax()).fold(0.0, f64::max)
    }

    /// Largest twist-rate gap magnitude.
    #[must_use]
    pub fn max_twist_gap(&self) -> f64 {
        self.element_twist_gap
            .iter()
            .map(|c| c.abs())
            .fold(0.0, f64::max)
    }
}

/// Samples the tangency and twist-compatibility residuals of a
/// rotation-path state. Errors when the state has no rotation dofs.
pub fn assemble_constraints(grid: &Grid, dofs: &DofVector) -> Result<ConstraintSamples> {
    dofs.validate(grid)?;
    let rot = rotations_of(dofs)?;
    let nodal_shear = nodal_constraints(dofs)?;
    let mut qp_shear = Vec::with_capacity(grid.n_elements() * grid.rule().len());
    let mut element_twist_gap = Vec::with_capacity(grid.n_elements());
    for e in 0..grid.n_elements() {
        let h = grid.element_length(e);
        let rel =
            Rotation::from_matrix_unchecked(rot[e].matrix().transpose() * rot[e + 1].matrix());
        let theta_e = crate::so3::log_rotation(&rel);
        for &xi in grid.rule().points() {
            let rows = shape_rows(xi, h);
            let k = qp_kinematics(e, &rows, dofs)?;
            let lam_q = Rotation::from_matrix_unchecked(
                rot[e].matrix() * exp_rodrigues(&(theta_e * xi)).matrix(),
            );
            let u = lam_q.apply_inverse(&k.r1);
            qp_shear.push(Vector2::new(u.y, -u.x));
        }
        let phi = element_twist(dofs, e)?;
        element_twist_gap.push(((dofs.psi[e + 1] - dofs.psi[e]) - phi) / h);
    }
    Ok(ConstraintSamples {
        nodal_shear,
        qp_shear,
        element_twist_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec3(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
        Vec3::new(
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
        )
    }

    /// A perturbed but regular scalar-path state on `grid`.
    fn random_ti_state(grid: &Grid, rng: &mut ChaCha8Rng) -> DofVector {
        let mut dofs = DofVector::straight(grid, &Vec3::zeros(), &Vec3::z()).unwrap();
        for i in 0..dofs.n_nodes() {
            dofs.r[i] += random_vec3(rng, 0.2);
            dofs.t[i] += random_vec3(rng, 0.25);
            dofs.psi[i] = rng.gen_range(-1.2..1.2);
        }
        dofs
    }

    fn random_law(rng: &mut ChaCha8Rng) -> MaterialLaw {
        MaterialLaw::new(
            rng.gen_range(0.5..3.0),
            rng.gen_range(0.5..3.0),
            rng.gen_range(0.5..3.0),
            rng.gen_range(0.5..3.0),
        )
        .unwrap()
    }

    fn random_loads(rng: &mut ChaCha8Rng) -> LoadCase {
        LoadCase {
            distributed_force: random_vec3(rng, 0.4),
            tangent_moment_density: rng.gen_range(-0.4..0.4),
            tip_force: random_vec3(rng, 0.4),
            tip_moment: rng.gen_range(-0.4..0.4),
            tip_bending_moment: None,
            load_factor: rng.gen_range(0.5..1.5),
        }
    }

    #[test]
    fn gauss_rules_integrate_polynomials() {
        for n in 1..=5 {
            let rule = GaussRule::legendre(n).unwrap();
            assert_relative_eq!(rule.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            // Exact for x^(2n-1) on [0, 1]: integral 1/(2n).
            let p = 2 * n - 1;
            let quad: f64 = rule
                .points()
                .iter()
                .zip(rule.weights())
                .map(|(x, w)| w * x.powi(p as i32))
                .sum();
            assert_relative_eq!(quad, 1.0 / (2.0 * n as f64), epsilon = 1e-13);
        }
        assert!(GaussRule::legendre(0).is_err());
        assert!(GaussRule::legendre(6).is_err());
    }

    #[test]
    fn grid_validation_rejects_bad_input() {
        assert!(Grid::uniform(0, 1.0).is_err());
        assert!(Grid::uniform(4, -1.0).is_err());
        assert!(Grid::from_breakpoints(vec![0.0, 0.5, 0.5, 1.0], 3).is_err());
        assert!(Grid::from_breakpoints(vec![0.1, 0.5, 1.0], 3).is_err());
        let g = Grid::uniform(4, 2.0).unwrap();
        assert_eq!(g.n_elements(), 4);
        assert_eq!(g.n_nodes(), 5);
        assert_relative_eq!(g.element_length(2), 0.5);
        assert!(g.locate(-0.1).is_err());
        assert!(g.locate(2.1).is_err());
        let (e, xi) = g.locate(2.0).unwrap();
        assert_eq!(e, 3);
        assert_relative_eq!(xi, 1.0);
    }

    #[test]
    fn interpolation_reproduces_straight_state() {
        let grid = Grid::uniform(5, 2.0).unwrap();
        let dofs = DofVector::straight(&grid, &Vec3::new(1.0, 0.0, 0.0), &Vec3::z()).unwrap();
        for s in [0.0, 0.3, 1.0, 1.77, 2.0] {
            let p = interpolate(&grid, &dofs, s).unwrap();
            assert_relative_eq!(p.r.x, 1.0, epsilon = 1e-14);
            assert_relative_eq!(p.r.z, s, epsilon = 1e-13);
            assert_relative_eq!((p.r1 - Vec3::z()).norm(), 0.0, epsilon = 1e-13);
            assert_relative_eq!(p.r2.norm(), 0.0, epsilon = 1e-12);
            assert_relative_eq!(p.psi, 0.0);
        }
    }

    #[test]
    fn interpolation_reproduces_cubic_curves_and_linear_twist() {
        let grid = Grid::uniform(3, 1.5).unwrap();
        let a = [
            Vec3::new(0.1, -0.2, 0.3),
            Vec3::new(1.0, 0.5, -0.2),
            Vec3::new(-0.3, 0.8, 0.1),
            Vec3::new(0.2, -0.1, 0.4),
        ];
        let p = |s: f64| a[0] + a[1] * s + a[2] * (s * s) + a[3] * (s * s * s);
        let p1 = |s: f64| a[1] + a[2] * (2.0 * s) + a[3] * (3.0 * s * s);
        let p2 = |s: f64| a[2] * 2.0 + a[3] * (6.0 * s);
        let mut dofs = DofVector::straight(&grid, &Vec3::zeros(), &Vec3::z()).unwrap();
        for i in 0..grid.n_nodes() {
            let s = grid.node_s(i);
            dofs.r[i] = p(s);
            dofs.t[i] = p1(s);
            dofs.psi[i] = 0.7 * s - 0.2;
        }
        for s in [0.0, 0.21, 0.5, 0.74, 1.0, 1.31, 1.5] {
            let q = interpolate(&grid, &dofs, s).unwrap();
            assert_relative_eq!((q.r - p(s)).norm(), 0.0, epsilon = 1e-12);
            assert_relative_eq!((q.r1 - p1(s)).norm(), 0.0, epsilon = 1e-12);
            assert_relative_eq!((q.r2 - p2(s)).norm(), 0.0, epsilon = 1e-11);
            assert_relative_eq!(q.psi, 0.7 * s - 0.2, epsilon = 1e-13);
            assert_relative_eq!(q.psi1, 0.7, epsilon = 1e-12);
        }
    }

    /// Radial interpolation error on a circle, and its refinement rate.
    /// Hermite cubics with exact nodal data converge at fourth order, so
    /// halving the mesh shrinks the error well past the required factor 4.
    #[test]
    fn circle_interpolation_convergence() {
        let radial_error = |n: usize| -> f64 {
            let length = std::f64::consts::TAU;
            let grid = Grid::uniform(n, length).unwrap();
            let mut dofs = DofVector::straight(&grid, &Vec3::zeros(), &Vec3::z()).unwrap();
            for i in 0..grid.n_nodes() {
                let s = grid.node_s(i);
                dofs.r[i] = Vec3::new(s.cos(), s.sin(), 0.0);
                dofs.t[i] = Vec3::new(-s.sin(), s.cos(), 0.0);
            }
            let mut err: f64 = 0.0;
            for k in 0..(7 * n) {
                let s = length * (k as f64 + 0.39) / (7 * n) as f64;
                let p = interpolate(&grid, &dofs, s).unwrap();
                err = err.max((p.r.norm() - 1.0).abs());
            }
            err
        };
        let e16 = radial_error(16);
        let e32 = radial_error(32);
        let h16 = std::f64::consts::TAU / 16.0;
        assert!(e16 < 0.05 * h16 * h16, "e16 = {e16:e}");
        assert!(e16 / e32 > 4.0, "rate = {}", e16 / e32);
    }

    #[test]
    fn pure_twist_energy_matches_closed_form() {
        let grid = Grid::uniform(4, 1.0).unwrap();
        let law = MaterialLaw::transversely_isotropic(1.0, 1.0, 50.0).unwrap();
        let mut dofs = DofVector::straight(&grid, &Vec3::zeros(), &Vec3::z()).unwrap();
        for i in 0..grid.n_nodes() {
            dofs.psi[i] = 0.1 * grid.node_s(i);
        }
        let e = assemble_energy(&grid, &dofs, &law, &LoadCase::zero()).unwrap();
        assert_relative_eq!(e, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn reference_state_has_zero_energy_and_gradient() {
        let grid = Grid::uniform(6, 1.3).unwrap();
        let law = MaterialLaw::transversely_isotropic(2.0, 1.5, 0.8).unwrap();
        let dofs = DofVector::straight(&grid, &Vec3::zeros(), &Vec3::z()).unwrap();
        let e = assemble_energy(&grid, &dofs, &law, &LoadCase::zero()).unwrap();
        assert_relative_eq!(e, 0.0, epsilon = 1e-15);
        let g = assemble_gradient(&grid, &dofs, &law, &LoadCase::zero()).unwrap();
        assert!(g.max_abs() < 1e-14);

        let lifted = dofs.with_bishop_rotations().unwrap();
        let law_aniso = MaterialLaw::new(2.0, 1.5, 0.7, 0.8).unwrap();
        let e = assemble_energy(&grid, &lifted, &law_aniso, &LoadCase::zero()).unwrap();
        assert_relative_eq!(e, 0.0, epsilon = 1e-15);
        let g = assemble_gradient(&grid, &lifted, &law_aniso, &LoadCase::zero()).unwrap();
        assert!(g.max_abs() < 1e-14);
    }

    #[test]
    fn tip_force_enters_gradient_exactly() {
        let grid = Grid::uniform(3, 1.0).unwrap();
        let law = MaterialLaw::transversely_isotropic(1.0, 1.0, 1.0).unwrap();
        let dofs = DofVector::straight(&grid, &Vec3::zeros(), &Vec3::z()).unwrap();
        let loads = LoadCase {
            tip_force: Vec3::new(0.3, -0.2, 0.5),
            load_factor: 2.0,
            ..LoadCase::zero()
        };
        let g = assemble_gradient(&grid, &dofs, &law, &loads).unwrap();
        assert_relative_eq!(
            (g.r[3] + loads.tip_force * 2.0).norm(),
            0.0,
            epsilon = 1e-14
        );
        for i in 0..3 {
            assert!(g.r[i].norm() < 1e-14);
        }
    }

    #[test]
    fn energy_decreases_along_descent_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let grid = Grid::uniform(4, 1.0).unwrap();
        let law = MaterialLaw::transversely_isotropic(2.0, 1.0, 0.9).unwrap();
        let loads = LoadCase::zero();
        let dofs = random_ti_state(&grid, &mut rng);
        let e0 = assemble_energy(&grid, &dofs, &law, &loads).unwrap();
        let g = assemble_gradient(&grid, &dofs, &law, &loads)
            .unwrap()
            .flatten_ti();
        let flat = dofs.flatten_ti();
        let step: Vec<f64> = flat.iter().zip(&g).map(|(x, gi)| x - 1e-4 * gi).collect();
        let moved = DofVector::from_flat_ti(&grid, &step).unwrap();
        let e1 = assemble_energy(&grid, &moved, &law, &loads).unwrap();
        assert!(e1 < e0, "e1 = {e1}, e0 = {e0}");
    }

    /// Central finite differences of the energy against the analytic
    /// gradient, scalar path, over many random states and loads.
    #[test]
    fn ti_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let grid = Grid::uniform(3, 1.1).unwrap();
        let step = 1e-6;
        for _ in 0..20 {
            let dofs = random_ti_state(&grid, &mut rng);
            let law = random_law(&mut rng);
            let law = MaterialLaw::transversely_isotropic(law.ea, law.ei[0], law.gj).unwrap();
            let loads = random_loads(&mut rng);
            let g = assemble_gradient(&grid, &dofs, &law, &loads)
                .unwrap()
                .flatten_ti();
            let flat = dofs.flatten_ti();
            let mut worst: f64 = 0.0;
            let scale = 1.0 + g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for k in 0..flat.len() {
                let mut plus = flat.clone();
                let mut minus = flat.clone();
                plus[k] += step;
                minus[k] -= step;
                let ep = assemble_energy(
                    &grid,
                    &DofVector::from_flat_ti(&grid, &plus).unwrap(),
                    &law,
                    &loads,
                )
                .unwrap();
                let em = assemble_energy(
                    &grid,
                    &DofVector::from_flat_ti(&grid, &minus).unwrap(),
                    &law,
                    &loads,
                )
                .unwrap();
                worst = worst.max((g[k] - (ep - em) / (2.0 * step)).abs() / scale);
            }
            assert!(worst < 1e-6, "worst rel FD mismatch {worst:e}");
        }
    }

    /// A generic rotation-path state: lifted from a random scalar state and
    /// then pushed off the constraint manifold by random frame twirls.
    fn random_general_state(grid: &Grid, rng: &mut ChaCha8Rng) -> DofVector {
        let mut dofs = random_ti_state(grid, rng).with_bishop_rotations().unwrap();
        let rot = dofs.rotations.as_mut().unwrap();
        for lam in rot.iter_mut() {
            *lam = exp_rodrigues(&random_vec3(rng, 0.2)) * *lam;
        }
        dofs
    }

    /// Central finite differences against the analytic gradient, rotation
    /// path. Translations difference the flat entries; rotations difference
    /// multiplicatively, matching the left-increment pairing.
    #[test]
    fn general_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let grid = Grid::uniform(3, 1.1).unwrap();
        let step = 1e-6;
        for _ in 0..20 {
            let dofs = random_general_state(&grid, &mut rng);
            let law = random_law(&mut rng);
            let loads = random_loads(&mut rng);
            let g = assemble_gradient(&grid, &dofs, &law, &loads).unwrap();
            let scale = 1.0 + g.max_abs();
            let mut worst: f64 = 0.0;
            for i in 0..grid.n_nodes() {
                for c in 0..3 {
                    for (field, grad) in [(0, &g.r), (1, &g.t)] {
                        let mut plus = dofs.clone();
                        let mut minus = dofs.clone();
                        {
                            let (p, m) = if field == 0 {
                                (&mut plus.r[i], &mut minus.r[i])
                            } else {
                                (&mut plus.t[i], &mut minus.t[i])
                            };
                            p[c] += step;
                            m[c] -= step;
                        }
                        let ep = assemble_energy(&grid, &plus, &law, &loads).unwrap();
                        let em = assemble_energy(&grid, &minus, &law, &loads).unwrap();
                        worst = worst.max((grad[i][c] - (ep - em) / (2.0 * step)).abs() / scale);
                    }
                    let axis = Vec3::ith(c, step);
                    let mut plus = dofs.clone();
                    let mut minus = dofs.clone();
                    {
                        let rp = plus.rotations.as_mut().unwrap();
                        rp[i] = exp_rodrigues(&axis) * rp[i];
                        let rm = minus.rotations.as_mut().unwrap();
                        rm[i] = exp_rodrigues(&(-axis)) * rm[i];
                    }
                    let ep = assemble_energy(&grid, &plus, &law, &loads).unwrap();
                    let em = assemble_energy(&grid, &minus, &law, &loads).unwrap();
                    let th = g.theta.as_ref().unwrap();
                    worst = worst.max((th[i][c] - (ep - em) / (2.0 * step)).abs() / scale);
                }
            }
            assert!(worst < 1e-6, "worst rel FD mismatch {worst:e}");
        }
    }

    /// The drill-free map differential used by the rotation-path gradient,
    /// checked in isolation against finite differences of the map formula.
    #[test]
    fn dchi_pairing_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let chi_raw = |a: &Vec3, b: &Vec3| -> Mat3 {
            let c = a.dot(b);
            let g = a.cross(b);
            Mat3::identity() * c + crate::so3::hat(&g) + g * g.transpose() / (1.0 + c)
        };
        for _ in 0..50 {
            let a = Director::new(random_vec3(&mut rng, 1.0) + Vec3::z() * 1.5)
                .unwrap()
                .vector();
            let b = Director::new(random_vec3(&mut rng, 1.0) + Vec3::z() * 1.5)
                .unwrap()
                .vector();
            let q = random_vec3(&mut rng, 1.0);
            let y = random_vec3(&mut rng, 1.0);
            let da = random_vec3(&mut rng, 1.0);
            let db = random_vec3(&mut rng, 1.0);
            let (ca, cb) = dchi_pairing(&a, &b, &q, &y);
            let analytic = ca.dot(&da) + cb.dot(&db);
            let step = 1e-6;
            let fd = (q.dot(&(chi_raw(&(a + da * step), &(b + db * step)) * y))
                - q.dot(&(chi_raw(&(a - da * step), &(b - db * step)) * y)))
                / (2.0 * step);
            assert_relative_eq!(analytic, fd, epsilon = 1e-7, max_relative = 1e-7);
        }
    }

    /// Lifting a scalar-twist state to nodal frames reproduces its energy
    /// exactly: same axial and bending terms by construction, and the element
    /// drill angles equal the nodal twist differences identically.
    #[test]
    fn lifted_state_energy_matches_scalar_path_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let grid = Grid::uniform(5, 1.4).unwrap();
        for _ in 0..10 {
            let mut dofs = random_ti_state(&grid, &mut rng);
            dofs.psi[0] = 0.0;
            let law = random_law(&mut rng);
            let law = MaterialLaw::transversely_isotropic(law.ea, law.ei[0], law.gj).unwrap();
            let mut loads = random_loads(&mut rng);
            loads.tip_bending_moment = None;
            let e_ti = assemble_energy(&grid, &dofs, &law, &loads).unwrap();
            let lifted = dofs.clone().with_bishop_rotations().unwrap();
            let e_gen = assemble_energy(&grid, &lifted, &law, &loads).unwrap();
            assert_relative_eq!(e_ti, e_gen, epsilon = 1e-12, max_relative = 1e-12);

            for e in 0..grid.n_elements() {
                let phi = element_twist(&lifted, e).unwrap();
                assert_relative_eq!(phi, dofs.psi[e + 1] - dofs.psi[e], epsilon = 1e-12);
            }
            let acc = accumulated_twist(&lifted).unwrap();
            for (a, p) in acc.iter().zip(dofs.psi.iter()) {
                assert_relative_eq!(a, p, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn lifted_state_satisfies_constraints_to_round_off() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let grid = Grid::uniform(6, 2.0).unwrap();
        let dofs = random_ti_state(&grid, &mut rng)
            .with_bishop_rotations()
            .unwrap();
        let samples = assemble_constraints(&grid, &dofs).unwrap();
        assert!(samples.max_nodal() < 1e-10, "nodal {}", samples.max_nodal());
        assert!(
            samples.max_twist_gap() < 1e-10,
            "twist gap {}",
            samples.max_twist_gap()
        );
    }

    #[test]
    fn constraint_samples_match_direct_evaluation_for_identity_frames() {
        let grid = Grid::uniform(4, std::f64::consts::FRAC_PI_2).unwrap();
        let mut dofs = DofVector::straight(&grid, &Vec3::zeros(), &Vec3::z()).unwrap();
        for i in 0..grid.n_nodes() {
            let s = grid.node_s(i);
            dofs.r[i] = Vec3::new(s.sin(), 1.0 - s.cos(), 0.0);
            dofs.t[i] = Vec3::new(s.cos(), s.sin(), 0.0);
        }
        dofs.rotations = Some(vec![Rotation::identity(); grid.n_nodes()]);
        let samples = assemble_constraints(&grid, &dofs).unwrap();
        for (i, c) in samples.nodal_shear.iter().enumerate() {
            let t = dofs.t[i];
            let direct = t.cross(&Vec3::z());
            assert_relative_eq!(c.x, direct.x, epsilon = 1e-14);
            assert_relative_eq!(c.y, direct.y, epsilon = 1e-14);
        }
        // The straight aligned state with identity frames has no residual.
        let straight = DofVector::straight(&grid, &Vec3::zeros(), &Vec3::z())
            .unwrap()
            .with_bishop_rotations()
            .unwrap();
        let s = assemble_constraints(&grid, &straight).unwrap();
        assert!(s.max_nodal() < 1e-15);
        assert!(s.max_qp() < 1e-15);
        assert!(s.max_twist_gap() < 1e-15);
    }

    /// Quadrature-point shear samples measure the in-element interpolation
    /// gap; on a lifted circular arc they shrink at second order.
    #[test]
    fn qp_shear_samples_converge_quadratically() {
        let arc_state = |n: usize| -> (Grid, DofVector) {
            let grid = Grid::uniform(n, 1.0).unwrap();
            let mut dofs = DofVector::straight(&grid, &Vec3::zeros(), &Vec3::z()).unwrap();
            for i in 0..grid.n_nodes() {
                let s = grid.node_s(i);
                dofs.r[i] = Vec3::new(0.0, 1.0 - s.cos(), s.sin());
                dofs.t[i] = Vec3::new(0.0, s.sin(), s.cos());
            }
            let dofs = dofs.with_bishop_rotations().unwrap();
            (grid, dofs)
        };
        let (g8, d8) = arc_state(8);
        let (g16, d16) = arc_state(16);
        let e8 = assemble_constraints(&g8, &d8).unwrap().max_qp();
        let e16 = assemble_constraints(&g16, &d16).unwrap().max_qp();
        assert!(e8 / e16 > 3.0, "rate {}", e8 / e16);
        assert!(e8 < 0.1 * (1.0f64 / 8.0), "e8 = {e8}");
    }

    #[test]
    fn constraint_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let grid = Grid::uniform(3, 1.0).unwrap();
        let dofs = random_general_state(&grid, &mut rng);
        let step = 1e-6;
        for i in 0..grid.n_nodes() {
            let (jt, jth) = constraint_jacobian(&dofs, i).unwrap();
            for c in 0..3 {
                let mut plus = dofs.clone();
                let mut minus = dofs.clone();
                plus.t[i][c] += step;
                minus.t[i][c] -= step;
                let cp = nodal_constraints(&plus).unwrap()[i];
                let cm = nodal_constraints(&minus).unwrap()[i];
                let fd = (cp - cm) / (2.0 * step);
                assert_relative_eq!(jt[(0, c)], fd.x, epsilon = 1e-8);
                assert_relative_eq!(jt[(1, c)], fd.y, epsilon = 1e-8);

                let axis = Vec3::ith(c, step);
                let mut plus = dofs.clone();
                let mut minus = dofs.clone();
                {
                    let rp = plus.rotations.as_mut().unwrap();
                    rp[i] = exp_rodrigues(&axis) * rp[i];
                    let rm = minus.rotations.as_mut().unwrap();
                    rm[i] = exp_rodrigues(&(-axis)) * rm[i];
                }
                let cp = nodal_constraints(&plus).unwrap()[i];
                let cm = nodal_constraints(&minus).unwrap()[i];
                let fd = (cp - cm) / (2.0 * step);
                assert_relative_eq!(jth[(0, c)], fd.x, epsilon = 1e-8);
                assert_relative_eq!(jth[(1, c)], fd.y, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn node_weights_sum_to_length() {
        let grid = Grid::from_breakpoints(vec![0.0, 0.2, 0.7, 1.0, 1.9], 3).unwrap();
        let w = node_weights(&grid);
        assert_relative_eq!(w.iter().sum::<f64>(), 1.9, epsilon = 1e-14);
        assert_relative_eq!(w[0], 0.1, epsilon = 1e-14);
        assert_relative_eq!(w[1], 0.35, epsilon = 1e-14);
    }

    #[test]
    fn section_frame_keeps_director_tangent_aligned() {
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let grid = Grid::uniform(4, 1.2).unwrap();
        let dofs = random_general_state(&grid, &mut rng);
        for s in [0.0, 0.13, 0.57, 0.9, 1.2] {
            let a = section_frame(&grid, &dofs, s).unwrap();
            let p = interpolate(&grid, &dofs, s).unwrap();
            let d = p.r1 / p.r1.norm();
            assert_relative_eq!((a.column(2) - d).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn missing_rotations_is_a_validation_error() {
        let grid = Grid::uniform(2, 1.0).unwrap();
        let dofs = DofVector::straight(&grid, &Vec3::zeros(), &Vec3::z()).unwrap();
        assert!(matches!(
            assemble_constraints(&grid, &dofs),
            Err(RodError::Validation(_))
        ));
        let law = MaterialLaw::new(1.0, 2.0, 1.0, 1.0).unwrap();
        // Anisotropic law without rotation dofs cannot use the scalar path.
        assert!(assemble_energy(&grid, &dofs, &law, &LoadCase::zero()).is_err());
    }
}
