//! Sampled framed curves: relatively parallel transport and its diagnostics.
//!
//! A [`SampledCurve`] stores positions and first/second derivatives on a
//! strictly increasing parameter grid. A [`FrameField`] attaches a
//! right-handed orthonormal triad `{u, v, d}` to each sample with `d` the
//! unit tangent.
//!
//! [`bishop_transport`] builds the relatively parallel (rotation-minimizing,
//! "Bishop") frame by composing per-segment drill-free rotations
//! `χ[dᵢ, dᵢ₊₁]`. Each is parallel transport of the tangent plane along the
//! great-circle arc between consecutive tangent directors, so the discrete
//! frame has no twist about the tangent by construction.
//!
//! The transport is genuinely path dependent: around a closed tangent loop
//! the frame returns rotated by the spherical area the tangent encloses
//! (holonomy `2π(1 − cos α)` for a circle at colatitude `α`). The same
//! obstruction shows up as the induced torsion `a·d′` of the one-shot
//! drill-free map from a fixed reference director
//! (`a = −(d₀ × d)/(1 + d₀·d)`); [`accumulated_correction_angle`]
//! integrates its negative, the drill angle that makes the composite frame
//! `exp[ψ d̂]·χ[d₀, d]` twist-free.
//!
//! Non-unit-speed curves are handled by normalizing first: all formulas use
//! the unit tangent `d = r′/|r′|` and its derivative
//! `d′ = (I − d⊗d) r″ / |r′|`, which reduce to `r′`, `r″` for arc-length
//! parametrization.
//!
//! [`compatibility_residual`] checks the space-time compatibility
//! `Ω̇ − W′ = Ω × W` of convected strain/velocity fields on a rectangular
//! grid by central differences.

use nalgebra::Matrix3;

use crate::so3::{chi_no_drill, Director, Vec3, ANTIPODAL_TOL};
use crate::{Result, RodError};

/// Orthogonality tolerance for seed vectors handed to [`bishop_transport`].
pub const SEED_ORTHOGONALITY_TOL: f64 = 1e-8;

/// A curve sampled on a strictly increasing parameter grid, with first and
/// second derivatives at every sample.
#[derive(Debug, Clone)]
pub struct SampledCurve {
    s: Vec<f64>,
    r: Vec<Vec3>,
    r1: Vec<Vec3>,
    r2: Vec<Vec3>,
}

impl SampledCurve {
    /// Builds a curve from explicit samples of `r`, `r′`, `r″`.
    ///
    /// Validates: at least two samples, matching lengths, strictly
    /// increasing `s`, finite values, and regularity `|r′| > 0` everywhere.
    pub fn from_samples(s: Vec<f64>, r: Vec<Vec3>, r1: Vec<Vec3>, r2: Vec<Vec3>) -> Result<Self> {
        if s.len() < 2 {
            return Err(RodError::GridMismatch(format!(
                "need at least 2 samples, got {}",
                s.len()
            )));
        }
        if r.len() != s.len() || r1.len() != s.len() || r2.len() != s.len() {
            return Err(RodError::GridMismatch(format!(
                "sample arrays disagree: s={}, r={}, r'={}, r''={}",
                s.len(),
                r.len(),
                r1.len(),
                r2.len()
            )));
        }
        for i in 0..s.len() {
            if !s[i].is_finite() {
                return Err(RodError::IrregularCurve {
                    index: i,
                    reason: "non-finite parameter value".into(),
                });
            }
            if i > 0 && s[i] <= s[i - 1] {
                return Err(RodError::IrregularCurve {
                    index: i,
                    reason: format!(
                        "parameter not strictly increasing ({} after {})",
                        s[i],
                        s[i - 1]
                    ),
                });
            }
            let norm = r1[i].norm();
            if !norm.is_finite() || norm == 0.0 {
                return Err(RodError::IrregularCurve {
                    index: i,
                    reason: format!("|r'| = {norm} violates regularity"),
                });
            }
        }
        Ok(Self { s, r, r1, r2 })
    }

    /// Builds a curve by evaluating `f(s) = (r, r′, r″)` on the given grid.
    pub fn from_fn(s: Vec<f64>, f: impl Fn(f64) -> (Vec3, Vec3, Vec3)) -> Result<Self> {
        let mut r = Vec::with_capacity(s.len());
        let mut r1 = Vec::with_capacity(s.len());
        let mut r2 = Vec::with_capacity(s.len());
        for &si in &s {
            let (p, d1, d2) = f(si);
            r.push(p);
            r1.push(d1);
            r2.push(d2);
        }
        Self::from_samples(s, r, r1, r2)
    }

    /// Builds a curve from positions only, reconstructing derivatives with a
    /// clamped C² cubic spline. End slopes are estimated from one-sided
    /// quadratics through the first/last three samples.
    pub fn from_positions(s: Vec<f64>, r: Vec<Vec3>) -> Result<Self> {
        if s.len() < 3 {
            return Err(RodError::GridMismatch(format!(
                "spline reconstruction needs at least 3 samples, got {}",
                s.len()
            )));
        }
        if r.len() != s.len() {
            return Err(RodError::GridMismatch(format!(
                "sample arrays disagree: s={}, r={}",
                s.len(),
                r.len()
            )));
        }
        let n = s.len();
        // One-sided cubic (or quadratic when only 3 samples exist) end
        // slopes; anything lower-order visibly pollutes the whole spline.
        let m_pts = 4.min(n);
        let slope_start = {
            let w = lagrange_derivative_weights(&s[..m_pts], s[0]);
            (0..m_pts).map(|j| r[j] * w[j]).sum::<Vec3>()
        };
        let slope_end = {
            let w = lagrange_derivative_weights(&s[n - m_pts..], s[n - 1]);
            (0..m_pts).map(|j| r[n - m_pts + j] * w[j]).sum::<Vec3>()
        };
        let m = clamped_spline_slopes(&s, &r, slope_start, slope_end);
        // Second derivatives from the Hermite segment polynomials. The
        // spline is C², so left/right limits agree at interior knots.
        let mut r2 = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b, seg_len, left, right) = if i == 0 {
                (r[0], r[1], s[1] - s[0], m[0], m[1])
            } else {
                (r[i - 1], r[i], s[i] - s[i - 1], m[i - 1], m[i])
            };
            let h = seg_len;
            let second_at = |xi: f64| -> Vec3 {
                (a * (12.0 * xi - 6.0) + b * (6.0 - 12.0 * xi)) / (h * h)
                    + (left * (6.0 * xi - 4.0) + right * (6.0 * xi - 2.0)) / h
            };
            r2.push(if i == 0 {
                second_at(0.0)
            } else {
                second_at(1.0)
            });
        }
        Self::from_samples(s, r, m, r2)
    }

    /// Parameter samples.
    #[must_use]
    pub fn s(&self) -> &[f64] {
        &self.s
    }
    /// Position samples.
    #[must_use]
    pub fn r(&self) -> &[Vec3] {
        &self.r
    }
    /// First-derivative samples.
    #[must_use]
    pub fn r1(&self) -> &[Vec3] {
        &self.r1
    }
    /// Second-derivative samples.
    #[must_use]
    pub fn r2(&self) -> &[Vec3] {
        &self.r2
    }
    /// Number of samples.
    #[must_use]
    pub fn len(&self) -> usize {
        self.s.len()
    }
    /// Whether the curve has no samples (never true for validated curves).
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Unit tangent at sample `i`.
    #[must_use]
    pub fn tangent(&self, i: usize) -> Vec3 {
        self.r1[i] / self.r1[i].norm()
    }

    /// Derivative of the unit tangent at sample `i`:
    /// `d′ = (I − d⊗d) r″ / |r′|`.
    #[must_use]
    pub fn tangent_derivative(&self, i: usize) -> Vec3 {
        let n = self.r1[i].norm();
        let d = self.r1[i] / n;
        (self.r2[i] - d * d.dot(&self.r2[i])) / n
    }
}

/// Solves the C² cubic-spline tridiagonal system for knot slopes with
/// clamped ends (Thomas algorithm; scalar coefficients, vector right side).
fn clamped_spline_slopes(s: &[f64], y: &[Vec3], m0: Vec3, mn: Vec3) -> Vec<Vec3> {
    let n = s.len();
    let mut sub = vec![0.0; n];
    let mut diag = vec![1.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs = vec![Vec3::zeros(); n];
    rhs[0] = m0;
    rhs[n - 1] = mn;
    for i in 1..n - 1 {
        let hl = s[i] - s[i - 1];
        let hr = s[i + 1] - s[i];
        sub[i] = 1.0 / hl;
        diag[i] = 2.0 * (1.0 / hl + 1.0 / hr);
        sup[i] = 1.0 / hr;
        rhs[i] = (y[i] - y[i - 1]) * (3.0 / (hl * hl)) + (y[i + 1] - y[i]) * (3.0 / (hr * hr));
    }
    // Forward elimination.
    for i in 1..n {
        let w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] = rhs[i] - rhs[i - 1] * w;
    }
    // Back substitution.
    let mut m = vec![Vec3::zeros(); n];
    m[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        m[i] = (rhs[i] - m[i + 1] * sup[i]) / diag[i];
    }
    m
}

/// An orthonormal, right-handed frame field `{u, v, d}` along a curve, with
/// `d` the unit tangent and `u × v = d`. Carries the curve derivatives so
/// downstream operations (Darboux vectors) need no second argument.
#[derive(Debug, Clone)]
pub struct FrameField {
    s: Vec<f64>,
    u: Vec<Vec3>,
    v: Vec<Vec3>,
    d: Vec<Vec3>,
    r1: Vec<Vec3>,
    r2: Vec<Vec3>,
}

impl FrameField {
    /// Builds a frame field from per-sample `u` vectors on a curve.
    ///
    /// Each `u` must be orthogonal to the local tangent within
    /// [`SEED_ORTHOGONALITY_TOL`]; it is then projected and renormalized,
    /// and `v = d × u` completes the right-handed triad.
    pub fn from_normals(curve: &SampledCurve, u: Vec<Vec3>) -> Result<Self> {
        if u.len() != curve.len() {
            return Err(RodError::GridMismatch(format!(
                "normal array length {} does not match curve length {}",
                u.len(),
                curve.len()
            )));
        }
        let mut uu = Vec::with_capacity(u.len());
        let mut vv = Vec::with_capacity(u.len());
        let mut dd = Vec::with_capacity(u.len());
        for (i, raw) in u.iter().enumerate() {
            let d = curve.tangent(i);
            let mut ui = *raw;
            let norm = ui.norm();
            if !norm.is_finite() || norm == 0.0 {
                return Err(RodError::ZeroVector { norm });
            }
            ui /= norm;
            let dot = ui.dot(&d).abs();
            if dot > SEED_ORTHOGONALITY_TOL {
                return Err(RodError::Validation(format!(
                    "normal at sample {i} is not orthogonal to the tangent (|u·d| = {dot:e})"
                )));
            }
            ui = (ui - d * ui.dot(&d)).normalize();
            uu.push(ui);
            vv.push(d.cross(&ui));
            dd.push(d);
        }
        Ok(Self {
            s: curve.s().to_vec(),
            u: uu,
            v: vv,
            d: dd,
            r1: curve.r1().to_vec(),
            r2: curve.r2().to_vec(),
        })
    }

    /// Parameter samples.
    #[must_use]
    pub fn s(&self) -> &[f64] {
        &self.s
    }
    /// First frame vectors.
    #[must_use]
    pub fn u(&self) -> &[Vec3] {
        &self.u
    }
    /// Second frame vectors.
    #[must_use]
    pub fn v(&self) -> &[Vec3] {
        &self.v
    }
    /// Tangent directors.
    #[must_use]
    pub fn d(&self) -> &[Vec3] {
        &self.d
    }
    /// Number of samples.
    #[must_use]
    pub fn len(&self) -> usize {
        self.s.len()
    }
    /// Whether the field is empty (never true for validated fields).
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Largest orthonormality defect over all samples (diagnostic).
    #[must_use]
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            let m = Matrix3::from_columns(&[self.u[i], self.v[i], self.d[i]]);
            worst = worst.max((m.transpose() * m - Matrix3::identity()).amax());
            worst = worst.max((self.u[i].cross(&self.v[i]) - self.d[i]).amax());
        }
        worst
    }
}

/// Relatively parallel (Bishop) transport of a seed normal along a curve.
///
/// The seed `u0` must be orthogonal to the initial tangent within
/// [`SEED_ORTHOGONALITY_TOL`]; it is projected exactly onto the tangent
/// plane and renormalized. Each segment applies the drill-free rotation
/// `χ[dᵢ, dᵢ₊₁]`, so the discrete frame never twists about the tangent.
/// Consecutive antipodal tangents are an error (the drill-free map is
/// singular there); refine the sampling instead.
///
/// The frame is re-orthonormalized against accumulated roundoff every few
/// hundred segments; the correction is far below the orthonormality
/// tolerance for any reasonable sample count.
pub fn bishop_transport(curve: &SampledCurve, u0: Vec3) -> Result<FrameField> {
    let n = curve.len();
    let norm = u0.norm();
    if !norm.is_finite() || norm == 0.0 {
        return Err(RodError::ZeroVector { norm });
    }
    let d0 = curve.tangent(0);
    let u0n = u0 / norm;
    let dot = u0n.dot(&d0).abs();
    if dot > SEED_ORTHOGONALITY_TOL {
        return Err(RodError::Validation(format!(
            "seed normal is not orthogonal to the initial tangent (|u0·d| = {dot:e})"
        )));
    }
    let mut u = (u0n - d0 * u0n.dot(&d0)).normalize();
    let mut us = Vec::with_capacity(n);
    us.push(u);
    for i in 0..n - 1 {
        let da = Director::new(curve.tangent(i))?;
        let db = Director::new(curve.tangent(i + 1))?;
        let chi = chi_no_drill(&da, &db).map_err(|e| match e {
            RodError::SingularDrillFreeMap { dot } => RodError::IrregularCurve {
                index: i,
                reason: format!(
                    "consecutive tangents are antipodal (d·d′ = {dot}); refine the sampling"
                ),
            },
            other => other,
        })?;
        u = chi.apply(&u);
        if (i + 1) % 256 == 0 {
            let d = db.vector();
            u = (u - d * u.dot(&d)).normalize();
        }
        us.push(u);
    }
    FrameField::from_normals(curve, us)
}

/// Continuous signed angle from frame `a` to frame `b` about the shared
/// tangent, unwrapped along the curve.
///
/// Both fields must live on the same parameter grid with matching tangent
/// directors (within 1e-8). The per-sample angle is
/// `atan2((uₐ × u_b)·d, uₐ·u_b)`, lifted to a continuous function by
/// choosing the `2π` branch closest to the previous sample, so the result
/// can exceed `(−π, π]` and measures total accumulated rotation, not just
/// its residue. Sampling must be dense enough that successive increments
/// stay well below π.
pub fn unwrapped_relative_angle(a: &FrameField, b: &FrameField) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(RodError::GridMismatch(format!(
            "frame fields have {} and {} samples",
            a.len(),
            b.len()
        )));
    }
    let mut out = Vec::with_capacity(a.len());
    let mut prev = 0.0;
    for i in 0..a.len() {
        if (a.s[i] - b.s[i]).abs() > 1e-12 * (1.0 + a.s[i].abs()) {
            return Err(RodError::GridMismatch(format!(
                "parameter grids differ at sample {i}"
            )));
        }
        if (a.d[i] - b.d[i]).norm() > 1e-8 {
            return Err(RodError::Validation(format!(
                "tangent directors differ at sample {i}; relative drill is undefined"
            )));
        }
        let raw = (a.u[i].cross(&b.u[i]).dot(&a.d[i])).atan2(a.u[i].dot(&b.u[i]));
        let angle = if i == 0 {
            raw
        } else {
            let two_pi = std::f64::consts::TAU;
            raw + two_pi * ((prev - raw) / two_pi).round()
        };
        out.push(angle);
        prev = angle;
    }
    Ok(out)
}

/// Darboux (angular velocity along the parameter) vectors of the frame
/// field twisted by `psi` about the tangent.
///
/// Returns `ω = k + ψ′ d` per sample, where `k = d × d′` is the bending
/// part (for arc length this is `r′ × r″`) and `ψ′` comes from one-sided /
/// central second-order differences of the twist samples. For unit-speed
/// curves the result matches the explicit orthogonal-component form
/// `−(v_ψ·r″) u_ψ + (u_ψ·r″) v_ψ + ψ′ r′`.
pub fn darboux(frames: &FrameField, psi: &[f64]) -> Result<Vec<Vec3>> {
    let n = frames.len();
    if psi.len() != n {
        return Err(RodError::GridMismatch(format!(
            "twist array length {} does not match frame field length {}",
            psi.len(),
            n
        )));
    }
    if n < 2 {
        return Err(RodError::GridMismatch("need at least 2 samples".into()));
    }
    let s = frames.s();
    let dpsi = |i: usize| -> f64 {
        let lo = if i == 0 {
            0
        } else if i == n - 1 {
            n - 3
        } else {
            i - 1
        };
        let w = lagrange_derivative_weights(&s[lo..lo + 3], s[i]);
        (0..3).map(|j| w[j] * psi[lo + j]).sum()
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let d = frames.d[i];
        let norm = frames.r1[i].norm();
        let d_prime = (frames.r2[i] - d * d.dot(&frames.r2[i])) / norm;
        let k = d.cross(&d_prime);
        out.push(k + d * dpsi(i));
    }
    Ok(out)
}

/// Weights `w_j = ℓ′_j(x)` of the derivative of the Lagrange interpolant
/// through the nodes `xs`, so that `p′(x) = Σ w_j y_j`. Exact for
/// polynomials of degree below `xs.len()`.
fn lagrange_derivative_weights(xs: &[f64], x: f64) -> Vec<f64> {
    let n = xs.len();
    let mut w = vec![0.0; n];
    for j in 0..n {
        let denom: f64 = (0..n).filter(|&k| k != j).map(|k| xs[j] - xs[k]).product();
        let mut num = 0.0;
        for m in 0..n {
            if m == j {
                continue;
            }
            num += (0..n)
                .filter(|&k| k != j && k != m)
                .map(|k| x - xs[k])
                .product::<f64>();
        }
        w[j] = num / denom;
    }
    w
}

/// Induced torsion density of the one-shot drill-free map from `d₀`.
///
/// Returns `a·d′` per sample with `a = −(d₀ × d)/(1 + d₀·d)`. This is the
/// rate at which the frame `χ[d₀, d(s)]·F₀` twists about the tangent
/// relative to the relatively parallel frame; it vanishes only for curves
/// whose tangent stays on a great circle through `d₀`.
///
/// Errors with [`RodError::SingularDrillFreeMap`] if any sample comes
/// within [`ANTIPODAL_TOL`] of the antipode of `d₀`.
pub fn drill_free_torsion_density(curve: &SampledCurve, d0: &Director) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(curve.len());
    for i in 0..curve.len() {
        let d = curve.tangent(i);
        let c = d0.vector().dot(&d);
        if 1.0 + c < ANTIPODAL_TOL {
            return Err(RodError::SingularDrillFreeMap { dot: c });
        }
        let a = -d0.vector().cross(&d) / (1.0 + c);
        out.push(a.dot(&curve.tangent_derivative(i)));
    }
    Ok(out)
}

/// Accumulated correction angle `ψ(s) = −∫ a·d′ dμ` from the curve start
/// to `s`, by trapezoidal quadrature on the sample grid (with a partial
/// trapezoid for `s` between samples).
///
/// Drilling the one-shot drill-free frame by this angle reproduces the
/// relatively parallel frame; around a closed tangent loop it equals the
/// loop's holonomy, with sign positive for loops that enclose their
/// spherical area counterclockwise as seen from outside the sphere (i.e.
/// the frame is carried the same way the area form orients the boundary).
pub fn accumulated_correction_angle(curve: &SampledCurve, d0: &Director, s: f64) -> Result<f64> {
    let grid = curve.s();
    if s < grid[0] - 1e-12 || s > grid[grid.len() - 1] + 1e-12 {
        return Err(RodError::Validation(format!(
            "evaluation point {s} outside curve parameter range [{}, {}]",
            grid[0],
            grid[grid.len() - 1]
        )));
    }
    let density = drill_free_torsion_density(curve, d0)?;
    let mut acc = 0.0;
    for i in 0..grid.len() - 1 {
        if s <= grid[i] {
            break;
        }
        let right = s.min(grid[i + 1]);
        let h_full = grid[i + 1] - grid[i];
        let t = (right - grid[i]) / h_full;
        // Linear interpolation of the density over the partial interval.
        let f_right = density[i] * (1.0 - t) + density[i + 1] * t;
        acc += 0.5 * (density[i] + f_right) * (right - grid[i]);
    }
    Ok(-acc)
}

/// A vector field sampled on a uniform rectangular space-time grid,
/// stored row-major in time: `value(it, is) = values[it * ns + is]`.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    s: Vec<f64>,
    t: Vec<f64>,
    values: Vec<Vec3>,
}

impl SpaceTimeField {
    /// Validates grid monotonicity, uniform spacing (needed by the central
    /// differences downstream), at least 3 samples per axis, and shape.
    pub fn new(s: Vec<f64>, t: Vec<f64>, values: Vec<Vec3>) -> Result<Self> {
        for (name, axis) in [("s", &s), ("t", &t)] {
            if axis.len() < 3 {
                return Err(RodError::GridMismatch(format!(
                    "axis {name} needs at least 3 samples, got {}",
                    axis.len()
                )));
            }
            let h = axis[1] - axis[0];
            if h <= 0.0 {
                return Err(RodError::GridMismatch(format!(
                    "axis {name} is not increasing"
                )));
            }
            for w in axis.windows(2) {
                if ((w[1] - w[0]) - h).abs() > 1e-12 * h.abs().max(1.0) {
                    return Err(RodError::GridMismatch(format!(
                        "axis {name} is not uniformly spaced"
                    )));
                }
            }
        }
        if values.len() != s.len() * t.len() {
            return Err(RodError::GridMismatch(format!(
                "expected {} values, got {}",
                s.len() * t.len(),
                values.len()
            )));
        }
        Ok(Self { s, t, values })
    }

    /// Space axis.
    #[must_use]
    pub fn s(&self) -> &[f64] {
        &self.s
    }
    /// Time axis.
    #[must_use]
    pub fn t(&self) -> &[f64] {
        &self.t
    }
    /// Value at time index `it`, space index `is`.
    #[must_use]
    pub fn value(&self, it: usize, is: usize) -> Vec3 {
        self.values[it * self.s.len() + is]
    }
    /// Largest componentwise magnitude over the field.
    #[must_use]
    pub fn amax(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.amax()))
    }
}

/// Space-time compatibility residual `Ω̇ − W′ − Ω × W` by central
/// differences, evaluated on the interior of the shared grid.
///
/// `omega` is the convected strain rate field `Ω(s, t)` and `w` the
/// convected angular velocity `W(s, t)` of the same frame family; for any
/// kinematically consistent pair the residual vanishes to the truncation
/// order O(h²) of the differences. The returned field lives on the grid
/// with the first/last sample of each axis dropped.
pub fn compatibility_residual(
    omega: &SpaceTimeField,
    w: &SpaceTimeField,
) -> Result<SpaceTimeField> {
    let ns = omega.s.len();
    let nt = omega.t.len();
    if w.s.len() != ns || w.t.len() != nt {
        return Err(RodError::GridMismatch(format!(
            "field shapes differ: omega is {}x{}, w is {}x{}",
            nt,
            ns,
            w.t.len(),
            w.s.len()
        )));
    }
    let ds = omega.s[1] - omega.s[0];
    let dt = omega.t[1] - omega.t[0];
    let mut values = Vec::with_capacity((ns - 2) * (nt - 2));
    for it in 1..nt - 1 {
        for is in 1..ns - 1 {
            let omega_dot = (omega.value(it + 1, is) - omega.value(it - 1, is)) / (2.0 * dt);
            let w_prime = (w.value(it, is + 1) - w.value(it, is - 1)) / (2.0 * ds);
            let residual = omega_dot - w_prime - omega.value(it, is).cross(&w.value(it, is));
            values.push(residual);
        }
    }
    SpaceTimeField::new(
        omega.s[1..ns - 1].to_vec(),
        omega.t[1..nt - 1].to_vec(),
        values,
    )
}
