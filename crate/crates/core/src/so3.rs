//! Rotation kernels on SO(3) and the unit sphere.
//!
//! Everything in this module is exact differential geometry, no mechanics:
//!
//! * [`hat`] / [`axial`]: the isomorphism between R³ and skew matrices,
//!   `hat(w)·v = w × v`.
//! * [`exp_rodrigues`]: the closed-form exponential
//!   `exp[θ̂] = I + (sin θ/θ) θ̂ + ((1 − cos θ)/θ²) θ̂²`, with a Taylor
//!   fallback below `θ = 1e-4` where the closed-form coefficients lose
//!   digits to cancellation.
//! * [`dexp`] / [`dexp_inv`]: the (left) tangent map of the exponential,
//!   defined by `d/dε exp[θ̂(ε)] = hat(dexp(θ)·θ′) · exp[θ̂(ε)]`, and its
//!   inverse.
//! * [`log_rotation`]: inverse of the exponential, robust near the identity
//!   and near half-turns.
//! * [`chi_no_drill`]: the unique rotation mapping director `d₀` to `d`
//!   whose axis is orthogonal to both (a geodesic rotation on the sphere,
//!   i.e. zero drill about the directors). Singular for antipodal pairs;
//!   the singularity is an error, never regularized.
//! * [`composite_rotation`]: `exp[ψ d̂] · χ[d₀, d]`, the drill-angle /
//!   drill-free factorization of an arbitrary rotation taking `d₀` to `d`.
//! * [`split`]: the tangential/directorial decomposition
//!   `T = (T − d ⊗ d₀) + d ⊗ d₀` of a map sending `d₀` to `d`.
//!
//! Directors are unit vectors ([`Director`] renormalizes on construction);
//! [`Rotation`] validates orthonormality and orientation on construction
//! from raw matrices. Tolerances are fixed, documented constants.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Result, RodError};

/// 3-vector of `f64`.
pub type Vec3 = Vector3<f64>;
/// 3×3 matrix of `f64`.
pub type Mat3 = Matrix3<f64>;

/// Unit-norm tolerance for directors (renormalization target).
pub const UNIT_TOL: f64 = 1e-12;
/// Orthonormality / determinant tolerance for validated rotations.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;
/// Skew-symmetry tolerance for [`axial`].
pub const SKEW_TOL: f64 = 1e-10;
/// Angle below which the exponential/tangent maps switch to Taylor series.
pub const SERIES_THRESHOLD: f64 = 1e-4;
/// `1 + d₀·d` below this is treated as antipodal and rejected.
pub const ANTIPODAL_TOL: f64 = 1e-8;
/// Compatibility tolerance for [`split`]: `|T d₀ − d|` must not exceed this.
pub const SPLIT_TOL: f64 = 1e-10;

/// Skew-symmetric matrix of `w`: `hat(w)·v = w × v`.
#[must_use]
pub fn hat(w: &Vec3) -> Mat3 {
    Mat3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Axial vector of a skew-symmetric matrix.
///
/// Errors with [`RodError::NotSkewSymmetric`] if any entry of `W + Wᵀ`
/// exceeds [`SKEW_TOL`]; the axial vector of a non-skew matrix is not
/// well defined and silently symmetrizing would hide modeling bugs.
pub fn axial(w: &Mat3) -> Result<Vec3> {
    let sym = w + w.transpose();
    let asymmetry = sym.amax();
    if !asymmetry.is_finite() || asymmetry > SKEW_TOL {
        return Err(RodError::NotSkewSymmetric { asymmetry });
    }
    Ok(Vec3::new(
        0.5 * (w[(2, 1)] - w[(1, 2)]),
        0.5 * (w[(0, 2)] - w[(2, 0)]),
        0.5 * (w[(1, 0)] - w[(0, 1)]),
    ))
}

/// A unit vector on S², renormalized on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Director(Vec3);

impl Director {
    /// Normalizes `v` to unit length.
    ///
    /// Errors with [`RodError::ZeroVector`] if `|v|` is zero or non-finite;
    /// there is no meaningful direction to return.
    pub fn new(v: Vec3) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(RodError::ZeroVector { norm });
        }
        Ok(Self(v / norm))
    }

    /// The unit vector.
    #[must_use]
    pub fn vector(&self) -> Vec3 {
        self.0
    }

    /// First standard basis director.
    #[must_use]
    pub fn e1() -> Self {
        Self(Vec3::x())
    }

    /// Second standard basis director.
    #[must_use]
    pub fn e2() -> Self {
        Self(Vec3::y())
    }

    /// Third standard basis director.
    #[must_use]
    pub fn e3() -> Self {
        Self(Vec3::z())
    }
}

/// A proper rotation matrix, validated on construction from raw data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation(Mat3);

impl Rotation {
    /// Identity rotation.
    #[must_use]
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Validates `m` as a proper rotation: `|MᵀM − I| ≤` [`ORTHONORMALITY_TOL`]
    /// entrywise and `det M > 0`.
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        let defect = (m.transpose() * m - Mat3::identity()).amax();
        let det = m.determinant();
        if !defect.is_finite() || defect > ORTHONORMALITY_TOL || det <= 0.0 {
            return Err(RodError::InvalidRotation {
                orthogonality_defect: defect,
                det,
            });
        }
        Ok(Self(m))
    }

    /// Wraps a matrix known to be a rotation by construction (exponentials,
    /// drill-free maps, products of rotations). Crate-internal so the public
    /// invariant cannot be broken from outside.
    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        Self(m)
    }

    /// The underlying matrix.
    #[must_use]
    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// Applies the rotation to a vector.
    #[must_use]
    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Applies the inverse rotation to a vector.
    #[must_use]
    pub fn apply_inverse(&self, v: &Vec3) -> Vec3 {
        self.0.transpose() * v
    }

    /// Inverse (= transpose) rotation.
    #[must_use]
    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    /// `i`-th column (the image of the `i`-th basis vector), `i ∈ {0,1,2}`.
    #[must_use]
    pub fn column(&self, i: usize) -> Vec3 {
        self.0.column(i).into()
    }

    /// Re-orthonormalizes via modified Gram-Schmidt. Used to keep long
    /// products of rotations within the orthonormality tolerance; the
    /// correction is O(accumulated roundoff), not a projection of
    /// arbitrary matrices.
    #[must_use]
    pub fn renormalized(&self) -> Self {
        let mut c0: Vec3 = self.0.column(0).into();
        c0 /= c0.norm();
        let mut c1: Vec3 = self.0.column(1).into();
        c1 -= c0 * c0.dot(&c1);
        c1 /= c1.norm();
        let c2 = c0.cross(&c1);
        Self(Mat3::from_columns(&[c0, c1, c2]))
    }
}

impl std::ops::Mul for &Rotation {
    type Output = Rotation;
    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

/// Rodrigues coefficients `(sin θ/θ, (1 − cos θ)/θ²)` with Taylor fallback.
fn rodrigues_coefficients(theta: f64) -> (f64, f64) {
    if theta < SERIES_THRESHOLD {
        let t = theta * theta;
        (
            1.0 - t / 6.0 * (1.0 - t / 20.0),
            0.5 * (1.0 - t / 12.0 * (1.0 - t / 30.0)),
        )
    } else {
        let half = 0.5 * theta;
        let sh = half.sin() / half;
        (theta.sin() / theta, 0.5 * sh * sh)
    }
}

/// Rotation exponential by the Rodrigues formula.
///
/// `exp[θ̂] = I + (sin θ/θ) θ̂ + ((1 − cos θ)/θ²) θ̂²` with `θ = |theta|`.
/// Below [`SERIES_THRESHOLD`] the two coefficients are evaluated by Taylor
/// series; at the threshold the branches agree to machine precision.
#[must_use]
pub fn exp_rodrigues(theta: &Vec3) -> Rotation {
    let angle = theta.norm();
    let (a, b) = rodrigues_coefficients(angle);
    let th = hat(theta);
    Rotation(Mat3::identity() + th * a + th * th * b)
}

/// Left tangent map of the exponential.
///
/// Defined by `d/dε exp[θ̂(ε)] = hat(dexp(θ(ε))·θ′(ε)) · exp[θ̂(ε)]`.
/// Closed form `I + ((1 − cos θ)/θ²) θ̂ + ((θ − sin θ)/θ³) θ̂²`, series
/// below [`SERIES_THRESHOLD`]. Satisfies `dexp(θ)·θ = θ`.
#[must_use]
pub fn dexp(theta: &Vec3) -> Mat3 {
    let angle = theta.norm();
    let (b, c) = if angle < SERIES_THRESHOLD {
        let t = angle * angle;
        (
            0.5 * (1.0 - t / 12.0 * (1.0 - t / 30.0)),
            (1.0 - t / 20.0 * (1.0 - t / 42.0)) / 6.0,
        )
    } else {
        let half = 0.5 * angle;
        let sh = half.sin() / half;
        (
            0.5 * sh * sh,
            (angle - angle.sin()) / (angle * angle * angle),
        )
    };
    let th = hat(theta);
    Mat3::identity() + th * b + th * th * c
}

/// Inverse of [`dexp`].
///
/// Closed form `I − θ̂/2 + ((1 − (θ/2)·cot(θ/2))/θ²) θ̂²`, series below
/// [`SERIES_THRESHOLD`]. Only valid for `θ < 2π`, which callers guarantee
/// (it is applied to logarithms, whose norm never exceeds π).
#[must_use]
pub fn dexp_inv(theta: &Vec3) -> Mat3 {
    let angle = theta.norm();
    let d = if angle < SERIES_THRESHOLD {
        let t = angle * angle;
        (1.0 + t / 60.0 * (1.0 + t / 42.0)) / 12.0
    } else {
        let half = 0.5 * angle;
        (1.0 - half * half.cos() / half.sin()) / (angle * angle)
    };
    let th = hat(theta);
    Mat3::identity() - th * 0.5 + th * th * d
}

/// Rotation logarithm: the rotation vector `θ` with `exp[θ̂] = R`, `|θ| ≤ π`.
///
/// Uses `atan2(|skew part|, (tr − 1)/2)` for the angle. Near half-turns the
/// axis is recovered from the symmetric part (the skew part degenerates),
/// with its sign fixed by the skew part where it is nonzero.
#[must_use]
pub fn log_rotation(r: &Rotation) -> Vec3 {
    let m = r.matrix();
    let v = Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    );
    let sin_theta = v.norm();
    let cos_theta = 0.5 * (m.trace() - 1.0);
    let theta = sin_theta.atan2(cos_theta);

    if theta < SERIES_THRESHOLD {
        // θ/sin θ = 1 + θ²/6 + 7θ⁴/360 + …
        let t = theta * theta;
        return v * (1.0 + t / 6.0 + 7.0 * t * t / 360.0);
    }
    if cos_theta > -0.9 {
        return v * (theta / sin_theta);
    }
    // Near a half-turn: R + Rᵀ = 2 cos θ I + 2(1 − cos θ) n nᵀ.
    let s = (m + m.transpose()) * 0.5 - Mat3::identity() * cos_theta;
    let scale = 1.0 - cos_theta;
    let diag = Vec3::new(s[(0, 0)], s[(1, 1)], s[(2, 2)]) / scale;
    let k = diag.imax();
    let mut n = Vec3::new(s[(k, 0)], s[(k, 1)], s[(k, 2)]) / (scale * diag[k].sqrt());
    if n.dot(&v) < 0.0 {
        n = -n;
    }
    n * theta
}

/// Drill-free rotation mapping `d₀` to `d`.
///
/// `χ[d₀, d] = (d₀·d) I + hat(d₀ × d) + (d₀ × d) ⊗ (d₀ × d)/(1 + d₀·d)`.
/// This is the unique rotation taking `d₀` to `d` whose axis is orthogonal
/// to both directors, i.e. the parallel transport of the tangent plane along
/// the great-circle arc from `d₀` to `d`.
///
/// Errors with [`RodError::SingularDrillFreeMap`] when
/// `1 + d₀·d <` [`ANTIPODAL_TOL`]: for antipodal directors every great
/// circle connects them and no distinguished map exists. The singularity is
/// genuine and is reported, never smoothed over.
pub fn chi_no_drill(d0: &Director, d: &Director) -> Result<Rotation> {
    let c = d0.vector().dot(&d.vector());
    if 1.0 + c < ANTIPODAL_TOL {
        return Err(RodError::SingularDrillFreeMap { dot: c });
    }
    let gamma = d0.vector().cross(&d.vector());
    let m = Mat3::identity() * c + hat(&gamma) + gamma * gamma.transpose() / (1.0 + c);
    Ok(Rotation::from_matrix_unchecked(m))
}

/// Composite rotation `exp[ψ d̂] · χ[d₀, d]`: drill by `ψ` about the target
/// director after the drill-free map. Equals `χ[d₀, d] · exp[ψ d̂₀]` (drill
/// about the source first); the factors commute through `χ`.
pub fn composite_rotation(psi: f64, d0: &Director, d: &Director) -> Result<Rotation> {
    let chi = chi_no_drill(d0, d)?;
    let drill = exp_rodrigues(&(d.vector() * psi));
    Ok(drill * chi)
}

/// Tangential/directorial split of a map sending `d₀` to `d`.
#[derive(Debug, Clone, Copy)]
pub struct RotationSplit {
    /// `T − d ⊗ d₀`: kills `d₀`, maps the tangent plane at `d₀` to the
    /// tangent plane at `d`.
    pub tangential: Mat3,
    /// `d ⊗ d₀`: rank-one director part.
    pub directorial: Mat3,
}

impl RotationSplit {
    /// Sum of the two parts; reproduces the split operator exactly.
    #[must_use]
    pub fn recompose(&self) -> Mat3 {
        self.tangential + self.directorial
    }
}

/// Splits `T` into tangential and directorial parts relative to `(d₀, d)`.
///
/// Errors with [`RodError::NotASplittingMap`] if `|T d₀ − d| >` [`SPLIT_TOL`]:
/// the decomposition is only meaningful for operators that actually map the
/// source director to the target director.
pub fn split(t: &Rotation, d0: &Director, d: &Director) -> Result<RotationSplit> {
    let defect = (t.apply(&d0.vector()) - d.vector()).norm();
    if defect > SPLIT_TOL {
        return Err(RodError::NotASplittingMap { defect });
    }
    let directorial = d.vector() * d0.vector().transpose();
    Ok(RotationSplit {
        tangential: t.matrix() - directorial,
        directorial,
    })
}

/// Rotation angle of `R` restricted to the E₁–E₂ plane, about E₃.
///
/// For `R = exp[φ Ê₃]` this returns `φ ∈ (−π, π]`. For rotations that move
/// E₃ slightly it returns the angle of the planar part, which is smooth as
/// long as the in-plane block keeps positive trace. Used to measure relative
/// drill between cross-section frames sharing (nearly) the same director.
#[must_use]
pub fn drill_angle(r: &Rotation) -> f64 {
    let m = r.matrix();
    (m[(1, 0)] - m[(0, 1)]).atan2(m[(0, 0)] + m[(1, 1)])
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

    fn random_director(rng: &mut ChaCha8Rng) -> Director {
        loop {
            let v = random_vec3(rng, 1.0);
            if v.norm() > 1e-3 {
                return Director::new(v).unwrap();
            }
        }
    }

    #[test]
    fn hat_matches_cross_product_on_fixed_example() {
        let w = Vec3::new(1.0, 2.0, 3.0);
        let v = Vec3::new(4.0, 5.0, 6.0);
        let expected = Vec3::new(-3.0, 6.0, -3.0); // (1,2,3) × (4,5,6), by hand
        assert_relative_eq!(hat(&w) * v, expected, epsilon = 0.0);
        assert_relative_eq!(w.cross(&v), expected, epsilon = 0.0);
    }

    #[test]
    fn axial_inverts_hat_and_rejects_non_skew() {
        let w = Vec3::new(-0.3, 0.7, 2.1);
        assert_relative_eq!(axial(&hat(&w)).unwrap(), w, epsilon = 0.0);

        let mut m = hat(&w);
        m[(0, 1)] += 1e-6;
        match axial(&m) {
            Err(RodError::NotSkewSymmetric { asymmetry }) => {
                assert!(asymmetry > 9e-7);
            }
            other => panic!("expected NotSkewSymmetric, got {other:?}"),
        }
    }

    #[test]
    fn exp_of_half_turn_about_x() {
        let r = exp_rodrigues(&Vec3::new(std::f64::consts::PI, 0.0, 0.0));
        let expected = Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0));
        assert_relative_eq!(*r.matrix(), expected, epsilon = 1e-12);
    }

    #[test]
    fn exp_quarter_turn_about_z_sends_e1_to_e2() {
        let r = exp_rodrigues(&Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        assert_relative_eq!(r.apply(&Vec3::x()), Vec3::y(), epsilon = 1e-12);
    }

    #[test]
    fn exp_series_and_closed_form_agree_at_threshold() {
        for &angle in &[0.5e-4, 0.99e-4, 1.01e-4, 2e-4] {
            let axis = Vec3::new(2.0, -1.0, 0.5).normalize();
            let theta = axis * angle;
            let (a_series, b_series) = {
                let t = angle * angle;
                (
                    1.0 - t / 6.0 * (1.0 - t / 20.0),
                    0.5 * (1.0 - t / 12.0 * (1.0 - t / 30.0)),
                )
            };
            let half = 0.5 * angle;
            let sh = half.sin() / half;
            let (a_closed, b_closed) = (angle.sin() / angle, 0.5 * sh * sh);
            assert_relative_eq!(a_series, a_closed, max_relative = 1e-14);
            assert_relative_eq!(b_series, b_closed, max_relative = 1e-14);
            let r = exp_rodrigues(&theta);
            assert_relative_eq!(
                (r.matrix().transpose() * r.matrix()),
                Mat3::identity(),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn exp_produces_proper_rotations_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..1000 {
            let theta = random_vec3(&mut rng, 3.0);
            let r = exp_rodrigues(&theta);
            let defect = (r.matrix().transpose() * r.matrix() - Mat3::identity()).amax();
            assert!(defect < 1e-12, "orthonormality defect {defect}");
            assert_relative_eq!(r.matrix().determinant(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dexp_matches_finite_differences_of_exp() {
        // Oracle: central finite differences of ε ↦ exp[θ̂ + ε δ̂] at ε = 0,
        // compared through the defining identity
        // d/dε exp = hat(dexp(θ)·δ) · exp[θ̂].
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let eps = 1e-6;
        for _ in 0..100 {
            let theta = random_vec3(&mut rng, 2.5);
            let delta = random_vec3(&mut rng, 1.0);
            let plus = exp_rodrigues(&(theta + delta * eps));
            let minus = exp_rodrigues(&(theta - delta * eps));
            let fd = (plus.matrix() - minus.matrix()) / (2.0 * eps);
            let analytic = hat(&(dexp(&theta) * delta)) * exp_rodrigues(&theta).matrix();
            let scale = analytic.amax().max(1.0);
            assert!(
                (fd - analytic).amax() / scale < 1e-6,
                "dexp identity violated: {:e}",
                (fd - analytic).amax() / scale
            );
        }
    }

    #[test]
    fn dexp_fixes_its_own_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        for _ in 0..100 {
            let theta = random_vec3(&mut rng, 3.0);
            assert_relative_eq!(dexp(&theta) * theta, theta, epsilon = 1e-12);
        }
    }

    #[test]
    fn dexp_inv_is_the_inverse_of_dexp() {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        for _ in 0..100 {
            let theta = random_vec3(&mut rng, 2.9);
            let product = dexp_inv(&theta) * dexp(&theta);
            assert_relative_eq!(product, Mat3::identity(), epsilon = 1e-10);
        }
        // Series branch.
        let tiny = Vec3::new(3e-5, -2e-5, 1e-5);
        assert_relative_eq!(
            dexp_inv(&tiny) * dexp(&tiny),
            Mat3::identity(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn log_inverts_exp_over_the_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(505);
        for _ in 0..200 {
            let angle = rng.gen_range(1e-8..std::f64::consts::PI - 1e-6);
            let axis = random_director(&mut rng).vector();
            let theta = axis * angle;
            let back = log_rotation(&exp_rodrigues(&theta));
            assert_relative_eq!(back, theta, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn log_is_robust_near_half_turns() {
        for &angle in &[
            std::f64::consts::PI - 1e-5,
            std::f64::consts::PI - 1e-9,
            std::f64::consts::PI,
        ] {
            let axis = Vec3::new(1.0, 2.0, -2.0).normalize();
            let theta = axis * angle;
            let back = log_rotation(&exp_rodrigues(&theta));
            // Axis sign is ambiguous exactly at π.
            let err = (back - theta).norm().min((back + theta).norm());
            assert!(err < 1e-6, "log near half-turn error {err}");
        }
    }

    #[test]
    fn chi_on_basis_directors_has_frozen_matrix() {
        // χ[E₃, E₁] with c = 0, γ = E₂: I·0 + hat(E₂) + E₂⊗E₂.
        let chi = chi_no_drill(&Director::e3(), &Director::e1()).unwrap();
        let expected = Mat3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0);
        assert_relative_eq!(*chi.matrix(), expected, epsilon = 1e-15);
        assert_relative_eq!(chi.apply(&Vec3::z()), Vec3::x(), epsilon = 1e-15);
        assert_relative_eq!(chi.apply(&Vec3::x()), -Vec3::z(), epsilon = 1e-15);
    }

    #[test]
    fn chi_is_identity_for_equal_directors() {
        let d = Director::new(Vec3::new(0.3, -0.4, 0.8)).unwrap();
        let chi = chi_no_drill(&d, &d).unwrap();
        assert_relative_eq!(*chi.matrix(), Mat3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn chi_maps_source_to_target_and_has_orthogonal_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(606);
        for _ in 0..1000 {
            let d0 = random_director(&mut rng);
            let d = random_director(&mut rng);
            if 1.0 + d0.vector().dot(&d.vector()) < 1e-3 {
                continue;
            }
            let chi = chi_no_drill(&d0, &d).unwrap();
            assert_relative_eq!(chi.apply(&d0.vector()), d.vector(), epsilon = 1e-12);
            let defect = (chi.matrix().transpose() * chi.matrix() - Mat3::identity()).amax();
            assert!(defect < 1e-12);
            // Zero drill: the rotation axis lies in the tangent planes, i.e.
            // it is orthogonal to both directors.
            let axis = log_rotation(&chi);
            if axis.norm() > 1e-8 {
                assert!(axis.dot(&d0.vector()).abs() < 1e-9 * axis.norm());
                assert!(axis.dot(&d.vector()).abs() < 1e-9 * axis.norm());
            }
        }
    }

    #[test]
    fn chi_rejects_antipodal_directors() {
        let d = Director::e3();
        let anti = Director::new(-Vec3::z()).unwrap();
        match chi_no_drill(&d, &anti) {
            Err(RodError::SingularDrillFreeMap { dot }) => assert!(dot < -0.999),
            other => panic!("expected SingularDrillFreeMap, got {other:?}"),
        }
        // Near-antipodal within the tolerance is rejected too.
        let nearly = Director::new(Vec3::new(1e-5, 0.0, -1.0)).unwrap();
        assert!(1.0 + d.vector().dot(&nearly.vector()) < ANTIPODAL_TOL);
        assert!(chi_no_drill(&d, &nearly).is_err());
    }

    #[test]
    fn composite_rotation_factors_commute_through_chi() {
        let mut rng = ChaCha8Rng::seed_from_u64(707);
        for _ in 0..200 {
            let d0 = random_director(&mut rng);
            let d = random_director(&mut rng);
            if 1.0 + d0.vector().dot(&d.vector()) < 1e-3 {
                continue;
            }
            let psi: f64 = rng.gen_range(-3.0..3.0);
            let left = composite_rotation(psi, &d0, &d).unwrap();
            let chi = chi_no_drill(&d0, &d).unwrap();
            let right = chi * exp_rodrigues(&(d0.vector() * psi));
            assert_relative_eq!(*left.matrix(), *right.matrix(), epsilon = 1e-13);
            assert_relative_eq!(left.apply(&d0.vector()), d.vector(), epsilon = 1e-12);
        }
    }

    #[test]
    fn split_recomposes_and_annihilates_correctly() {
        let mut rng = ChaCha8Rng::seed_from_u64(808);
        for _ in 0..1000 {
            let d0 = random_director(&mut rng);
            let d = random_director(&mut rng);
            if 1.0 + d0.vector().dot(&d.vector()) < 1e-3 {
                continue;
            }
            let psi: f64 = rng.gen_range(-3.0..3.0);
            let t = composite_rotation(psi, &d0, &d).unwrap();
            let parts = split(&t, &d0, &d).unwrap();
            assert_relative_eq!(parts.recompose(), *t.matrix(), epsilon = 1e-12);
            // Tangential part kills the source director; its transpose kills
            // the target. Directorial part carries d₀ ↦ d alone.
            assert!((parts.tangential * d0.vector()).norm() < 1e-12);
            assert!((parts.tangential.transpose() * d.vector()).norm() < 1e-12);
            assert_relative_eq!(parts.directorial * d0.vector(), d.vector(), epsilon = 1e-12);
        }
    }

    #[test]
    fn split_rejects_maps_that_miss_the_target() {
        let t = exp_rodrigues(&Vec3::new(0.4, -0.2, 0.9));
        let d0 = Director::e3();
        let wrong = Director::e1();
        if (t.apply(&d0.vector()) - wrong.vector()).norm() > SPLIT_TOL {
            match split(&t, &d0, &wrong) {
                Err(RodError::NotASplittingMap { defect }) => assert!(defect > SPLIT_TOL),
                other => panic!("expected NotASplittingMap, got {other:?}"),
            }
        }
    }

    #[test]
    fn rotation_from_matrix_validates() {
        assert!(Rotation::from_matrix(Mat3::identity() * 1.001).is_err());
        let reflection = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(Rotation::from_matrix(reflection).is_err());
        let r = exp_rodrigues(&Vec3::new(0.1, 0.2, 0.3));
        assert!(Rotation::from_matrix(*r.matrix()).is_ok());
    }

    #[test]
    fn director_renormalizes_and_rejects_zero() {
        let d = Director::new(Vec3::new(0.0, 3.0, 4.0)).unwrap();
        assert_relative_eq!(d.vector().norm(), 1.0, epsilon = 1e-15);
        assert!(Director::new(Vec3::zeros()).is_err());
    }

    #[test]
    fn drill_angle_reads_rotations_about_e3() {
        for &phi in &[-2.5, -0.3, 0.0, 0.7, 3.0] {
            let r = exp_rodrigues(&Vec3::new(0.0, 0.0, phi));
            assert_relative_eq!(drill_angle(&r), phi, epsilon = 1e-12);
        }
    }
}
