//! Constitutive layer: strain measures, quadratic stored energy, stress
//! resultants, section inertia, kinetic energy densities and momenta.
//!
//! Two strain routes are provided. [`strains_general`] takes a full
//! centerline/rotation state `(r′, Λ, Λ′)` and returns every spatial and
//! convected strain measure of the framed curve. [`strains_ti`] is the
//! reduced route for transversely isotropic sections, where the energy only
//! needs `(|r′| − 1, |d′|, ψ′)` and no cross-section frame at all.
//!
//! Conventions: `e₃ = Λ E₃` is the cross-section normal (equal to the unit
//! tangent when the rod is unshearable), bending strains live in the plane
//! orthogonal to it, and all convected quantities are componentwise
//! constant pullbacks by `Λᵀ`.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::so3::{Mat3, Rotation, Vec3};
use crate::{Result, RodError};

/// Tolerance for the skewness check on `Λ′Λᵀ` in [`strains_general`].
pub const STRAIN_SKEW_TOL: f64 = 1e-8;

/// Quadratic constitutive law for a Kirchhoff rod: axial, bending, and
/// torsional stiffnesses. Stiffnesses are per unit reference arc length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialLaw {
    /// Axial stiffness `EA` (N).
    pub ea: f64,
    /// Principal bending stiffnesses `EI₁`, `EI₂` (N·m²).
    pub ei: [f64; 2],
    /// Torsional stiffness `GJ` (N·m²).
    pub gj: f64,
}

impl MaterialLaw {
    /// Builds a law, validating strict positivity of every stiffness.
    pub fn new(ea: f64, ei1: f64, ei2: f64, gj: f64) -> Result<Self> {
        let law = Self {
            ea,
            ei: [ei1, ei2],
            gj,
        };
        law.validate()?;
        Ok(law)
    }

    /// Convenience constructor for equal bending stiffnesses.
    pub fn transversely_isotropic(ea: f64, ei: f64, gj: f64) -> Result<Self> {
        Self::new(ea, ei, ei, gj)
    }

    /// Checks the positivity invariants (useful after deserialization).
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("EA", self.ea),
            ("EI1", self.ei[0]),
            ("EI2", self.ei[1]),
            ("GJ", self.gj),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(RodError::Validation(format!(
                    "stiffness {name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Whether the bending response is isotropic in the cross-section plane.
    #[must_use]
    pub fn is_transversely_isotropic(&self) -> bool {
        self.ei[0] == self.ei[1]
    }

    /// The single bending stiffness of a transversely isotropic law.
    pub fn bending_isotropic(&self) -> Result<f64> {
        if self.is_transversely_isotropic() {
            Ok(self.ei[0])
        } else {
            Err(RodError::Validation(format!(
                "bending stiffnesses differ (EI1 = {}, EI2 = {}); this path needs a transversely isotropic section",
                self.ei[0], self.ei[1]
            )))
        }
    }
}

/// Inertia of the cross section per unit reference arc length, stored in
/// convected (cross-section) components where it is constant in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionInertia {
    /// Mass per unit length `Aρ` (kg/m).
    pub a_rho: f64,
    /// In-plane rotary inertia block on `span(E₁, E₂)` (kg·m), SPD.
    pub i_perp: Matrix2<f64>,
    /// Polar (axial) rotary inertia (kg·m).
    pub i_par: f64,
}

impl SectionInertia {
    /// Builds a section inertia, validating `Aρ > 0`, SPD in-plane block,
    /// and positive polar inertia.
    pub fn new(a_rho: f64, i_perp: Matrix2<f64>, i_par: f64) -> Result<Self> {
        let section = Self {
            a_rho,
            i_perp,
            i_par,
        };
        section.validate()?;
        Ok(section)
    }

    /// Builds the inertia of a round (transversely isotropic) section.
    pub fn round(a_rho: f64, i_perp: f64, i_par: f64) -> Result<Self> {
        Self::new(a_rho, Matrix2::identity() * i_perp, i_par)
    }

    /// Checks the positivity/symmetry invariants.
    pub fn validate(&self) -> Result<()> {
        if !(self.a_rho.is_finite() && self.a_rho > 0.0) {
            return Err(RodError::Validation(format!(
                "mass per length must be finite and positive, got {}",
                self.a_rho
            )));
        }
        if !(self.i_par.is_finite() && self.i_par > 0.0) {
            return Err(RodError::Validation(format!(
                "polar inertia must be finite and positive, got {}",
                self.i_par
            )));
        }
        let m = &self.i_perp;
        let scale = m.amax().max(1e-300);
        if (m[(0, 1)] - m[(1, 0)]).abs() > 1e-12 * scale {
            return Err(RodError::Validation(
                "in-plane inertia block is not symmetric".into(),
            ));
        }
        // SPD for a symmetric 2x2: positive trace and determinant.
        if !(m.trace() > 0.0 && m.determinant() > 0.0) {
            return Err(RodError::Validation(
                "in-plane inertia block is not positive definite".into(),
            ));
        }
        Ok(())
    }

    /// Whether the in-plane block is a positive multiple of the identity.
    #[must_use]
    pub fn is_transversely_isotropic(&self) -> bool {
        let m = &self.i_perp;
        let scale = m.amax();
        (m[(0, 0)] - m[(1, 1)]).abs() <= 1e-14 * scale
            && m[(0, 1)].abs() <= 1e-14 * scale
            && m[(1, 0)].abs() <= 1e-14 * scale
    }

    /// The scalar in-plane inertia of a transversely isotropic section.
    pub fn transverse_scalar(&self) -> Result<f64> {
        if self.is_transversely_isotropic() {
            Ok(self.i_perp[(0, 0)])
        } else {
            Err(RodError::Validation(
                "in-plane inertia is anisotropic; this path needs a round section".into(),
            ))
        }
    }

    /// Full convected inertia tensor `I_ρ = I_⊥ + I_∥ E₃⊗E₃`.
    #[must_use]
    pub fn convected_tensor(&self) -> Mat3 {
        let mut m = Mat3::zeros();
        m[(0, 0)] = self.i_perp[(0, 0)];
        m[(0, 1)] = self.i_perp[(0, 1)];
        m[(1, 0)] = self.i_perp[(1, 0)];
        m[(1, 1)] = self.i_perp[(1, 1)];
        m[(2, 2)] = self.i_par;
        m
    }

    /// Spatial inertia `i_ρ = Λ I_ρ Λᵀ` at orientation `Λ`.
    #[must_use]
    pub fn spatial_tensor(&self, lambda: &Rotation) -> Mat3 {
        lambda.matrix() * self.convected_tensor() * lambda.matrix().transpose()
    }
}

/// Every strain measure of a framed curve state, spatial and convected.
///
/// The bending strains satisfy `k·E₃ = 0` and `κ·e₃ = 0` by construction,
/// and the shear strain `Σ` vanishes exactly on Kirchhoff-admissible states
/// (where `e₃` is the unit tangent).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainState {
    /// Axial strain `ε = r′·e₃ − 1`.
    pub eps: f64,
    /// Convected shear strain `Σ = Λᵀ(γ − ε e₃)`, third component zero.
    pub sigma: Vec3,
    /// Convected bending strain `K = Ω − (Ω·E₃)E₃`.
    pub k: Vec3,
    /// Torsional strain `τ = Ω·E₃ = e₂·e₁′`.
    pub tau: f64,
    /// Spatial bending strain `κ = Λ K`.
    pub kappa: Vec3,
    /// Spatial total rotational strain `ω = axial(Λ′Λᵀ)`.
    pub omega: Vec3,
    /// Convected total rotational strain `Ω = Λᵀ ω`.
    pub omega_convected: Vec3,
    /// Spatial translational strain `γ = r′ − e₃`.
    pub gamma: Vec3,
}

/// Stress resultants conjugate to the strain measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressResultants {
    /// Axial force `n_∥ = EA ε e₃` (N).
    pub n_par: Vec3,
    /// Transverse reaction force (N). Not constitutive: it is the Lagrange
    /// multiplier of the Kirchhoff constraint, so the strain-to-stress map
    /// leaves it zero and equilibrium solvers fill it in.
    pub n_perp: Vec3,
    /// Bending moment `m_⊥ = Λ(EI₁K₁, EI₂K₂, 0)` (N·m), orthogonal to `e₃`.
    pub m_perp: Vec3,
    /// Torsional moment `m_∥ = GJ τ` (N·m).
    pub m_par: f64,
}

/// Momentum densities conjugate to the velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Momenta {
    /// Linear momentum `p = Aρ v` (kg·m/s per length).
    pub p: Vec3,
    /// In-plane angular momentum `π_⊥ = I_⊥ w_⊥` (kg·m²/s per length),
    /// in the same components as the supplied angular velocity.
    pub pi_perp: Vec3,
    /// Axial angular momentum `π_∥ = I_∥ w_∥` (kg·m²/s per length).
    pub pi_par: f64,
}

/// Selects the rotational part of the kinetic energy density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KineticModel {
    /// Exact quadratic form `½ W·I_ρ W` in the full angular velocity.
    Full,
    /// Transversely isotropic approximation `½ i_⊥|W_⊥|² + ½ i_∥ ψ̇²` with
    /// the twist rate in place of the axial angular velocity. Requires a
    /// round section; restores a well-posed evolution for the
    /// tangent-plus-twist parametrization at the cost of exact spin
    /// kinematics.
    Regularized,
}

/// Full strain state of a centerline/rotation pair.
///
/// `lambda_prime` is the parameter derivative of the rotation matrix;
/// `Λ′Λᵀ` must be skew within [`STRAIN_SKEW_TOL`] (it is exactly skew for
/// any differentiable rotation family, so the tolerance only absorbs
/// numerical error in the caller's derivative).
pub fn strains_general(r1: &Vec3, lambda: &Rotation, lambda_prime: &Mat3) -> Result<StrainState> {
    let m = lambda_prime * lambda.matrix().transpose();
    let asymmetry = (m + m.transpose()).amax();
    if asymmetry > STRAIN_SKEW_TOL {
        return Err(RodError::NotSkewSymmetric { asymmetry });
    }
    let omega = Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    );
    let e3 = lambda.column(2);
    let eps = r1.dot(&e3) - 1.0;
    let gamma = r1 - e3;
    let omega_convected = lambda.apply_inverse(&omega);
    let tau = omega_convected.z;
    let k = Vec3::new(omega_convected.x, omega_convected.y, 0.0);
    let kappa = lambda.apply(&k);
    let sigma = lambda.apply_inverse(&(gamma - e3 * eps));
    Ok(StrainState {
        eps,
        sigma,
        k,
        tau,
        kappa,
        omega,
        omega_convected,
        gamma,
    })
}

/// Reduced strain measures `(ε, |K|, τ)` of the tangent-plus-twist
/// parametrization: axial strain `|r′| − 1`, bending strain magnitude
/// `|d′| = |(I − d⊗d) r″| / |r′|`, and twist rate `ψ′`.
pub fn strains_ti(r1: &Vec3, r2: &Vec3, psi_prime: f64) -> Result<(f64, f64, f64)> {
    let n = r1.norm();
    if !n.is_finite() || n == 0.0 {
        return Err(RodError::ZeroVector { norm: n });
    }
    let d = r1 / n;
    let d_prime = (r2 - d * d.dot(r2)) / n;
    Ok((n - 1.0, d_prime.norm(), psi_prime))
}

/// Quadratic stored energy density
/// `U = ½EA ε² + ½EI₁K₁² + ½EI₂K₂² + ½GJ τ²`.
///
/// Shear does not contribute: it is kinematically excluded, not penalized.
#[must_use]
pub fn stored_energy_density(strains: &StrainState, law: &MaterialLaw) -> f64 {
    0.5 * (law.ea * strains.eps * strains.eps
        + law.ei[0] * strains.k.x * strains.k.x
        + law.ei[1] * strains.k.y * strains.k.y
        + law.gj * strains.tau * strains.tau)
}

/// Stored energy density of the reduced strain route,
/// `U = ½EA ε² + ½EI |K|² + ½GJ τ²`. Requires equal bending stiffnesses
/// (only the magnitude of the bending strain is known here).
pub fn stored_energy_density_ti(eps: f64, abs_k: f64, tau: f64, law: &MaterialLaw) -> Result<f64> {
    let ei = law.bending_isotropic()?;
    Ok(0.5 * (law.ea * eps * eps + ei * abs_k * abs_k + law.gj * tau * tau))
}

/// Constitutive stress resultants at a strain state. The transverse
/// reaction `n_⊥` is left zero (see [`StressResultants::n_perp`]).
#[must_use]
pub fn stress_resultants(
    strains: &StrainState,
    law: &MaterialLaw,
    lambda: &Rotation,
) -> StressResultants {
    let e3 = lambda.column(2);
    let moment_convected = Vec3::new(law.ei[0] * strains.k.x, law.ei[1] * strains.k.y, 0.0);
    StressResultants {
        n_par: e3 * (law.ea * strains.eps),
        n_perp: Vec3::zeros(),
        m_perp: lambda.apply(&moment_convected),
        m_par: law.gj * strains.tau,
    }
}

/// Spatial bending moment of a transversely isotropic section directly
/// from centerline derivatives: `m_⊥ = EI (d × d′)`.
///
/// Equal to `EI|K|·(d × d′/|d′|)` wherever `|d′| > 0`; the limit at
/// straight points is zero, which this form reaches without a division.
pub fn bending_moment_ti(law: &MaterialLaw, r1: &Vec3, r2: &Vec3) -> Result<Vec3> {
    let ei = law.bending_isotropic()?;
    let n = r1.norm();
    if !n.is_finite() || n == 0.0 {
        return Err(RodError::ZeroVector { norm: n });
    }
    let d = r1 / n;
    let d_prime = (r2 - d * d.dot(r2)) / n;
    Ok(d.cross(&d_prime) * ei)
}

/// Kinetic energy density per unit reference arc length.
///
/// `v` is the centerline velocity; `w` holds convected angular-velocity
/// components. For [`KineticModel::Full`] it is the convected angular
/// velocity `W = axial(ΛᵀΛ̇)` and the energy is `½Aρ|v|² + ½W·I_ρW`. For
/// [`KineticModel::Regularized`] its in-plane part is `W_⊥` and its third
/// component is the twist rate `ψ̇`; the section must be round.
pub fn kinetic_energy_density(
    v: &Vec3,
    w: &Vec3,
    inertia: &SectionInertia,
    model: KineticModel,
) -> Result<f64> {
    let translational = 0.5 * inertia.a_rho * v.norm_squared();
    match model {
        KineticModel::Full => {
            let iw = inertia.convected_tensor() * w;
            Ok(translational + 0.5 * w.dot(&iw))
        }
        KineticModel::Regularized => {
            let i_perp = inertia.transverse_scalar()?;
            Ok(translational
                + 0.5 * i_perp * (w.x * w.x + w.y * w.y)
                + 0.5 * inertia.i_par * w.z * w.z)
        }
    }
}

/// Momentum densities conjugate to `(v, w_⊥, ψ̇)`.
///
/// `w_perp` carries in-plane angular-velocity components and must have a
/// negligible third component (it lives in the cross-section plane).
pub fn momenta(v: &Vec3, w_perp: &Vec3, psi_dot: f64, inertia: &SectionInertia) -> Result<Momenta> {
    if w_perp.z.abs() > 1e-10 * w_perp.norm().max(1.0) {
        return Err(RodError::Validation(format!(
            "in-plane angular velocity has axial component {}",
            w_perp.z
        )));
    }
    let planar = inertia.i_perp * nalgebra::Vector2::new(w_perp.x, w_perp.y);
    Ok(Momenta {
        p: v * inertia.a_rho,
        pi_perp: Vec3::new(planar.x, planar.y, 0.0),
        pi_par: inertia.i_par * psi_dot,
    })
}
