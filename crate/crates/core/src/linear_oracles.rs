//! Reference solutions for straight rods in the linear regime.
//!
//! Everything here is independent of the nonlinear discretization: classical
//! closed-form cantilever values, transcendental frequency roots, wave
//! speeds, and a small Hermite-element eigensolver for the clamped-free
//! bending problem with rotary inertia,
//!
//! ```text
//! ρA ü − ρI ü″ + EI u″″ = 0.
//! ```
//!
//! The nonlinear solver and the time integrator are tested against these
//! oracles in their small-load and small-amplitude limits. The axial and
//! torsion companions are plain wave equations, `ρA ẅ − EA w″ = n̄` and
//! `ρI₃₃ φ̈ − GI₃₃ φ″ = 0`, with speeds `√(E/ρ)` and `√(G/ρ)`.

use nalgebra::linalg::SymmetricEigen;
use nalgebra::{DMatrix, Matrix4};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::RodError;
use crate::Result;

/// Material and section data of a uniform straight beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearBeamParams {
    /// Young's modulus (Pa).
    pub e: f64,
    /// Shear modulus (Pa).
    pub g: f64,
    /// Cross-section area (m²).
    pub a: f64,
    /// Second moment about the first transverse axis (m⁴).
    pub i11: f64,
    /// Second moment about the second transverse axis (m⁴).
    pub i22: f64,
    /// Polar second moment about the rod axis (m⁴).
    pub i33: f64,
    /// Mass density (kg/m³).
    pub rho: f64,
    /// Length (m).
    pub l: f64,
}

impl LinearBeamParams {
    /// Checks that every parameter is finite and positive.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("E", self.e),
            ("G", self.g),
            ("A", self.a),
            ("I11", self.i11),
            ("I22", self.i22),
            ("I33", self.i33),
            ("rho", self.rho),
            ("L", self.l),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(RodError::Validation(format!(
                    "beam parameter {name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Axial stiffness `EA` (N).
    #[must_use]
    pub fn ea(&self) -> f64 {
        self.e * self.a
    }

    /// Bending stiffness `EI₁₁` (N·m²), the axis used by the eigensolver.
    #[must_use]
    pub fn ei(&self) -> f64 {
        self.e * self.i11
    }

    /// Torsion stiffness `GI₃₃` (N·m²).
    #[must_use]
    pub fn gj(&self) -> f64 {
        self.g * self.i33
    }

    /// Mass per length `ρA` (kg/m).
    #[must_use]
    pub fn rho_a(&self) -> f64 {
        self.rho * self.a
    }

    /// Rotary inertia per length `ρI₁₁` (kg·m).
    #[must_use]
    pub fn rho_i(&self) -> f64 {
        self.rho * self.i11
    }

    /// Polar inertia per length `ρI₃₃` (kg·m).
    #[must_use]
    pub fn rho_i_polar(&self) -> f64 {
        self.rho * self.i33
    }
}

// ---------------------------------------------------------------------------
// Closed-form statics
// ---------------------------------------------------------------------------

/// Classical clamped-free load cases with closed-form answers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CantileverCase {
    /// Transverse tip force (N); the value is the tip deflection `FL³/(3EI)`.
    TipForce(f64),
    /// Axial tip torque (N·m); the value is the tip twist `TL/(GJ)`.
    TipTorque(f64),
    /// Tip bending moment (N·m); the value is the arc curvature `M/(EI)`.
    TipBendingMoment(f64),
    /// No input; the value is the buckling load `π²EI/(4L²)` of the
    /// clamped-free column.
    BucklingLoad,
}

/// Closed-form value of a classical cantilever case.
pub fn cantilever_statics(params: &LinearBeamParams, case: CantileverCase) -> Result<f64> {
    params.validate()?;
    Ok(match case {
        CantileverCase::TipForce(f) => f * params.l.powi(3) / (3.0 * params.ei()),
        CantileverCase::TipTorque(t) => t * params.l / params.gj(),
        CantileverCase::TipBendingMoment(m) => m / params.ei(),
        CantileverCase::BucklingLoad => PI * PI * params.ei() / (4.0 * params.l * params.l),
    })
}

/// Axial wave speed `√(E/ρ)` (m/s).
pub fn axial_wave_speed(params: &LinearBeamParams) -> Result<f64> {
    params.validate()?;
    Ok((params.e / params.rho).sqrt())
}

/// Torsion wave speed `√(G/ρ)` (m/s).
pub fn torsion_wave_speed(params: &LinearBeamParams) -> Result<f64> {
    params.validate()?;
    Ok((params.g / params.rho).sqrt())
}

/// First torsion frequency of a clamped-free shaft, `(π/2)√(G/ρ)/L` (rad/s).
pub fn torsion_fundamental(params: &LinearBeamParams) -> Result<f64> {
    Ok(std::f64::consts::FRAC_PI_2 * torsion_wave_speed(params)? / params.l)
}

// ---------------------------------------------------------------------------
// Transcendental frequency roots
// ---------------------------------------------------------------------------

/// First `n` positive roots of the clamped-free characteristic equation
/// `cos(x) cosh(x) + 1 = 0`, as values of `βL`.
///
/// The k-th bending frequency of an Euler-Bernoulli cantilever is then
/// `ω_k = (β_k L)² √(EI / (ρA L⁴))`. Roots are bisected on the rescaled
/// equation `cos(x) + sech(x) = 0`, which has the same zeros but stays
/// bounded, to a bracket width of a few ulps.
pub fn frequency_roots(n: usize) -> Vec<f64> {
    // cos + sech flips sign at each root and sech decays fast, so for k ≥ 1
    // the root lies within (k − 1/2, k + 1/2)·π shrunk slightly.
    let f = |x: f64| x.cos() + 1.0 / x.cosh();
    let mut roots = Vec::with_capacity(n);
    for k in 1..=n {
        let mut lo = (k as f64 - 0.5) * PI - 0.5;
        let mut hi = (k as f64 - 0.5) * PI + 0.5;
        debug_assert!(f(lo) * f(hi) < 0.0, "bracket must straddle the root");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        roots.push(0.5 * (lo + hi));
    }
    roots
}

/// K-th bending frequency (rad/s) of an Euler-Bernoulli clamped-free beam,
/// `(β_k L)² √(EI/(ρA L⁴))`. Ignores rotary inertia; see [`rayleigh_operator`]
/// for the corrected spectrum.
pub fn cantilever_bending_frequency(params: &LinearBeamParams, k: usize) -> Result<f64> {
    params.validate()?;
    if k == 0 {
        return Err(RodError::Validation("mode index starts at 1".into()));
    }
    let beta_l = *frequency_roots(k).last().expect("k >= 1 roots");
    Ok(beta_l.powi(2) * (params.ei() / (params.rho_a() * params.l.powi(4))).sqrt())
}

// ---------------------------------------------------------------------------
// Discrete bending eigensolver with rotary inertia
// ---------------------------------------------------------------------------

/// Element stiffness of a Hermite beam element of length `h`, dofs
/// `(w₁, w′₁, w₂, w′₂)`.
fn element_stiffness(ei: f64, h: f64) -> Matrix4<f64> {
    let c = ei / h.powi(3);
    Matrix4::new(
        12.0,
        6.0 * h,
        -12.0,
        6.0 * h,
        6.0 * h,
        4.0 * h * h,
        -6.0 * h,
        2.0 * h * h,
        -12.0,
        -6.0 * h,
        12.0,
        -6.0 * h,
        6.0 * h,
        2.0 * h * h,
        -6.0 * h,
        4.0 * h * h,
    ) * c
}

/// Consistent translational mass of the same element.
fn element_mass_translation(rho_a: f64, h: f64) -> Matrix4<f64> {
    let c = rho_a * h / 420.0;
    Matrix4::new(
        156.0,
        22.0 * h,
        54.0,
        -13.0 * h,
        22.0 * h,
        4.0 * h * h,
        13.0 * h,
        -3.0 * h * h,
        54.0,
        13.0 * h,
        156.0,
        -22.0 * h,
        -13.0 * h,
        -3.0 * h * h,
        -22.0 * h,
        4.0 * h * h,
    ) * c
}

/// Rotary-inertia mass of the same element (the `ρI u̇′` term).
fn element_mass_rotary(rho_i: f64, h: f64) -> Matrix4<f64> {
    let c = rho_i / (30.0 * h);
    Matrix4::new(
        36.0,
        3.0 * h,
        -36.0,
        3.0 * h,
        3.0 * h,
        4.0 * h * h,
        -3.0 * h,
        -h * h,
        -36.0,
        -3.0 * h,
        36.0,
        -3.0 * h,
        3.0 * h,
        -h * h,
        -3.0 * h,
        4.0 * h * h,
    ) * c
}

/// Lowest `n_modes` bending frequencies (rad/s) and mass-normalized mode
/// shapes of the clamped-free beam with rotary inertia,
/// `ρA ü − ρI ü″ + EI u″″ = 0`.
///
/// The mesh has `n_elements` Hermite elements; each column of the returned
/// shape matrix holds the free nodal dofs `(w₁, w′₁, ..., w_n, w′_n)` of one
/// mode, normalized to unit modal mass. Bending uses the `I11` axis.
pub fn rayleigh_operator(
    params: &LinearBeamParams,
    n_modes: usize,
    n_elements: usize,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    params.validate()?;
    if n_elements == 0 {
        return Err(RodError::Validation("need at least one element".into()));
    }
    let dim = 2 * n_elements;
    if n_modes == 0 || n_modes > dim {
        return Err(RodError::Validation(format!(
            "mode count must lie in 1..={dim}, got {n_modes}"
        )));
    }
    let h = params.l / n_elements as f64;
    let ke = element_stiffness(params.ei(), h);
    let me = element_mass_translation(params.rho_a(), h) + element_mass_rotary(params.rho_i(), h);

    // Assemble over all nodes, then drop the clamped dofs (w, w′ at node 0).
    let full = 2 * (n_elements + 1);
    let mut k = DMatrix::zeros(full, full);
    let mut m = DMatrix::zeros(full, full);
    for e in 0..n_elements {
        let base = 2 * e;
        for a in 0..4 {
            for b in 0..4 {
                k[(base + a, base + b)] += ke[(a, b)];
                m[(base + a, base + b)] += me[(a, b)];
            }
        }
    }
    let k_red = k.view((2, 2), (dim, dim)).into_owned();
    let m_red = m.view((2, 2), (dim, dim)).into_owned();

    let chol = m_red
        .cholesky()
        .ok_or_else(|| RodError::Validation("beam mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(&k_red)
        .ok_or_else(|| RodError::Validation("beam mass factor is singular".into()))?;
    let reduced = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| RodError::Validation("beam mass factor is singular".into()))?;
    let reduced = (&reduced + &reduced.transpose()) * 0.5;
    let eigen = SymmetricEigen::new(reduced);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| {
        eigen.eigenvalues[i]
            .partial_cmp(&eigen.eigenvalues[j])
            .expect("finite eigenvalues")
    });

    let lt = l.transpose();
    let mut frequencies = Vec::with_capacity(n_modes);
    let mut shapes = DMatrix::zeros(dim, n_modes);
    for (col, &idx) in order.iter().take(n_modes).enumerate() {
        frequencies.push(eigen.eigenvalues[idx].max(0.0).sqrt());
        let y = eigen.eigenvectors.column(idx).into_owned();
        let phi = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| RodError::Validation("beam mass factor is singular".into()))?;
        shapes.column_mut(col).copy_from(&phi);
    }
    Ok((frequencies, shapes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn slender() -> LinearBeamParams {
        // Rotary inertia ~1e-10 of the translational term: Euler-Bernoulli
        // territory.
        LinearBeamParams {
            e: 1.0e4,
            g: 4.0e3,
            a: 1.0,
            i11: 1.0e-10,
            i22: 1.0e-10,
            i33: 2.0e-10,
            rho: 1.0,
            l: 1.0,
        }
    }

    #[test]
    fn characteristic_roots_match_the_tabulated_values() {
        let roots = frequency_roots(4);
        assert_relative_eq!(roots[0], 1.875_104_068_7, epsilon = 1e-9);
        assert_relative_eq!(roots[1], 4.694_091_132_9, epsilon = 1e-9);
        assert_relative_eq!(roots[2], 7.854_757_438_2, epsilon = 1e-9);
        for &x in &roots {
            assert!(
                (x.cos() * x.cosh() + 1.0).abs() < 1e-10,
                "defining equation residual too large at {x}"
            );
        }
    }

    #[test]
    fn closed_form_cantilever_values() {
        let mut p = slender();
        p.e = 1.0e4;
        p.i11 = 1e-4; // EI = 1
        p.g = 4.0e3;
        p.i33 = 5e-4; // GJ = 2
        assert_relative_eq!(
            cantilever_statics(&p, CantileverCase::TipForce(1.0)).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            cantilever_statics(&p, CantileverCase::TipTorque(1.0)).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            cantilever_statics(&p, CantileverCase::BucklingLoad).unwrap(),
            PI * PI / 4.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            cantilever_statics(&p, CantileverCase::TipBendingMoment(0.3)).unwrap(),
            0.3,
            epsilon = 1e-15
        );
    }

    #[test]
    fn wave_speeds_follow_the_material_moduli() {
        let p = slender();
        assert_relative_eq!(axial_wave_speed(&p).unwrap(), 100.0, epsilon = 1e-12);
        assert_relative_eq!(
            torsion_wave_speed(&p).unwrap(),
            (4.0e3_f64).sqrt(),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            torsion_fundamental(&p).unwrap(),
            std::f64::consts::FRAC_PI_2 * (4.0e3_f64).sqrt(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn slender_spectrum_matches_the_transcendental_roots() {
        let p = slender();
        let (freqs, shapes) = rayleigh_operator(&p, 2, 64).expect("eigensolve");
        for (k, &f) in freqs.iter().enumerate() {
            let exact = cantilever_bending_frequency(&p, k + 1).expect("closed form");
            assert_relative_eq!(f, exact, max_relative = 1e-3);
        }
        // Mode 1 deflects monotonically: the tip carries the extreme value.
        let w: Vec<f64> = (0..shapes.nrows() / 2)
            .map(|i| shapes[(2 * i, 0)])
            .collect();
        let tip = w.last().expect("nonempty").abs();
        assert!(w.iter().all(|&wi| wi.abs() <= tip + 1e-12));
    }

    #[test]
    fn rotary_inertia_softens_every_frequency() {
        // Same EI and ρA as `slender` but a heavy section: I11 large with E
        // rescaled to keep EI = 1.
        let heavy = LinearBeamParams {
            e: 1.0e3,
            g: 4.0e3,
            a: 1.0,
            i11: 1e-3,
            i22: 1e-3,
            i33: 2e-3,
            rho: 1.0,
            l: 1.0,
        };
        let (with_rotary, _) = rayleigh_operator(&heavy, 4, 48).expect("eigensolve");
        for (k, &f) in with_rotary.iter().enumerate() {
            let beta = frequency_roots(k + 1)[k];
            let euler = beta.powi(2) * (heavy.ei() / heavy.rho_a()).sqrt();
            assert!(
                f < euler,
                "mode {}: rotary-corrected {f} should sit below {euler}",
                k + 1
            );
        }
    }

    #[test]
    fn discrete_frequencies_converge_at_second_order_or_better() {
        let p = slender();
        let exact = cantilever_bending_frequency(&p, 1).expect("closed form");
        let e8 = (rayleigh_operator(&p, 1, 8).unwrap().0[0] - exact).abs();
        let e16 = (rayleigh_operator(&p, 1, 16).unwrap().0[0] - exact).abs();
        assert!(
            e8 / e16 >= 4.0,
            "error ratio {} below second order (errors {e8:e}, {e16:e})",
            e8 / e16
        );
    }

    #[test]
    fn parameters_are_validated() {
        let mut p = slender();
        p.a = 0.0;
        assert!(p.validate().is_err());
        assert!(rayleigh_operator(&p, 1, 8).is_err());
        let p = slender();
        assert!(rayleigh_operator(&p, 0, 8).is_err());
        assert!(rayleigh_operator(&p, 99, 8).is_err());
        assert!(cantilever_bending_frequency(&p, 0).is_err());
    }
}
