//! Dimensionless parameterization shared by every model.
//!
//! FEL and CARL reduce to the same universal equations once positions,
//! momenta, the field and time are rescaled. The whole dynamics then depends
//! only on the collective parameter `rho_bar` and the detuning `delta`. This
//! module holds that pair and the conversions from laboratory parameters of
//! either device.
//!
//! Physical constants are injected rather than hard-coded so that tests can
//! evaluate the formulas with round numbers.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The collective parameter ρ̄ and detuning δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledParams {
    pub rho_bar: f64,
    pub delta: f64,
}

impl ScaledParams {
    pub fn new(rho_bar: f64, delta: f64) -> Result<Self> {
        if !rho_bar.is_finite() || rho_bar <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "rho_bar must be finite and positive, got {rho_bar}"
            )));
        }
        if !delta.is_finite() {
            return Err(Error::InvalidParameter(format!("delta must be finite, got {delta}")));
        }
        Ok(Self { rho_bar, delta })
    }

    /// Phase velocity δ/ρ̄ of the rotating frame, as it appears in the field
    /// equation.
    pub fn detuning_rate(&self) -> f64 {
        self.delta / self.rho_bar
    }
}

/// Physical constants in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub c: f64,
    /// Particle mass.
    pub m: f64,
    /// Elementary charge.
    pub e: f64,
    pub epsilon0: f64,
}

// CODATA 2018.
const HBAR: f64 = 1.054_571_817e-34;
const C_LIGHT: f64 = 299_792_458.0;
const E_CHARGE: f64 = 1.602_176_634e-19;
const EPSILON0: f64 = 8.854_187_812_8e-12;
const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;
const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

impl PhysicalConstants {
    pub fn new(hbar: f64, c: f64, m: f64, e: f64, epsilon0: f64) -> Result<Self> {
        let k = Self { hbar, c, m, e, epsilon0 };
        for (name, v) in [("hbar", hbar), ("c", c), ("m", m), ("e", e), ("epsilon0", epsilon0)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "physical constant {name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(k)
    }

    /// CODATA values with the given particle mass.
    pub fn si_with_mass(m: f64) -> Result<Self> {
        Self::new(HBAR, C_LIGHT, m, E_CHARGE, EPSILON0)
    }

    /// CODATA values for an electron beam.
    pub fn electron() -> Self {
        Self { hbar: HBAR, c: C_LIGHT, m: ELECTRON_MASS, e: E_CHARGE, epsilon0: EPSILON0 }
    }

    /// CODATA values for a ⁸⁷Rb atom.
    pub fn rubidium87() -> Self {
        Self { m: 86.909_180_527 * ATOMIC_MASS_UNIT, ..Self::electron() }
    }
}

/// Laboratory parameters of a free-electron laser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FelPhysicalParams {
    /// Wiggler period λ_w (m).
    pub lambda_w: f64,
    /// Wiggler parameter a_w.
    pub a_w: f64,
    /// Beam energy γ₀ in units of mc².
    pub gamma0: f64,
    /// Electron density n (m⁻³).
    pub density_n: f64,
    /// Radiation wavelength λ (m).
    pub lambda_r: f64,
}

/// Laboratory parameters of a collective atomic recoil laser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlPhysicalParams {
    /// Pump Rabi frequency Ω (s⁻¹).
    pub rabi_omega: f64,
    /// Pump-atom detuning Δ (s⁻¹).
    pub detuning_pump: f64,
    /// Natural decay constant Γ (s⁻¹).
    pub gamma_decay: f64,
    /// Dipole matrix element d (C·m).
    pub dipole_d: f64,
    /// Frequency of the emitted radiation ω (s⁻¹).
    pub omega: f64,
    /// Pump frequency ω_p (s⁻¹).
    pub omega_p: f64,
    /// Atomic density n (m⁻³).
    pub density_n: f64,
}

/// Result of [`fel_scaling`] with the intermediates exposed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FelScaling {
    pub params: ScaledParams,
    /// Resonant energy γ_r.
    pub gamma_r: f64,
    /// q = mcγ_r/ħk.
    pub q: f64,
    /// The FEL (BPN) parameter ρ_F.
    pub rho_f: f64,
    /// Radiation wavenumber k = 2π/λ.
    pub k: f64,
    /// Wiggler wavenumber k_w = 2π/λ_w.
    pub k_w: f64,
}

/// Result of [`carl_scaling`] with the intermediates exposed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlScaling {
    pub params: ScaledParams,
    /// Recoil frequency ω_R = 2ħk²/m.
    pub omega_r: f64,
    /// Light-shift factor S₀ = ΔΩ/[2(Γ²+Δ²+Ω²)].
    pub s0: f64,
    /// ρ_C, identical to ρ̄ for CARL.
    pub rho_c: f64,
    /// Radiation wavenumber k = ω/c.
    pub k: f64,
}

fn finite(formula: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Scaling { formula, value })
    }
}

fn positive(formula: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::Scaling { formula, value })
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite and positive, got {v}")))
    }
}

/// Maps FEL laboratory parameters onto (ρ̄, δ).
///
/// γ_r = √((λ_w/2λ)(1+a_w²)), q = mcγ_r/ħk,
/// ρ_F = (1/γ_r)(a_w/4ck_w)^{2/3}(e²n/mε₀)^{1/3}, ρ̄ = qρ_F and
/// δ = q(γ₀−γ_r)/γ_r.
pub fn fel_scaling(p: &FelPhysicalParams, k: &PhysicalConstants) -> Result<FelScaling> {
    check_positive("lambda_w", p.lambda_w)?;
    check_positive("a_w", p.a_w)?;
    check_positive("density_n", p.density_n)?;
    check_positive("lambda_r", p.lambda_r)?;
    if !p.gamma0.is_finite() || p.gamma0 <= 1.0 {
        return Err(Error::InvalidParameter(format!("gamma0 must exceed 1, got {}", p.gamma0)));
    }

    let kr = positive("k = 2*pi/lambda", 2.0 * PI / p.lambda_r)?;
    let k_w = positive("k_w = 2*pi/lambda_w", 2.0 * PI / p.lambda_w)?;
    let gamma_r_sq = finite(
        "gamma_r^2 = (lambda_w/2lambda)(1+a_w^2)",
        p.lambda_w / (2.0 * p.lambda_r) * (1.0 + p.a_w * p.a_w),
    )?;
    let gamma_r = positive("gamma_r = sqrt((lambda_w/2lambda)(1+a_w^2))", gamma_r_sq.sqrt())?;
    let q = positive("q = m c gamma_r / (hbar k)", k.m * k.c * gamma_r / (k.hbar * kr))?;
    let wiggler = positive("(a_w/4ck_w)^(2/3)", (p.a_w / (4.0 * k.c * k_w)).powf(2.0 / 3.0))?;
    let plasma = positive("(e^2 n/m epsilon0)^(1/3)", (k.e * k.e * p.density_n / (k.m * k.epsilon0)).cbrt())?;
    let rho_f = positive("rho_F", wiggler * plasma / gamma_r)?;
    let rho_bar = positive("rho_bar = q rho_F", q * rho_f)?;
    let delta = finite("delta = q (gamma0 - gamma_r)/gamma_r", q * (p.gamma0 - gamma_r) / gamma_r)?;

    Ok(FelScaling { params: ScaledParams::new(rho_bar, delta)?, gamma_r, q, rho_f, k: kr, k_w })
}

/// Maps CARL laboratory parameters onto (ρ̄, δ).
///
/// ω_R = 2ħk²/m with k = ω/c, S₀ = ΔΩ/[2(Γ²+Δ²+Ω²)],
/// ρ̄ = ρ_C = (S₀/ω_R)^{2/3}(ωd²n/2ħε₀)^{1/3} and δ = (ω_p−ω)/ω_R.
///
/// The sign of S₀ follows Δ; a red-detuned pump gives a negative S₀ and
/// therefore a negative ρ_C, which lies outside the model and is rejected.
pub fn carl_scaling(p: &CarlPhysicalParams, k: &PhysicalConstants) -> Result<CarlScaling> {
    check_positive("gamma_decay", p.gamma_decay)?;
    check_positive("dipole_d", p.dipole_d)?;
    check_positive("density_n", p.density_n)?;
    check_positive("omega", p.omega)?;
    for (name, v) in
        [("rabi_omega", p.rabi_omega), ("detuning_pump", p.detuning_pump), ("omega_p", p.omega_p)]
    {
        if !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")));
        }
    }

    let kr = positive("k = omega/c", p.omega / k.c)?;
    let omega_r = positive("omega_R = 2 hbar k^2/m", 2.0 * k.hbar * kr * kr / k.m)?;
    let denom =
        p.gamma_decay * p.gamma_decay + p.detuning_pump * p.detuning_pump + p.rabi_omega * p.rabi_omega;
    let denom = positive("Gamma^2 + Delta^2 + Omega^2", denom)?;
    let s0 = finite(
        "S0 = Delta Omega / [2(Gamma^2+Delta^2+Omega^2)]",
        p.detuning_pump * p.rabi_omega / (2.0 * denom),
    )?;
    // S0 <= 0 has no real rho_C; reject instead of taking |S0|.
    let ratio = s0 / omega_r;
    if ratio <= 0.0 {
        return Err(Error::Scaling {
            formula: "rho_C = (S0/omega_R)^(2/3)(omega d^2 n/2 hbar epsilon0)^(1/3) needs S0 > 0",
            value: s0,
        });
    }
    let coupling = positive(
        "(omega d^2 n / 2 hbar epsilon0)^(1/3)",
        (p.omega * p.dipole_d * p.dipole_d * p.density_n / (2.0 * k.hbar * k.epsilon0)).cbrt(),
    )?;
    let rho_c = positive(
        "rho_C = (S0/omega_R)^(2/3)(omega d^2 n/2 hbar epsilon0)^(1/3)",
        ratio.powf(2.0 / 3.0) * coupling,
    )?;
    let delta = finite("delta = (omega_p - omega)/omega_R", (p.omega_p - p.omega) / omega_r)?;

    Ok(CarlScaling { params: ScaledParams::new(rho_c, delta)?, omega_r, s0, rho_c, k: kr })
}

/// Mean number of photons emitted per particle, |a|²/N = (ρ̄/2)|A|².
pub fn photons_per_particle(a: Complex64, params: &ScaledParams) -> f64 {
    0.5 * params.rho_bar * a.norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample_fel() -> FelPhysicalParams {
        FelPhysicalParams { lambda_w: 0.02, a_w: 1.0, gamma0: 200.0, density_n: 1e16, lambda_r: 1e-6 }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ScaledParams::new(0.0, 1.0).is_err());
        assert!(ScaledParams::new(-1.0, 1.0).is_err());
        assert!(ScaledParams::new(1.0, f64::NAN).is_err());
        assert!(ScaledParams::new(f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn resonant_fel_has_zero_detuning() {
        let k = PhysicalConstants::electron();
        let mut p = sample_fel();
        let s = fel_scaling(&p, &k).unwrap();
        p.gamma0 = s.gamma_r;
        let s = fel_scaling(&p, &k).unwrap();
        assert_eq!(s.params.delta, 0.0);
    }

    #[test]
    fn fel_detuning_sign_follows_energy_offset() {
        let k = PhysicalConstants::electron();
        let mut p = sample_fel();
        let gr = fel_scaling(&p, &k).unwrap().gamma_r;
        p.gamma0 = gr * 1.01;
        assert!(fel_scaling(&p, &k).unwrap().params.delta > 0.0);
        p.gamma0 = gr * 0.99;
        assert!(fel_scaling(&p, &k).unwrap().params.delta < 0.0);
    }

    #[test]
    fn fel_rho_scales_with_cube_root_of_density() {
        let k = PhysicalConstants::electron();
        let p = sample_fel();
        let a = fel_scaling(&p, &k).unwrap();
        let b = fel_scaling(&FelPhysicalParams { density_n: 2.0 * p.density_n, ..p }, &k).unwrap();
        assert_relative_eq!(b.rho_f / a.rho_f, 2f64.cbrt(), max_relative = 1e-12);
        let c = fel_scaling(&FelPhysicalParams { density_n: 8.0 * p.density_n, ..p }, &k).unwrap();
        assert_relative_eq!(c.params.rho_bar / a.params.rho_bar, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn fel_rejects_sub_relativistic_beam() {
        let p = FelPhysicalParams { gamma0: 1.0, ..sample_fel() };
        assert!(fel_scaling(&p, &PhysicalConstants::electron()).is_err());
    }

    #[test]
    fn carl_zero_pump_is_out_of_domain() {
        let k = PhysicalConstants::rubidium87();
        let p = CarlPhysicalParams {
            rabi_omega: 0.0,
            detuning_pump: 1e9,
            gamma_decay: 3.8e7,
            dipole_d: 3.584e-29,
            omega: 2.4e15,
            omega_p: 2.4e15,
            density_n: 1e18,
        };
        let err = carl_scaling(&p, &k).unwrap_err();
        assert!(matches!(err, Error::Scaling { .. }), "{err}");
    }

    #[test]
    fn carl_red_detuned_pump_is_rejected_not_folded() {
        let k = PhysicalConstants::rubidium87();
        let p = CarlPhysicalParams {
            rabi_omega: 1e7,
            detuning_pump: -1e9,
            gamma_decay: 3.8e7,
            dipole_d: 3.584e-29,
            omega: 2.4e15,
            omega_p: 2.4e15,
            density_n: 1e18,
        };
        assert!(carl_scaling(&p, &k).is_err());
    }

    #[test]
    fn photons_per_particle_identities() {
        let p = ScaledParams::new(2.0, 0.0).unwrap();
        assert_eq!(photons_per_particle(Complex64::new(0.0, 0.0), &p), 0.0);
        assert_relative_eq!(photons_per_particle(Complex64::new(0.6, 0.8), &p), 1.0);
        let p = ScaledParams::new(0.2, 1.0).unwrap();
        let abar = Complex64::new((2.0 / 0.2f64).sqrt(), 0.0);
        assert_relative_eq!(photons_per_particle(abar, &p), 1.0, max_relative = 1e-14);
    }
}
