//! Physical scenario parameters and the reduction to dimensionless form.
//!
//! Lengths are measured in thermal de Broglie wavelengths
//! `λ_T = ħ / sqrt(2 M k_B T)` and times in relaxation times `1/γ`. In these
//! units the whole free-particle dynamics depends on three numbers: the
//! non-Markovianity `R_Ω = γ/(πΩ)`, the kinetic coefficient `D = k_B T/(ħγ)`
//! and the peak separation `Δξ = d/λ_T`.

use serde::{Deserialize, Serialize};

use crate::constants::{ANGSTROM, HBAR, K_B, PROTON_MASS};
use crate::error::{Error, Result};

/// Largest admissible non-Markovianity, reached at `Ω = γ`.
pub const R_OMEGA_MAX: f64 = std::f64::consts::FRAC_1_PI;

/// Default relaxation rate `k_B·300 K/ħ` (about 3.93e13 1/s), so that `D = 1`
/// at room temperature. See the README for why this value.
pub const DEFAULT_GAMMA: f64 = K_B * 300.0 / HBAR;

/// External potential acting on the particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// `V(x) = M ω² x² / 2` with angular frequency `omega` in rad/s.
    Harmonic { omega: f64 },
}

/// SI-unit description of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Particle mass, kg.
    pub mass: f64,
    /// Bath temperature, K.
    pub temperature: f64,
    /// Relaxation rate γ, 1/s.
    pub gamma: f64,
    /// Bath cut-off frequency Ω, 1/s. `f64::INFINITY` is the Markov limit.
    pub cutoff: f64,
    /// Separation of the two packets, m.
    pub separation: f64,
    /// Position spread of each packet, m.
    pub width: f64,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
}

impl PhysicalParams {
    /// Proton at 300 K in a 2 Å cat state with a Markovian bath.
    pub fn proton_default() -> Self {
        let lambda = thermal_wavelength(PROTON_MASS, 300.0).expect("positive inputs");
        PhysicalParams {
            mass: PROTON_MASS,
            temperature: 300.0,
            gamma: DEFAULT_GAMMA,
            cutoff: f64::INFINITY,
            separation: 2.0 * ANGSTROM,
            width: DEFAULT_WIDTH * lambda,
            potential: None,
        }
    }

    /// Returns a copy whose cut-off realises the requested `R_Ω`.
    pub fn with_r_omega(&self, r: f64) -> Result<Self> {
        check_r_omega(r)?;
        let mut p = self.clone();
        p.cutoff = if r == 0.0 {
            f64::INFINITY
        } else {
            self.gamma / (std::f64::consts::PI * r)
        };
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("temperature", self.temperature),
            ("gamma", self.gamma),
            ("cutoff", self.cutoff),
            ("separation", self.separation),
            ("width", self.width),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || v.is_nan() {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.cutoff < self.gamma {
            return Err(Error::Domain(format!(
                "cutoff {} is below gamma {}: requires Omega >= gamma (R_Omega <= 1/pi)",
                self.cutoff, self.gamma
            )));
        }
        if self.separation <= 2.0 * self.width {
            return Err(Error::Domain(format!(
                "separation {} must exceed twice the packet width {}",
                self.separation, self.width
            )));
        }
        if let Some(PotentialSpec::Harmonic { omega }) = self.potential {
            if !(omega > 0.0) {
                return Err(Error::Domain(format!("harmonic omega must be positive, got {omega}")));
            }
        }
        Ok(())
    }
}

/// Default packet width in thermal wavelengths.
pub const DEFAULT_WIDTH: f64 = 0.3;

/// The dimensionless numbers that fully parameterise the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessParams {
    pub r_omega: f64,
    /// Kinetic coefficient `k_B T / (ħ γ)`.
    pub d: f64,
    /// Peak separation in thermal wavelengths.
    pub separation: f64,
    /// Packet width in thermal wavelengths.
    pub width: f64,
    /// Harmonic potential `V̂(ξ) = κ ξ²/2` in units of `ħγ`, if any.
    #[serde(default)]
    pub harmonic_kappa: Option<f64>,
}

impl DimensionlessParams {
    pub fn validate(&self) -> Result<()> {
        check_r_omega(self.r_omega)?;
        if !(self.d > 0.0) {
            return Err(Error::Domain(format!("D must be positive, got {}", self.d)));
        }
        if !(self.separation >= 0.0) {
            return Err(Error::Domain(format!(
                "separation must be non-negative, got {}",
                self.separation
            )));
        }
        if !(self.width > 0.0) {
            return Err(Error::Domain(format!("width must be positive, got {}", self.width)));
        }
        Ok(())
    }
}

pub(crate) fn check_r_omega(r: f64) -> Result<()> {
    if !(0.0..=R_OMEGA_MAX).contains(&r) {
        return Err(Error::Domain(format!(
            "R_Omega = {r} outside [0, 1/pi] (1/pi = {R_OMEGA_MAX:.6}); Omega must be >= gamma"
        )));
    }
    Ok(())
}

/// Thermal de Broglie wavelength `ħ / sqrt(2 M k_B T)` in metres.
pub fn thermal_wavelength(mass: f64, temperature: f64) -> Result<f64> {
    if !(mass > 0.0) || !(temperature > 0.0) {
        return Err(Error::Domain(format!(
            "thermal wavelength needs M > 0 and T > 0, got M = {mass}, T = {temperature}"
        )));
    }
    Ok(HBAR / (2.0 * mass * K_B * temperature).sqrt())
}

/// Non-Markovianity `γ / (π Ω)`. An infinite cut-off gives the Markov limit 0.
pub fn r_omega(gamma: f64, cutoff: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    if cutoff.is_nan() || cutoff < gamma {
        return Err(Error::Domain(format!(
            "cutoff {cutoff} < gamma {gamma}: system and bath are not separable (need Omega >= gamma)"
        )));
    }
    Ok(gamma / (std::f64::consts::PI * cutoff))
}

pub fn nondimensionalize(p: &PhysicalParams) -> Result<DimensionlessParams> {
    p.validate()?;
    let lambda = thermal_wavelength(p.mass, p.temperature)?;
    let r = r_omega(p.gamma, p.cutoff)?;
    let harmonic_kappa = p.potential.map(|PotentialSpec::Harmonic { omega }| {
        // V(λ ξ)/(ħγ) = M ω² λ² ξ² / (2 ħ γ)
        p.mass * omega * omega * lambda * lambda / (HBAR * p.gamma)
    });
    Ok(DimensionlessParams {
        r_omega: r,
        d: K_B * p.temperature / (HBAR * p.gamma),
        separation: p.separation / lambda,
        width: p.width / lambda,
        harmonic_kappa,
    })
}
