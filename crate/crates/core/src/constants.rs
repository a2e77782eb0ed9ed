//! Physical constants, CODATA 2018 recommended values (SI units).

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Boltzmann constant, J/K (exact).
pub const K_B: f64 = 1.380_649e-23;

/// Proton rest mass, kg.
pub const PROTON_MASS: f64 = 1.672_621_923_69e-27;

/// One angstrom, m.
pub const ANGSTROM: f64 = 1.0e-10;
