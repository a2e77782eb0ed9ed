//! High-temperature bath memory kernels and a numerical check of their
//! large-cut-off expansion.
//!
//! Both kernels are built on `sin(Ωt)/t`:
//!
//! * real part `α_R(t) = P_R sin(Ωt)/t`, `P_R = 4Mγk_BT/(πħ)`
//! * imaginary part `α_I(t) = P_I d/dt[sin(Ωt)/t]`, `P_I = 2Mγ/π`
//!
//! For a path difference `f` with `f(0) = 0` the convolution
//! `I(t) = ∫₀ᵗ α(t−u) f(u) du` has the asymptotic form
//!
//! * `α_R`: `P_R [ (π/2) f(t) − f′(t)/Ω + O(Ω⁻³) ]`
//! * `α_I`: `P_I [ −Ω f(t) + (π/2) f′(t) − f″(t)/Ω + O(Ω⁻²) ]`
//!
//! where the `α_I` remainder follows from integrating by parts once.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, K_B};
use crate::error::{Error, Result};
use crate::quad;

/// Quadrature tolerance of the brute-force convolution.
pub const DIRECT_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    ImaginaryPart,
    RealPart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Multiplies `sin(Ωt)/t` or its derivative.
    pub prefactor: f64,
    pub omega: f64,
}

impl KernelSpec {
    /// Kernel with prefactor 1.
    pub fn unit(kind: KernelKind, omega: f64) -> Result<Self> {
        let s = KernelSpec { kind, prefactor: 1.0, omega };
        s.validate()?;
        Ok(s)
    }

    /// Kernel for an Ohmic bath in SI units.
    pub fn physical(kind: KernelKind, mass: f64, gamma: f64, temperature: f64, omega: f64) -> Result<Self> {
        let prefactor = match kind {
            KernelKind::RealPart => 4.0 * mass * gamma * K_B * temperature / (PI * HBAR),
            KernelKind::ImaginaryPart => 2.0 * mass * gamma / PI,
        };
        let s = KernelSpec { kind, prefactor, omega };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(Error::Domain(format!("kernel cut-off must be positive and finite, got {}", self.omega)));
        }
        if !self.prefactor.is_finite() {
            return Err(Error::Domain("kernel prefactor must be finite".into()));
        }
        Ok(())
    }
}

/// Polynomial path difference `f(u) = Σ c_k u^k` with `f(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPath {
    coeffs: Vec<f64>,
}

impl TestPath {
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.first().is_some_and(|&c| c != 0.0) {
            return Err(Error::Domain("test path must vanish at u = 0".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("test path coefficients must be finite".into()));
        }
        Ok(TestPath { coeffs })
    }

    /// `u²(1−u)²`.
    pub fn bump() -> Self {
        TestPath { coeffs: vec![0.0, 0.0, 1.0, -2.0, 1.0] }
    }

    /// `u²`.
    pub fn square() -> Self {
        TestPath { coeffs: vec![0.0, 0.0, 1.0] }
    }

    pub fn zero() -> Self {
        TestPath { coeffs: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// `n`-th derivative at `u`.
    pub fn derivative(&self, n: usize, u: f64) -> f64 {
        let mut acc = 0.0;
        for k in (n..self.coeffs.len()).rev() {
            let falling: f64 = ((k - n + 1)..=k).map(|j| j as f64).product();
            acc = acc * u + self.coeffs[k] * falling;
        }
        acc
    }

    pub fn value(&self, u: f64) -> f64 {
        self.derivative(0, u)
    }
}

/// `α(t)` for `t ≥ 0`, using the `t → 0` limits at the origin.
pub fn kernel_eval(spec: &KernelSpec, t: f64) -> f64 {
    let w = spec.omega;
    let x = w * t;
    let shape = match spec.kind {
        KernelKind::RealPart => {
            if x.abs() < 1e-3 {
                w * (1.0 - x * x / 6.0 + x.powi(4) / 120.0)
            } else {
                x.sin() / t
            }
        }
        KernelKind::ImaginaryPart => {
            if x.abs() < 1e-3 {
                // Ω² d/dx[sin x / x]
                w * w * (-x / 3.0 + x.powi(3) / 30.0)
            } else {
                w * x.cos() / t - x.sin() / (t * t)
            }
        }
    };
    spec.prefactor * shape
}

/// Brute-force `∫₀ᵗ α(t−u) f(u) du`, split at the zeros `kπ/Ω`.
pub fn convolve_direct(spec: &KernelSpec, f: &TestPath, t: f64) -> Result<quad::Quadrature> {
    spec.validate()?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("convolution time must be non-negative, got {t}")));
    }
    let period = PI / spec.omega;
    let pieces = (t / period).ceil() as usize;
    let mut total = quad::Quadrature { value: 0.0, error: 0.0, evaluations: 0 };
    // absolute floor per piece, so pieces where f nearly vanishes do not stall
    let fmax = (0..=64).map(|k| f.value(t * k as f64 / 64.0).abs()).fold(0.0, f64::max);
    let kmax = match spec.kind {
        KernelKind::RealPart => spec.omega,
        KernelKind::ImaginaryPart => spec.omega * spec.omega,
    };
    let abs_tol = 1e-15 * spec.prefactor.abs() * kmax * fmax * period;
    // integrate in the lag variable τ = t − u so the split points are exact
    for k in 0..pieces {
        let a = k as f64 * period;
        let b = ((k + 1) as f64 * period).min(t);
        let q = quad::integrate(
            |tau| kernel_eval(spec, tau) * f.value(t - tau),
            a,
            b,
            0.01 * DIRECT_REL_TOL,
            abs_tol,
        )?;
        total.value += q.value;
        total.error += q.error;
        total.evaluations += q.evaluations;
    }
    Ok(total)
}

/// Truncated large-Ω expansion of the convolution. `order` is 0 or 1.
pub fn convolve_expansion(spec: &KernelSpec, f: &TestPath, t: f64, order: u32) -> Result<f64> {
    spec.validate()?;
    if order > 1 {
        return Err(Error::Domain(format!("expansion order must be 0 or 1, got {order}")));
    }
    let w = spec.omega;
    let mut v = match spec.kind {
        KernelKind::RealPart => FRAC_PI_2 * f.value(t),
        KernelKind::ImaginaryPart => -w * f.value(t) + FRAC_PI_2 * f.derivative(1, t),
    };
    if order == 1 {
        v -= match spec.kind {
            KernelKind::RealPart => f.derivative(1, t),
            KernelKind::ImaginaryPart => f.derivative(2, t),
        } / w;
    }
    Ok(spec.prefactor * v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderStatus {
    Pass,
    Fail,
    /// Differences sit at the quadrature noise floor; no slope can be measured.
    FloorLimited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationPoint {
    pub omega: f64,
    pub direct: f64,
    pub expansion: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub kind: KernelKind,
    pub order: u32,
    pub t: f64,
    pub points: Vec<TruncationPoint>,
    /// Least-squares slope of log error against log Ω; `None` when floor-limited.
    pub slope: Option<f64>,
    pub status: OrderStatus,
}

impl TruncationReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("omega,direct,expansion,abs_error\n");
        for p in &self.points {
            s.push_str(&format!("{:e},{:e},{:e},{:e}\n", p.omega, p.direct, p.expansion, p.abs_error));
        }
        s
    }
}

/// Required decay of the truncation error.
pub const REQUIRED_SLOPE: f64 = -2.0;

/// Measures how fast the order-`order` expansion error shrinks with Ω.
pub fn truncation_order_check(
    kind: KernelKind,
    f: &TestPath,
    t: f64,
    omegas: &[f64],
    order: u32,
) -> Result<TruncationReport> {
    if omegas.len() < 3 {
        return Err(Error::Domain(format!(
            "slope needs at least 3 cut-off values, got {}",
            omegas.len()
        )));
    }
    if omegas.windows(2).any(|p| !(p[1] > p[0])) || !(omegas[0] > 0.0) {
        return Err(Error::Domain("cut-off ladder must be positive and strictly increasing".into()));
    }
    let mut points = Vec::with_capacity(omegas.len());
    let mut floor_hit = false;
    for &w in omegas {
        let spec = KernelSpec::unit(kind, w)?;
        let direct = convolve_direct(&spec, f, t)?;
        let expansion = convolve_expansion(&spec, f, t, order)?;
        let abs_error = (direct.value - expansion).abs();
        let floor = 10.0 * (direct.error + DIRECT_REL_TOL * direct.value.abs());
        if abs_error <= floor || abs_error == 0.0 {
            floor_hit = true;
        }
        points.push(TruncationPoint { omega: w, direct: direct.value, expansion, abs_error });
    }
    let (slope, status) = if floor_hit {
        (None, OrderStatus::FloorLimited)
    } else {
        let xs: Vec<f64> = points.iter().map(|p| p.omega.ln()).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.abs_error.ln()).collect();
        let s = least_squares_slope(&xs, &ys);
        (Some(s), if s <= REQUIRED_SLOPE { OrderStatus::Pass } else { OrderStatus::Fail })
    };
    Ok(TruncationReport { kind, order, t, points, slope, status })
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
