//! Uniform position grid and the sampled density matrix `ρ(ξ, η)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Smallest admissible number of points per axis.
pub const MIN_POINTS: usize = 33;

/// Square grid `[-L, L]²` with `N` points per axis (odd, so the origin is a node).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    n: usize,
    half_width: f64,
    h: f64,
    #[serde(skip)]
    coords: Vec<f64>,
}

impl Grid2D {
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n < MIN_POINTS || n.is_multiple_of(2) {
            return Err(Error::config(
                "grid.n",
                format!("need an odd point count >= {MIN_POINTS}, got {n}"),
            ));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::config(
                "grid.half_width",
                format!("must be positive and finite, got {half_width}"),
            ));
        }
        let h = 2.0 * half_width / (n - 1) as f64;
        let mid = (n / 2) as isize;
        // Symmetric construction: coords[mid + k] == -coords[mid - k] exactly.
        let coords = (0..n as isize).map(|i| (i - mid) as f64 * h).collect();
        Ok(Grid2D {
            n,
            half_width,
            h,
            coords,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Axis coordinates, shared by ξ and η.
    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Index of the node closest to `x` along an axis, clamped to the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let k = ((x + self.half_width) / self.h).round();
        k.clamp(0.0, (self.n - 1) as f64) as usize
    }
}

/// `make_grid(N, L)`.
pub fn make_grid(n: usize, half_width: f64) -> Result<Grid2D> {
    Grid2D::new(n, half_width)
}

/// Density matrix sampled on a [`Grid2D`], row-major with `ξ` as the row index.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: Grid2D,
    values: Vec<C64>,
    /// Time stamp in units of `1/γ`.
    pub tau: f64,
}

impl DensityField {
    pub fn zeros(grid: &Grid2D) -> Self {
        DensityField {
            values: vec![C64::new(0.0, 0.0); grid.len()],
            grid: grid.clone(),
            tau: 0.0,
        }
    }

    pub fn from_values(grid: &Grid2D, values: Vec<C64>, tau: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Format(format!(
                "expected {} values for a {}x{} grid, got {}",
                grid.len(),
                grid.n(),
                grid.n(),
                values.len()
            )));
        }
        Ok(DensityField {
            grid: grid.clone(),
            values,
            tau,
        })
    }

    /// Samples `f(ξ, η)` at every node.
    pub fn from_fn(grid: &Grid2D, f: impl Fn(f64, f64) -> C64) -> Self {
        let x = grid.coords();
        let values = x
            .iter()
            .flat_map(|&xi| x.iter().map(move |&eta| (xi, eta)))
            .map(|(xi, eta)| f(xi, eta))
            .collect();
        DensityField {
            grid: grid.clone(),
            values,
            tau: 0.0,
        }
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[C64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.values[i * self.grid.n() + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        let n = self.grid.n();
        self.values[i * n + j] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&mut self, c: C64) {
        self.values.iter_mut().for_each(|z| *z *= c);
    }

    /// `a·self + b·other`, both on the same grid.
    pub fn combine(&self, a: C64, other: &DensityField, b: C64) -> DensityField {
        assert_eq!(self.grid.n(), other.grid.n(), "grid mismatch");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        DensityField {
            grid: self.grid.clone(),
            values,
            tau: self.tau,
        }
    }

    /// Trapezoid-rule trace `∫ ρ(x, x) dx` along the diagonal.
    pub fn trace(&self) -> C64 {
        let n = self.grid.n();
        let mut sum = C64::new(0.0, 0.0);
        for i in 0..n {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            sum += self.get(i, i) * w;
        }
        sum * self.grid.spacing()
    }

    /// `max |ρ(ξ,η) − conj ρ(η,ξ)|`.
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.grid.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let r = (self.get(i, j) - self.get(j, i).conj()).norm();
                worst = worst.max(r);
            }
        }
        worst
    }

    /// Largest `|ρ|` on the two outermost rings of the grid.
    pub fn boundary_mass(&self) -> f64 {
        let n = self.grid.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            if i < 2 || i >= n - 2 {
                for j in 0..n {
                    worst = worst.max(self.get(i, j).norm());
                }
            } else {
                for j in [0, 1, n - 2, n - 1] {
                    worst = worst.max(self.get(i, j).norm());
                }
            }
        }
        worst
    }

    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            trace: self.trace(),
            herm_residual: self.hermiticity_residual(),
            boundary_mass: self.boundary_mass(),
        }
    }
}

/// Health indicators of a density field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub trace: C64,
    pub herm_residual: f64,
    pub boundary_mass: f64,
}

/// Normalised Gaussian amplitude with position spread `width`.
fn packet(u: f64, width: f64) -> f64 {
    (-u * u / (4.0 * width * width)).exp()
}

/// Pure state `ρ = ψ ψ*` for a real wave function sampled on the grid, normalised to unit trace.
pub fn pure_state(grid: &Grid2D, psi: impl Fn(f64) -> C64) -> DensityField {
    let x = grid.coords();
    let amp: Vec<C64> = x.iter().map(|&u| psi(u)).collect();
    let n = grid.n();
    let h = grid.spacing();
    let norm: f64 = amp
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            w * a.norm_sqr()
        })
        .sum::<f64>()
        * h;
    let mut values = Vec::with_capacity(grid.len());
    for a in &amp {
        for b in &amp {
            values.push(a * b.conj() / norm);
        }
    }
    DensityField {
        grid: grid.clone(),
        values,
        tau: 0.0,
    }
}

/// Two-packet superposition `ψ ∝ G(ξ − Δξ/2) + G(ξ + Δξ/2)`, where `G` is a
/// Gaussian amplitude whose `|G|²` has standard deviation `width`.
pub fn build_cat_state(grid: &Grid2D, separation: f64, width: f64) -> Result<DensityField> {
    if !(width > 0.0) {
        return Err(Error::config("state.width", format!("must be positive, got {width}")));
    }
    if !(separation >= 0.0) {
        return Err(Error::config(
            "state.separation",
            format!("must be non-negative, got {separation}"),
        ));
    }
    let support = separation + 6.0 * width;
    if support >= 2.0 * grid.half_width() {
        return Err(Error::config(
            "grid.half_width",
            format!(
                "state support {support:.3} does not fit the domain width {:.3}",
                2.0 * grid.half_width()
            ),
        ));
    }
    let a = 0.5 * separation;
    Ok(pure_state(grid, |u| {
        C64::new(packet(u - a, width) + packet(u + a, width), 0.0)
    }))
}

/// Single Gaussian packet centred at `center`.
pub fn build_gaussian(grid: &Grid2D, center: f64, width: f64) -> DensityField {
    pure_state(grid, |u| C64::new(packet(u - center, width), 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spacing() {
        assert_eq!(make_grid(33, 16.0).unwrap().spacing(), 1.0);
        assert_eq!(make_grid(257, 16.0).unwrap().spacing(), 0.125);
        assert!(make_grid(34, 16.0).is_err());
        assert!(make_grid(31, 16.0).is_err());
        assert!(make_grid(33, 0.0).is_err());
    }

    #[test]
    fn grid_is_symmetric_and_contains_origin() {
        let g = make_grid(65, 7.3).unwrap();
        let x = g.coords();
        assert_eq!(x[32], 0.0);
        for k in 0..65 {
            assert_eq!(x[k], -x[64 - k]);
        }
        assert_eq!(x[0], -7.3);
    }

    #[test]
    fn cat_state_four_peaks() {
        let g = make_grid(257, 16.0).unwrap();
        let rho = build_cat_state(&g, 7.0, 1.0).unwrap();
        let p = g.nearest_index(3.5);
        let m = g.nearest_index(-3.5);
        let diag = rho.get(p, p).norm();
        let off = rho.get(p, m).norm();
        assert!((diag - off).abs() < 1e-12 * diag);
        assert!((rho.get(m, m).norm() - diag).abs() < 1e-12 * diag);
        assert!(rho.get(g.nearest_index(0.0), g.nearest_index(0.0)).norm() < 0.5 * diag);
    }

    #[test]
    fn cat_state_trace_and_symmetry() {
        let g = make_grid(257, 16.0).unwrap();
        let rho = build_cat_state(&g, 7.07, 1.0).unwrap();
        let d = rho.diagnostics();
        assert!((d.trace - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert_eq!(d.herm_residual, 0.0);
        assert!(d.boundary_mass < 1e-10 * rho.max_abs());
    }

    #[test]
    fn degenerate_cat_state_is_single_gaussian() {
        let g = make_grid(65, 8.0).unwrap();
        let cat = build_cat_state(&g, 0.0, 1.0).unwrap();
        let single = build_gaussian(&g, 0.0, 1.0);
        for (a, b) in cat.values().iter().zip(single.values()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn cat_state_support_must_fit() {
        let g = make_grid(65, 4.0).unwrap();
        assert!(build_cat_state(&g, 7.07, 1.0).is_err());
    }

    #[test]
    fn diagnostics_of_zero_field() {
        let g = make_grid(33, 4.0).unwrap();
        let d = DensityField::zeros(&g).diagnostics();
        assert_eq!(d.trace, C64::new(0.0, 0.0));
        assert_eq!(d.herm_residual, 0.0);
        assert_eq!(d.boundary_mass, 0.0);
    }

    #[test]
    fn hermiticity_residual_of_imaginary_pair() {
        let g = make_grid(33, 4.0).unwrap();
        let mut f = DensityField::zeros(&g);
        f.set(3, 7, C64::new(0.0, 1.0));
        f.set(7, 3, C64::new(0.0, 1.0));
        assert!((f.hermiticity_residual() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn cat_state_is_positive_semidefinite() {
        use nalgebra::DMatrix;
        let g = make_grid(41, 8.0).unwrap();
        let rho = build_cat_state(&g, 5.0, 0.8).unwrap();
        let n = g.n();
        let m = DMatrix::from_fn(n, n, |i, j| rho.get(i, j));
        let eig = m.symmetric_eigenvalues();
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-12, "min eigenvalue {min}");
    }
}
