//! Fourth-order central finite differences with zero (Dirichlet) ghost cells.
//!
//! First and second derivatives use the five-point stencils
//! `(f₋₂ − 8f₋₁ + 8f₁ − f₂)/12h` and `(−f₋₂ + 16f₋₁ − 30f₀ + 16f₁ − f₂)/12h²`.
//! Mixed and third-order operators are compositions of these.

use rayon::prelude::*;

use crate::grid::{DensityField, C64};

const GHOST: usize = 2;

/// Copy of an `n × n` field surrounded by two rings of zeros.
#[derive(Debug, Clone)]
pub(crate) struct Padded {
    n: usize,
    stride: usize,
    data: Vec<C64>,
}

impl Padded {
    pub(crate) fn new(n: usize) -> Self {
        let stride = n + 2 * GHOST;
        Padded {
            n,
            stride,
            data: vec![C64::new(0.0, 0.0); stride * stride],
        }
    }

    pub(crate) fn load(&mut self, src: &[C64]) {
        let n = self.n;
        debug_assert_eq!(src.len(), n * n);
        for (i, row) in src.chunks_exact(n).enumerate() {
            let start = (i + GHOST) * self.stride + GHOST;
            self.data[start..start + n].copy_from_slice(row);
        }
    }

    /// Fill the interior row by row from a per-node function, in parallel.
    pub(crate) fn fill_with<F>(&mut self, f: F)
    where
        F: Fn(usize, usize) -> C64 + Sync,
    {
        let n = self.n;
        let stride = self.stride;
        self.data
            .par_chunks_mut(stride)
            .enumerate()
            .skip(GHOST)
            .take(n)
            .for_each(|(pi, row)| {
                let i = pi - GHOST;
                for j in 0..n {
                    row[j + GHOST] = f(i, j);
                }
            });
    }

    #[inline(always)]
    fn at(&self, i: usize, j: usize, di: isize, dj: isize) -> C64 {
        let r = (i + GHOST) as isize + di;
        let c = (j + GHOST) as isize + dj;
        self.data[r as usize * self.stride + c as usize]
    }

    #[inline(always)]
    pub(crate) fn value(&self, i: usize, j: usize) -> C64 {
        self.at(i, j, 0, 0)
    }

    #[inline(always)]
    pub(crate) fn d_xi(&self, i: usize, j: usize, inv12h: f64) -> C64 {
        let near = self.at(i, j, 1, 0) - self.at(i, j, -1, 0);
        let far = self.at(i, j, 2, 0) - self.at(i, j, -2, 0);
        (near * 8.0 - far) * inv12h
    }

    #[inline(always)]
    pub(crate) fn d_eta(&self, i: usize, j: usize, inv12h: f64) -> C64 {
        let near = self.at(i, j, 0, 1) - self.at(i, j, 0, -1);
        let far = self.at(i, j, 0, 2) - self.at(i, j, 0, -2);
        (near * 8.0 - far) * inv12h
    }

    #[inline(always)]
    pub(crate) fn d2_xi(&self, i: usize, j: usize, inv12h2: f64) -> C64 {
        let near = self.at(i, j, 1, 0) + self.at(i, j, -1, 0);
        let far = self.at(i, j, 2, 0) + self.at(i, j, -2, 0);
        (near * 16.0 - far - self.at(i, j, 0, 0) * 30.0) * inv12h2
    }

    #[inline(always)]
    pub(crate) fn d2_eta(&self, i: usize, j: usize, inv12h2: f64) -> C64 {
        let near = self.at(i, j, 0, 1) + self.at(i, j, 0, -1);
        let far = self.at(i, j, 0, 2) + self.at(i, j, 0, -2);
        (near * 16.0 - far - self.at(i, j, 0, 0) * 30.0) * inv12h2
    }
}

/// Derivative operators available on a [`DensityField`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derivative {
    /// `∂_ξ`
    Xi,
    /// `∂_η`
    Eta,
    /// `∂²_ξ`
    XiXi,
    /// `∂²_η`
    EtaEta,
    /// `∂_ξ ∂_η`, composed from two first-derivative stencils.
    XiEta,
    /// `∂_ξ − ∂_η`
    Minus,
    /// `∂_ξ + ∂_η`
    Plus,
    /// `(∂_ξ − ∂_η)² = ∂²_ξ + ∂²_η − 2 ∂_ξ ∂_η`
    MinusSquared,
    /// `∂²_ξ − ∂²_η`
    LaplaceDiff,
    /// `(∂_ξ − ∂_η)(∂²_ξ − ∂²_η)`, a first-derivative stencil applied to the second-derivative result.
    MinusLaplaceDiff,
}

/// Precomputed reciprocal spacings.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Scales {
    pub inv12h: f64,
    pub inv12h2: f64,
}

impl Scales {
    pub(crate) fn new(h: f64) -> Self {
        Scales {
            inv12h: 1.0 / (12.0 * h),
            inv12h2: 1.0 / (12.0 * h * h),
        }
    }
}

/// Apply `which` to `f`, returning a new field with the same time stamp.
pub fn apply_derivative(f: &DensityField, which: Derivative) -> DensityField {
    let mut out = DensityField::zeros(f.grid());
    out.tau = f.tau;
    apply_derivative_into(f, which, out.values_mut());
    out
}

/// Apply `which` to `f`, writing into a caller-provided `n × n` buffer.
pub fn apply_derivative_into(f: &DensityField, which: Derivative, out: &mut [C64]) {
    let n = f.grid().n();
    assert_eq!(out.len(), n * n, "output buffer size mismatch");
    let s = Scales::new(f.grid().spacing());
    let mut p = Padded::new(n);
    p.load(f.values());

    let inner = match which {
        Derivative::XiEta | Derivative::MinusSquared => {
            let mut q = Padded::new(n);
            q.fill_with(|i, j| p.d_eta(i, j, s.inv12h));
            Some(q)
        }
        Derivative::MinusLaplaceDiff => {
            let mut q = Padded::new(n);
            q.fill_with(|i, j| p.d2_xi(i, j, s.inv12h2) - p.d2_eta(i, j, s.inv12h2));
            Some(q)
        }
        _ => None,
    };

    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, o) in row.iter_mut().enumerate() {
            *o = match which {
                Derivative::Xi => p.d_xi(i, j, s.inv12h),
                Derivative::Eta => p.d_eta(i, j, s.inv12h),
                Derivative::XiXi => p.d2_xi(i, j, s.inv12h2),
                Derivative::EtaEta => p.d2_eta(i, j, s.inv12h2),
                Derivative::XiEta => inner.as_ref().unwrap().d_xi(i, j, s.inv12h),
                Derivative::Minus => p.d_xi(i, j, s.inv12h) - p.d_eta(i, j, s.inv12h),
                Derivative::Plus => p.d_xi(i, j, s.inv12h) + p.d_eta(i, j, s.inv12h),
                Derivative::MinusSquared => {
                    let mixed = inner.as_ref().unwrap().d_xi(i, j, s.inv12h);
                    p.d2_xi(i, j, s.inv12h2) + p.d2_eta(i, j, s.inv12h2) - mixed * 2.0
                }
                Derivative::LaplaceDiff => p.d2_xi(i, j, s.inv12h2) - p.d2_eta(i, j, s.inv12h2),
                Derivative::MinusLaplaceDiff => {
                    let q = inner.as_ref().unwrap();
                    q.d_xi(i, j, s.inv12h) - q.d_eta(i, j, s.inv12h)
                }
            };
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn real(g: &crate::grid::Grid2D, f: impl Fn(f64, f64) -> f64) -> DensityField {
        DensityField::from_fn(g, |x, y| C64::new(f(x, y), 0.0))
    }

    /// Interior indices far enough from the boundary that every stencil,
    /// including nested ones, only reads genuine samples.
    fn interior(n: usize) -> impl Iterator<Item = (usize, usize)> {
        (4..n - 4).flat_map(move |i| (4..n - 4).map(move |j| (i, j)))
    }

    #[test]
    fn second_derivative_of_quadratic() {
        let g = make_grid(65, 4.0).unwrap();
        let f = real(&g, |x, _| x * x);
        let d = apply_derivative(&f, Derivative::XiXi);
        for (i, j) in interior(65) {
            assert!((d.get(i, j) - C64::new(2.0, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn first_derivative_of_cubic() {
        let g = make_grid(65, 8.0).unwrap();
        let f = real(&g, |x, _| x * x * x);
        let d = apply_derivative(&f, Derivative::Xi);
        let i = g.nearest_index(2.0);
        assert!((d.get(i, 30).re - 12.0).abs() < 1e-10);
    }

    #[test]
    fn exact_on_polynomials() {
        let g = make_grid(65, 3.0).unwrap();
        let f = real(&g, |x, y| x * x * x - 2.0 * x * x * y + y * y * y + x * y);
        let cases: [(Derivative, fn(f64, f64) -> f64); 8] = [
            (Derivative::Xi, |x, y| 3.0 * x * x - 4.0 * x * y + y),
            (Derivative::Eta, |x, y| -2.0 * x * x + 3.0 * y * y + x),
            (Derivative::XiXi, |x, y| 6.0 * x - 4.0 * y),
            (Derivative::EtaEta, |_, y| 6.0 * y),
            (Derivative::XiEta, |x, _| -4.0 * x + 1.0),
            (Derivative::LaplaceDiff, |x, y| 6.0 * x - 10.0 * y),
            (Derivative::MinusSquared, |x, y| 6.0 * x - 4.0 * y + 6.0 * y + 8.0 * x - 2.0),
            (Derivative::MinusLaplaceDiff, |_, _| 16.0),
        ];
        for (which, exact) in cases {
            let d = apply_derivative(&f, which);
            for (i, j) in interior(65) {
                let (x, y) = (g.coords()[i], g.coords()[j]);
                let want = exact(x, y);
                assert!(
                    (d.get(i, j).re - want).abs() < 1e-9 * (1.0 + want.abs()),
                    "{which:?} at ({x},{y}): {} vs {want}",
                    d.get(i, j).re
                );
            }
        }
    }

    #[test]
    fn fourth_order_convergence_of_second_derivative() {
        let err = |n: usize| {
            let g = make_grid(n, 4.0).unwrap();
            let f = real(&g, |x, _| x.sin());
            let d = apply_derivative(&f, Derivative::XiXi);
            let mut worst = 0.0f64;
            let x = g.coords();
            for i in 0..n {
                if x[i].abs() <= 2.0 {
                    worst = worst.max((d.get(i, n / 2).re + x[i].sin()).abs());
                }
            }
            worst
        };
        let ratio = err(33) / err(65);
        // Fourth order: error ratio 16 when h halves.
        assert!((ratio - 16.0).abs() < 1.6, "ratio {ratio}");
    }

    #[test]
    fn boundary_uses_zero_extension() {
        let g = make_grid(33, 4.0).unwrap();
        let f = real(&g, |_, _| 1.0);
        let d = apply_derivative(&f, Derivative::Xi);
        // Left edge: (8·1 − 1)/(12h), ghosts are zero.
        let want = 7.0 / (12.0 * g.spacing());
        assert!((d.get(0, 10).re - want).abs() < 1e-12);
    }
}
