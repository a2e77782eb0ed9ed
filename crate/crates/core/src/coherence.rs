//! l1-norm of coherence with the diagonal packets removed.
//!
//! Two ways of removing the diagonal packets are supported:
//!
//! * `band`: zero `|ξ−η| ≤ w` in every sampled field.
//! * `component`: zero the band once in the initial state and evolve the
//!   remaining off-diagonal component on its own. The equation of motion is
//!   linear, so this is the exact evolution of the coherent part, and
//!   coherence that drifts towards the diagonal keeps being counted.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{Observer, Sample};
use crate::grid::{DensityField, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    Band,
    #[default]
    Component,
}

impl MaskMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MaskMode::Band => "band",
            MaskMode::Component => "component",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    #[serde(default)]
    pub mode: MaskMode,
    /// Band half-width in thermal wavelengths.
    pub w: f64,
}

impl MaskSpec {
    pub fn new(mode: MaskMode, w: f64) -> Self {
        MaskSpec { mode, w }
    }

    /// Checks `0 < w < Δξ`.
    pub fn validate(&self, separation: f64) -> Result<()> {
        if !(self.w > 0.0) || !self.w.is_finite() {
            return Err(Error::config("mask.w", format!("band half-width must be positive, got {}", self.w)));
        }
        if self.w >= separation {
            return Err(Error::config(
                "mask.w",
                format!("band half-width {} would swallow the off-diagonal peaks at separation {separation}", self.w),
            ));
        }
        Ok(())
    }
}

/// Copy of `f` with every point of `|ξ−η| ≤ w` set to zero.
pub fn mask_offdiagonal(f: &DensityField, m: &MaskSpec) -> DensityField {
    let mut out = f.clone();
    let x = f.grid().coords();
    let n = x.len();
    let vals = out.values_mut();
    for i in 0..n {
        for j in 0..n {
            if (x[i] - x[j]).abs() <= m.w {
                vals[i * n + j] = C64::new(0.0, 0.0);
            }
        }
    }
    out
}

/// `h² Σ |ρ|` over the whole grid.
pub fn l1_norm(f: &DensityField) -> f64 {
    let h = f.grid().spacing();
    h * h * f.values().iter().map(|v| v.norm()).sum::<f64>()
}

/// `h² Σ |ρ|` outside the band `|ξ−η| ≤ w`.
pub fn l1_coherence(f: &DensityField, m: &MaskSpec) -> f64 {
    let x = f.grid().coords();
    let n = x.len();
    let h = f.grid().spacing();
    let vals = f.values();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if (x[i] - x[j]).abs() > m.w {
                acc += vals[i * n + j].norm();
            }
        }
    }
    h * h * acc
}

/// Coherence carried by a sampled field under the given mode. In component
/// mode the field is already the evolved off-diagonal part.
pub fn sample_coherence(f: &DensityField, m: &MaskSpec) -> f64 {
    match m.mode {
        MaskMode::Band => l1_coherence(f, m),
        MaskMode::Component => l1_norm(f),
    }
}

/// Initial condition to evolve for a given mask: the full state for `band`,
/// the off-diagonal part for `component`.
pub fn evolved_initial_state(rho0: &DensityField, m: &MaskSpec) -> DensityField {
    match m.mode {
        MaskMode::Band => rho0.clone(),
        MaskMode::Component => mask_offdiagonal(rho0, m),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceSeries {
    pub mask: MaskSpec,
    pub tau: Vec<f64>,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl CoherenceSeries {
    /// Sorts `(τ, C)` pairs by time and normalises to the earliest one.
    pub fn from_raw(mask: MaskSpec, mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Numerical("coherence series is empty".into()));
        }
        if points.iter().any(|p| !p.0.is_finite() || !(p.1 >= 0.0)) {
            return Err(Error::Numerical("coherence samples must be finite and non-negative".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let c0 = points[0].1;
        if !(c0 > 0.0) || !c0.is_finite() {
            return Err(Error::Numerical(format!(
                "cannot normalise coherence series: first sample is {c0}"
            )));
        }
        Ok(CoherenceSeries {
            mask,
            tau: points.iter().map(|p| p.0).collect(),
            raw: points.iter().map(|p| p.1).collect(),
            normalized: points.iter().map(|p| p.1 / c0).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau,c_raw,c_normalized,mask_w\n");
        for k in 0..self.len() {
            let _ = writeln!(s, "{:e},{:e},{:e},{:e}", self.tau[k], self.raw[k], self.normalized[k], self.mask.w);
        }
        s
    }

    /// Parses the layout written by [`CoherenceSeries::to_csv`]. The mask mode
    /// is not stored in the file and has to be supplied.
    pub fn from_csv(text: &str, mode: MaskMode) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty coherence CSV".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let idx = |name: &str| {
            cols.iter()
                .position(|c| *c == name)
                .ok_or_else(|| Error::Format(format!("coherence CSV lacks column '{name}'")))
        };
        let (it, ic, iw) = (idx("tau")?, idx("c_raw")?, idx("mask_w")?);
        let mut points = Vec::new();
        let mut w = f64::NAN;
        for (k, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let get = |i: usize| -> Result<f64> {
                fields
                    .get(i)
                    .ok_or_else(|| Error::Format(format!("row {}: missing column", k + 2)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {}: {e}", k + 2)))
            };
            points.push((get(it)?, get(ic)?));
            w = get(iw)?;
        }
        CoherenceSeries::from_raw(MaskSpec::new(mode, w), points)
    }
}

/// Builds a series from sampled fields in any order.
pub fn coherence_series(fields: &[DensityField], m: &MaskSpec) -> Result<CoherenceSeries> {
    let points = fields.iter().map(|f| (f.tau, sample_coherence(f, m))).collect();
    CoherenceSeries::from_raw(*m, points)
}

/// Records coherence at every sample of a run.
#[derive(Debug, Clone)]
pub struct CoherenceObserver {
    pub mask: MaskSpec,
    pub points: Vec<(f64, f64)>,
}

impl CoherenceObserver {
    pub fn new(mask: MaskSpec) -> Self {
        CoherenceObserver { mask, points: Vec::new() }
    }

    pub fn into_series(self) -> Result<CoherenceSeries> {
        CoherenceSeries::from_raw(self.mask, self.points)
    }
}

impl Observer for CoherenceObserver {
    fn sample(&mut self, field: &DensityField, _sample: &Sample) -> Result<()> {
        self.points.push((field.tau, sample_coherence(field, &self.mask)));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_cat_state, make_grid};
    use std::f64::consts::PI;

    fn cat() -> DensityField {
        build_cat_state(&make_grid(201, 12.5).unwrap(), 7.07, 1.0).unwrap()
    }

    #[test]
    fn band_mask_geometry() {
        let rho = cat();
        let m = MaskSpec::new(MaskMode::Band, 3.535);
        let masked = mask_offdiagonal(&rho, &m);
        let g = rho.grid();
        let (a, b) = (g.nearest_index(-3.535), g.nearest_index(3.535));
        assert_eq!(masked.get(a, a), C64::new(0.0, 0.0));
        assert_eq!(masked.get(b, b), C64::new(0.0, 0.0));
        assert_eq!(masked.get(a, b), rho.get(a, b));
        assert_eq!(masked.get(b, a), rho.get(b, a));
    }

    #[test]
    fn zero_field() {
        let z = DensityField::zeros(&make_grid(33, 4.0).unwrap());
        let m = MaskSpec::new(MaskMode::Band, 1.0);
        assert_eq!(l1_coherence(&z, &m), 0.0);
        assert_eq!(mask_offdiagonal(&z, &m).max_abs(), 0.0);
    }

    fn erf(x: f64) -> f64 {
        let q = crate::quad::integrate(|t| (-t * t).exp(), 0.0, x.abs(), 1e-14, 0.0).unwrap();
        x.signum() * 2.0 / PI.sqrt() * q.value
    }

    // ψ = a[G(x+Δ/2) + G(x−Δ/2)] with G(u) = exp(−u²/4σ²). Each packet pair
    // contributes a²·4πσ²·P(|Q+δ| > w), Q ~ N(0, 4σ²), δ the pair offset.
    fn l1_oracle(sep: f64, sigma: f64, w: f64) -> (f64, f64) {
        let a2 = 1.0 / (2.0 * (2.0 * PI).sqrt() * sigma * (1.0 + (-sep * sep / (8.0 * sigma * sigma)).exp()));
        let pair = a2 * 4.0 * PI * sigma * sigma;
        let cdf = |z: f64| 0.5 * (1.0 + erf(z / (2.0 * sigma * 2f64.sqrt())));
        let diag_out = 2.0 * (1.0 - cdf(w));
        let off_out = 1.0 - cdf(w - sep) + cdf(-w - sep);
        (4.0 * pair, pair * (2.0 * diag_out + 2.0 * off_out))
    }

    #[test]
    fn cat_state_masked_mass_matches_gaussian_integrals() {
        let rho = cat();
        // cut halfway between grid diagonals so no point sits on the edge
        let w = 3.5 + 0.0625;
        let m = MaskSpec::new(MaskMode::Band, w);
        let (total, outside) = l1_oracle(7.07, 1.0, w);
        let full = l1_norm(&rho);
        let c = l1_coherence(&rho, &m);
        assert!((full - total).abs() < 1e-3 * total, "{full} vs {total}");
        assert!((c - outside).abs() < 2e-3 * outside, "{c} vs {outside}");
        // about half of the l1 mass sits in the off-diagonal peaks
        assert!((c / full - 0.5).abs() < 0.05);
    }

    #[test]
    fn homogeneity_and_hermitian_symmetry() {
        let rho = cat();
        let m = MaskSpec::new(MaskMode::Band, 3.0);
        let c = l1_coherence(&rho, &m);
        let mut scaled = rho.clone();
        scaled.scale(C64::new(0.0, -2.5));
        assert!((l1_coherence(&scaled, &m) - 2.5 * c).abs() < 1e-12 * c);
        let n = rho.grid().n();
        let mut adj = rho.clone();
        for i in 0..n {
            for j in 0..n {
                adj.set(i, j, rho.get(j, i).conj());
            }
        }
        assert_eq!(l1_coherence(&adj, &m), c);
    }

    #[test]
    fn monotone_in_width() {
        let rho = cat();
        let mut last = f64::INFINITY;
        for w in [0.5, 1.5, 2.5, 3.5, 5.0, 7.0] {
            let c = l1_coherence(&rho, &MaskSpec::new(MaskMode::Band, w));
            assert!(c <= last);
            last = c;
        }
    }

    #[test]
    fn component_mode_counts_everything_after_the_initial_cut() {
        let rho = cat();
        let m = MaskSpec::new(MaskMode::Component, 3.5);
        let start = evolved_initial_state(&rho, &m);
        assert_eq!(sample_coherence(&start, &m), l1_coherence(&rho, &m));
        let b = MaskSpec::new(MaskMode::Band, 3.5);
        assert_eq!(evolved_initial_state(&rho, &b), rho);
    }

    #[test]
    fn mask_validation() {
        assert!(MaskSpec::new(MaskMode::Band, 0.0).validate(7.0).is_err());
        assert!(MaskSpec::new(MaskMode::Band, 7.0).validate(7.0).is_err());
        assert!(MaskSpec::new(MaskMode::Band, 3.5).validate(7.0).is_ok());
    }

    #[test]
    fn series_sorting_normalisation_and_csv() {
        let m = MaskSpec::new(MaskMode::Band, 3.5);
        let s = CoherenceSeries::from_raw(m, vec![(0.2, 1.0), (0.0, 4.0), (0.1, 2.0)]).unwrap();
        assert_eq!(s.tau, vec![0.0, 0.1, 0.2]);
        assert_eq!(s.normalized, vec![1.0, 0.5, 0.25]);
        let back = CoherenceSeries::from_csv(&s.to_csv(), MaskMode::Band).unwrap();
        assert_eq!(back, s);
        assert!(CoherenceSeries::from_raw(m, vec![(0.0, 0.0), (1.0, 1.0)]).is_err());
        assert!(CoherenceSeries::from_raw(m, vec![]).is_err());
    }

    #[test]
    fn series_from_fields_is_order_independent() {
        let rho = cat();
        let m = MaskSpec::new(MaskMode::Band, 3.5);
        let mut a = rho.clone();
        a.tau = 0.0;
        let mut b = rho.clone();
        b.scale(C64::new(0.5, 0.0));
        b.tau = 0.3;
        let s1 = coherence_series(&[a.clone(), b.clone()], &m).unwrap();
        let s2 = coherence_series(&[b, a], &m).unwrap();
        assert_eq!(s1, s2);
        assert!((s1.normalized[1] - 0.5).abs() < 1e-14);
    }
}
