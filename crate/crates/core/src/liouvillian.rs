//! Markovian Liouvillian and the six first-order memory corrections, in units
//! where lengths are thermal wavelengths and times are `1/γ`.
//!
//! With `s = ξ − η`, `∂₋ = ∂_ξ − ∂_η`, `∂₊ = ∂_ξ + ∂_η`, `Δ₋ = ∂²_ξ − ∂²_η`:
//!
//! | term | operator |
//! |------|----------|
//! | M  | `iDΔ₋ − i(V̂(ξ) − V̂(η)) − s∂₋ − s²` |
//! | K  | `−2iDΔ₋` |
//! | NU | `−2iD[(s/2)∂₋Δ₋ + 2s∂₊]` |
//! | V  | `3i s(V̂′(ξ) − V̂′(η)) + 4i s(V̂(ξ) − V̂(η))∂₋` |
//! | RD | `8s∂₋ + 16s²` |
//! | AS | `4s²∂₋²` |
//! | P  | `3s³∂₋` |
//!
//! and `∂ρ/∂τ = [M + R_Ω (K + NU + V + RD + AS + P)] ρ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DensityField, Grid2D, C64};
use crate::params::{check_r_omega, DimensionlessParams};
use crate::stencil::{Padded, Scales};

/// One operator of the master equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Markov,
    K,
    Nu,
    V,
    Rd,
    As,
    P,
}

impl Term {
    pub const CORRECTIONS: [Term; 6] = [Term::K, Term::Nu, Term::V, Term::Rd, Term::As, Term::P];
}

/// Weights of the three parts of the Markovian operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarkovParts {
    /// Hamiltonian part (kinetic plus potential).
    pub kinetic: f64,
    pub relaxation: f64,
    pub decoherence: f64,
}

impl Default for MarkovParts {
    fn default() -> Self {
        MarkovParts {
            kinetic: 1.0,
            relaxation: 1.0,
            decoherence: 1.0,
        }
    }
}

/// Weights of the memory corrections; each multiplies `R_Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrectionWeights {
    pub k: f64,
    pub nu: f64,
    pub v: f64,
    pub rd: f64,
    #[serde(rename = "as")]
    pub as_: f64,
    pub p: f64,
}

/// All corrections except `L_NU`. In `(c, s)` coordinates that operator
/// carries `s ∂²_s ∂_c`, a diffusion in `s` whose sign follows the sign of
/// `s` times the wavenumber in `c`; half of the spectrum is anti-diffusive
/// and grid-scale noise grows without bound. Use [`CorrectionWeights::all`]
/// to include it anyway.
impl Default for CorrectionWeights {
    fn default() -> Self {
        CorrectionWeights {
            k: 1.0,
            nu: 0.0,
            v: 1.0,
            rd: 1.0,
            as_: 1.0,
            p: 1.0,
        }
    }
}

impl CorrectionWeights {
    /// Every correction at weight 1, `L_NU` included.
    pub fn all() -> Self {
        CorrectionWeights {
            nu: 1.0,
            ..CorrectionWeights::default()
        }
    }

    pub fn none() -> Self {
        CorrectionWeights {
            k: 0.0,
            nu: 0.0,
            v: 0.0,
            rd: 0.0,
            as_: 0.0,
            p: 0.0,
        }
    }

    pub fn weight(&self, t: Term) -> f64 {
        match t {
            Term::Markov => 1.0,
            Term::K => self.k,
            Term::Nu => self.nu,
            Term::V => self.v,
            Term::Rd => self.rd,
            Term::As => self.as_,
            Term::P => self.p,
        }
    }

    fn any(&self) -> bool {
        Term::CORRECTIONS.iter().any(|&t| self.weight(t) != 0.0)
    }
}

/// Dimensionless potential `V̂` and its derivative sampled on the grid axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPotential {
    pub values: Vec<f64>,
    pub derivative: Vec<f64>,
}

impl SampledPotential {
    /// `V̂(ξ) = κ ξ² / 2`.
    pub fn harmonic(grid: &Grid2D, kappa: f64) -> Self {
        let x = grid.coords();
        SampledPotential {
            values: x.iter().map(|&u| 0.5 * kappa * u * u).collect(),
            derivative: x.iter().map(|&u| kappa * u).collect(),
        }
    }

    pub fn from_samples(grid: &Grid2D, values: Vec<f64>, derivative: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() || derivative.len() != grid.n() {
            return Err(Error::config(
                "terms.potential",
                format!("expected {} samples per array", grid.n()),
            ));
        }
        Ok(SampledPotential { values, derivative })
    }
}

/// Term toggles and coefficients composing the right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct TermSet {
    pub r_omega: f64,
    /// Kinetic coefficient `k_B T / (ħγ)`.
    pub d: f64,
    pub markov: MarkovParts,
    pub corrections: CorrectionWeights,
    pub potential: Option<SampledPotential>,
}

impl TermSet {
    /// Free particle with the default corrections (see [`CorrectionWeights`]).
    pub fn new(r_omega: f64, d: f64) -> Self {
        TermSet {
            r_omega,
            d,
            markov: MarkovParts::default(),
            corrections: CorrectionWeights::default(),
            potential: None,
        }
    }

    /// Markovian operator only (no corrections, regardless of `r_omega`).
    pub fn markovian(d: f64) -> Self {
        TermSet {
            corrections: CorrectionWeights::none(),
            ..TermSet::new(0.0, d)
        }
    }

    pub fn from_params(p: &DimensionlessParams, grid: &Grid2D) -> Self {
        TermSet {
            potential: p.harmonic_kappa.map(|k| SampledPotential::harmonic(grid, k)),
            ..TermSet::new(p.r_omega, p.d)
        }
    }

    pub fn validate(&self, grid: &Grid2D) -> Result<()> {
        check_r_omega(self.r_omega)?;
        if !(self.d > 0.0) {
            return Err(Error::config("terms.d", format!("must be positive, got {}", self.d)));
        }
        if let Some(v) = &self.potential {
            if v.values.len() != grid.n() || v.derivative.len() != grid.n() {
                return Err(Error::config("terms.potential", "sample count does not match grid"));
            }
        }
        Ok(())
    }

    fn corrections_active(&self) -> bool {
        self.r_omega != 0.0 && self.corrections.any()
    }
}

/// Which part of the operator a kernel pass evaluates.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Selection {
    Total,
    Only(Term),
}

/// Per-pass coefficients after resolving the selection against the term set.
#[derive(Debug, Clone, Copy, Default)]
struct Coeffs {
    markov: bool,
    corrections: bool,
    k: f64,
    nu: f64,
    v: f64,
    rd: f64,
    as_: f64,
    p: f64,
}

impl Coeffs {
    fn resolve(terms: &TermSet, sel: Selection) -> Self {
        match sel {
            Selection::Total => {
                let r = terms.r_omega;
                let w = &terms.corrections;
                Coeffs {
                    markov: true,
                    corrections: terms.corrections_active(),
                    k: r * w.k,
                    nu: r * w.nu,
                    v: r * w.v,
                    rd: r * w.rd,
                    as_: r * w.as_,
                    p: r * w.p,
                }
            }
            Selection::Only(Term::Markov) => Coeffs {
                markov: true,
                ..Default::default()
            },
            Selection::Only(t) => {
                let mut c = Coeffs {
                    corrections: true,
                    ..Default::default()
                };
                match t {
                    Term::K => c.k = 1.0,
                    Term::Nu => c.nu = 1.0,
                    Term::V => c.v = 1.0,
                    Term::Rd => c.rd = 1.0,
                    Term::As => c.as_ = 1.0,
                    Term::P => c.p = 1.0,
                    Term::Markov => unreachable!(),
                }
                c
            }
        }
    }

    fn needs_mixed(&self) -> bool {
        self.corrections && self.as_ != 0.0
    }

    fn needs_third(&self) -> bool {
        self.corrections && self.nu != 0.0
    }
}

/// Reusable evaluator of the master-equation right-hand side.
///
/// Holds padded scratch copies of the input so repeated evaluations do not allocate.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    terms: TermSet,
    n: usize,
    coords: Vec<f64>,
    h: f64,
    scales: Scales,
    rho: Padded,
    eta_derivative: Padded,
    laplace_diff: Padded,
}

impl Liouvillian {
    pub fn new(grid: &Grid2D, terms: TermSet) -> Result<Self> {
        terms.validate(grid)?;
        let n = grid.n();
        Ok(Liouvillian {
            terms,
            n,
            coords: grid.coords().to_vec(),
            h: grid.spacing(),
            scales: Scales::new(grid.spacing()),
            rho: Padded::new(n),
            eta_derivative: Padded::new(n),
            laplace_diff: Padded::new(n),
        })
    }

    pub fn terms(&self) -> &TermSet {
        &self.terms
    }

    /// `out = L ρ` for the full operator.
    pub fn rhs_into(&mut self, rho: &[C64], out: &mut [C64]) {
        self.eval(rho, out, Selection::Total);
    }

    fn eval(&mut self, rho: &[C64], out: &mut [C64], sel: Selection) {
        let n = self.n;
        assert_eq!(rho.len(), n * n);
        assert_eq!(out.len(), n * n);
        let c = Coeffs::resolve(&self.terms, sel);
        let s = self.scales;
        self.rho.load(rho);
        let p = &self.rho;
        if c.needs_mixed() {
            self.eta_derivative.fill_with(|i, j| p.d_eta(i, j, s.inv12h));
        }
        if c.needs_third() {
            self.laplace_diff
                .fill_with(|i, j| p.d2_xi(i, j, s.inv12h2) - p.d2_eta(i, j, s.inv12h2));
        }

        let d = self.terms.d;
        let mk = self.terms.markov;
        let x = &self.coords;
        let pot = self.terms.potential.as_ref();
        let de = &self.eta_derivative;
        let lap = &self.laplace_diff;
        let i_unit = C64::new(0.0, 1.0);

        out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, o) in row.iter_mut().enumerate() {
                let sep = x[i] - x[j];
                let r = p.value(i, j);
                let dm = p.d_xi(i, j, s.inv12h) - p.d_eta(i, j, s.inv12h);
                let lapdiff = p.d2_xi(i, j, s.inv12h2) - p.d2_eta(i, j, s.inv12h2);
                let (dv, dvp) = match pot {
                    Some(v) => (
                        v.values[i] - v.values[j],
                        v.derivative[i] - v.derivative[j],
                    ),
                    None => (0.0, 0.0),
                };

                let mut acc = C64::new(0.0, 0.0);
                if c.markov {
                    let hamiltonian = i_unit * (lapdiff * d - r * dv);
                    acc = hamiltonian * mk.kinetic
                        - dm * (sep * mk.relaxation)
                        - r * (sep * sep * mk.decoherence);
                }
                if c.corrections {
                    let mut corr = C64::new(0.0, 0.0);
                    if c.k != 0.0 {
                        corr += i_unit * lapdiff * (-2.0 * d * c.k);
                    }
                    if c.nu != 0.0 {
                        let third = lap.d_xi(i, j, s.inv12h) - lap.d_eta(i, j, s.inv12h);
                        let plus = p.d_xi(i, j, s.inv12h) + p.d_eta(i, j, s.inv12h);
                        corr += i_unit * (third * (0.5 * sep) + plus * (2.0 * sep)) * (-2.0 * d * c.nu);
                    }
                    if c.v != 0.0 && pot.is_some() {
                        corr += i_unit * (r * (3.0 * sep * dvp) + dm * (4.0 * sep * dv)) * c.v;
                    }
                    if c.rd != 0.0 {
                        corr += (dm * (8.0 * sep) + r * (16.0 * sep * sep)) * c.rd;
                    }
                    if c.as_ != 0.0 {
                        let mixed = de.d_xi(i, j, s.inv12h);
                        let msq = p.d2_xi(i, j, s.inv12h2) + p.d2_eta(i, j, s.inv12h2) - mixed * 2.0;
                        corr += msq * (4.0 * sep * sep * c.as_);
                    }
                    if c.p != 0.0 {
                        corr += dm * (3.0 * sep * sep * sep * c.p);
                    }
                    acc += corr;
                }
                *o = acc;
            }
        });
    }

    /// Contribution of a single operator, without the `R_Ω` factor.
    pub fn apply_term_into(&mut self, term: Term, rho: &[C64], out: &mut [C64]) {
        self.eval(rho, out, Selection::Only(term));
    }

    /// Bound on the magnitude of the non-kinetic part of the spectrum: the
    /// largest coefficient of each spatially varying term times the norm of its
    /// stencil, maximised over the grid (the kinetic CFL limit is handled separately).
    pub fn pointwise_coefficient_bound(&self) -> f64 {
        let t = &self.terms;
        let smax = 2.0 * self.coords.last().copied().unwrap_or(0.0).abs();
        let h = self.h;
        // Spectral radii of the discrete ∂₋, ∂₋² and ∂₋Δ₋ operators.
        let rho1 = 2.0 * D1_SYMBOL_MAX / h;
        let rho2 = 4.0 * D2_SYMBOL_MAX / (h * h);
        let rho3 = rho1 * 2.0 * D2_SYMBOL_MAX / (h * h);
        let r = if t.corrections_active() { t.r_omega } else { 0.0 };
        let w = &t.corrections;
        let mk = &t.markov;
        let pot_bound = t
            .potential
            .as_ref()
            .map(|v| {
                let span = |a: &[f64]| {
                    let (lo, hi) = a.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                        (lo.min(x), hi.max(x))
                    });
                    hi - lo
                };
                (span(&v.values), span(&v.derivative))
            })
            .unwrap_or((0.0, 0.0));

        let zeroth = (-mk.decoherence + 16.0 * r * w.rd).abs() * smax * smax
            + mk.kinetic * pot_bound.0
            + 3.0 * r * w.v * smax * pot_bound.1;
        let advective = ((-mk.relaxation + 8.0 * r * w.rd).abs() * smax
            + 3.0 * r * w.p * smax.powi(3)
            + 4.0 * r * w.v * smax * pot_bound.0)
            * rho1;
        let diffusive = 4.0 * r * w.as_ * smax * smax * rho2;
        let dispersive = 2.0 * t.d * r * w.nu * (0.5 * smax * rho3 + 2.0 * smax * rho1);
        [zeroth, advective, diffusive, dispersive]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// `max_k |8 sin k − sin 2k| / 6` for the five-point first derivative (times `1/h`).
pub(crate) const D1_SYMBOL_MAX: f64 = 1.372_208_436_3;
/// `max_k |(30 − 32 cos k + 2 cos 2k)/12|` for the five-point second derivative (times `1/h²`).
pub(crate) const D2_SYMBOL_MAX: f64 = 16.0 / 3.0;

fn apply(f: &DensityField, p: &TermSet, sel: Selection) -> DensityField {
    let mut l = Liouvillian::new(f.grid(), p.clone()).expect("valid term set");
    let mut out = DensityField::zeros(f.grid());
    out.tau = f.tau;
    l.eval(f.values(), out.values_mut(), sel);
    out
}

/// Contribution of `term` to `∂ρ/∂τ` (corrections without the `R_Ω` factor).
///
/// # Panics
/// If `p` fails [`TermSet::validate`] for the grid of `f`.
pub fn apply_term(f: &DensityField, p: &TermSet, term: Term) -> DensityField {
    apply(f, p, Selection::Only(term))
}

pub fn apply_markovian(f: &DensityField, p: &TermSet) -> DensityField {
    apply_term(f, p, Term::Markov)
}

pub fn apply_lk(f: &DensityField, p: &TermSet) -> DensityField {
    apply_term(f, p, Term::K)
}

pub fn apply_lnu(f: &DensityField, p: &TermSet) -> DensityField {
    apply_term(f, p, Term::Nu)
}

pub fn apply_lv(f: &DensityField, p: &TermSet) -> DensityField {
    apply_term(f, p, Term::V)
}

pub fn apply_lrd(f: &DensityField, p: &TermSet) -> DensityField {
    apply_term(f, p, Term::Rd)
}

pub fn apply_las(f: &DensityField, p: &TermSet) -> DensityField {
    apply_term(f, p, Term::As)
}

pub fn apply_lp(f: &DensityField, p: &TermSet) -> DensityField {
    apply_term(f, p, Term::P)
}

/// Full right-hand side `L_M ρ + R_Ω Σ w_X L_X ρ`.
pub fn rhs_total(f: &DensityField, p: &TermSet) -> DensityField {
    apply(f, p, Selection::Total)
}

/// Propagation function `σ = [1 − 2R_Ω (ξ − η)(∂_ξ − ∂_η)] ρ`.
pub fn sigma_from_rho(f: &DensityField, r_omega: f64) -> DensityField {
    let n = f.grid().n();
    let s = Scales::new(f.grid().spacing());
    let mut p = Padded::new(n);
    p.load(f.values());
    let x = f.grid().coords().to_vec();
    let mut out = DensityField::zeros(f.grid());
    out.tau = f.tau;
    out.values_mut()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            for (j, o) in row.iter_mut().enumerate() {
                let dm = p.d_xi(i, j, s.inv12h) - p.d_eta(i, j, s.inv12h);
                *o = p.value(i, j) - dm * (2.0 * r_omega * (x[i] - x[j]));
            }
        });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_cat_state, build_gaussian, make_grid};

    /// Complex cubic `Σ c[a][b] ξ^a η^b` differentiated exactly.
    struct Cubic([[C64; 4]; 4]);

    impl Cubic {
        fn sample() -> Self {
            let mut c = [[C64::new(0.0, 0.0); 4]; 4];
            let terms = [
                (0, 0, 1.0, 0.2),
                (1, 0, 0.5, -0.1),
                (0, 1, -0.3, 0.0),
                (2, 0, 0.2, 0.0),
                (1, 1, -0.1, 0.0),
                (0, 2, 0.4, 0.3),
                (3, 0, 0.05, -0.04),
                (2, 1, -0.07, 0.0),
                (1, 2, 0.0, 0.02),
                (0, 3, 0.03, 0.0),
            ];
            for (a, b, re, im) in terms {
                c[a][b] = C64::new(re, im);
            }
            Cubic(c)
        }

        fn d(&self, da: usize, db: usize, x: f64, y: f64) -> C64 {
            let fall = |k: usize, m: usize| (0..m).map(|i| (k - i) as f64).product::<f64>();
            let mut acc = C64::new(0.0, 0.0);
            for a in da..4 {
                for b in db..(4 - a) {
                    acc += self.0[a][b] * fall(a, da) * fall(b, db) * x.powi((a - da) as i32) * y.powi((b - db) as i32);
                }
            }
            acc
        }

        fn field(&self, g: &Grid2D) -> DensityField {
            DensityField::from_fn(g, |x, y| self.d(0, 0, x, y))
        }
    }

    fn expected(term: Term, f: &Cubic, d: f64, kappa: f64, x: f64, y: f64) -> C64 {
        let i = C64::new(0.0, 1.0);
        let s = x - y;
        let v = |u: f64| 0.5 * kappa * u * u;
        let dv = |u: f64| kappa * u;
        let r = f.d(0, 0, x, y);
        let dm = f.d(1, 0, x, y) - f.d(0, 1, x, y);
        let dp = f.d(1, 0, x, y) + f.d(0, 1, x, y);
        let lap = f.d(2, 0, x, y) - f.d(0, 2, x, y);
        let third = f.d(3, 0, x, y) - f.d(1, 2, x, y) - f.d(2, 1, x, y) + f.d(0, 3, x, y);
        let msq = f.d(2, 0, x, y) - f.d(1, 1, x, y) * 2.0 + f.d(0, 2, x, y);
        match term {
            Term::Markov => i * d * lap - i * (v(x) - v(y)) * r - s * dm - s * s * r,
            Term::K => -2.0 * i * d * lap,
            Term::Nu => -2.0 * i * d * (0.5 * s * third + 2.0 * s * dp),
            Term::V => 3.0 * i * s * (dv(x) - dv(y)) * r + 4.0 * i * s * (v(x) - v(y)) * dm,
            Term::Rd => 8.0 * s * dm + 16.0 * s * s * r,
            Term::As => 4.0 * s * s * msq,
            Term::P => 3.0 * s * s * s * dm,
        }
    }

    fn interior_rel_error(a: &DensityField, exact: impl Fn(f64, f64) -> C64, margin: usize) -> f64 {
        let x = a.grid().coords();
        let n = x.len();
        let (mut err, mut scale) = (0.0f64, 0.0f64);
        for i in margin..n - margin {
            for j in margin..n - margin {
                let e = exact(x[i], x[j]);
                err = err.max((a.get(i, j) - e).norm());
                scale = scale.max(e.norm());
            }
        }
        err / scale
    }

    #[test]
    fn every_term_is_exact_on_cubics() {
        let g = make_grid(65, 3.0).unwrap();
        let f = Cubic::sample();
        let rho = f.field(&g);
        let (d, kappa) = (0.7, 0.4);
        let terms = TermSet {
            potential: Some(SampledPotential::harmonic(&g, kappa)),
            ..TermSet::new(0.2, d)
        };
        for term in [Term::Markov, Term::K, Term::Nu, Term::V, Term::Rd, Term::As, Term::P] {
            let got = apply_term(&rho, &terms, term);
            let e = interior_rel_error(&got, |x, y| expected(term, &f, d, kappa, x, y), 4);
            assert!(e < 1e-10, "{term:?}: {e:e}");
        }
    }

    #[test]
    fn total_is_weighted_sum() {
        let g = make_grid(65, 3.0).unwrap();
        let rho = Cubic::sample().field(&g);
        let mut t = TermSet::new(0.25, 1.3);
        t.corrections = CorrectionWeights { k: 0.5, nu: 0.3, v: 1.0, rd: 2.0, as_: 0.7, p: 1.1 };
        let got = rhs_total(&rho, &t);
        let w = t.corrections;
        let mut sum = apply_markovian(&rho, &t);
        for term in Term::CORRECTIONS {
            sum = sum.combine(C64::new(1.0, 0.0), &apply_term(&rho, &t, term), C64::new(t.r_omega * w.weight(term), 0.0));
        }
        let diff = got.combine(C64::new(1.0, 0.0), &sum, C64::new(-1.0, 0.0));
        assert!(diff.max_abs() < 1e-12 * sum.max_abs());
    }

    #[test]
    fn linearity() {
        let g = make_grid(65, 7.0).unwrap();
        let a = build_cat_state(&g, 6.0, 0.5).unwrap();
        let b = build_gaussian(&g, 1.0, 0.8);
        let t = TermSet { corrections: CorrectionWeights::all(), ..TermSet::new(0.3, 1.0) };
        let (ca, cb) = (C64::new(0.3, -1.2), C64::new(-2.0, 0.5));
        let lhs = rhs_total(&a.combine(ca, &b, cb), &t);
        let rhs = rhs_total(&a, &t).combine(ca, &rhs_total(&b, &t), cb);
        let diff = lhs.combine(C64::new(1.0, 0.0), &rhs, C64::new(-1.0, 0.0));
        assert!(diff.max_abs() < 1e-12 * rhs.max_abs());
    }

    #[test]
    fn hermitian_input_gives_hermitian_output() {
        let g = make_grid(65, 7.0).unwrap();
        let rho = build_cat_state(&g, 6.0, 0.5).unwrap();
        let terms = TermSet {
            potential: Some(SampledPotential::harmonic(&g, 0.5)),
            ..TermSet::new(0.2, 1.0)
        };
        for term in [Term::Markov, Term::K, Term::Nu, Term::Rd, Term::As, Term::P] {
            let out = apply_term(&rho, &terms, term);
            assert!(out.hermiticity_residual() <= 1e-12 * out.max_abs(), "{term:?}");
        }
        // The potential-gradient part of L_V is odd under (ξ↔η, conj): it maps
        // Hermitian fields to anti-Hermitian ones.
        let out = apply_term(&rho, &terms, Term::V);
        assert!(out.hermiticity_residual() > 0.1 * out.max_abs());
    }

    #[test]
    fn dissipative_terms_leave_the_trace_alone() {
        let g = make_grid(129, 7.0).unwrap();
        let rho = build_gaussian(&g, 0.5, 0.8);
        let t = TermSet::new(0.3, 1.0);
        for term in [Term::Markov, Term::K, Term::Nu, Term::V, Term::Rd, Term::As, Term::P] {
            let tr = apply_term(&rho, &t, term).trace().norm();
            assert!(tr < 1e-10, "{term:?}: {tr:e}");
        }
    }

    #[test]
    fn zero_r_omega_is_bitwise_markovian() {
        let g = make_grid(65, 7.0).unwrap();
        let rho = build_cat_state(&g, 6.0, 0.5).unwrap();
        let a = rhs_total(&rho, &TermSet::new(0.0, 1.0));
        let b = rhs_total(&rho, &TermSet::markovian(1.0));
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.re.to_bits() == y.re.to_bits()
            && x.im.to_bits() == y.im.to_bits()));
    }

    #[test]
    fn kinetic_correction_rescales_the_kinetic_coefficient() {
        let g = make_grid(65, 7.0).unwrap();
        let rho = build_cat_state(&g, 6.0, 0.5).unwrap();
        let r = 0.2;
        let mut t = TermSet::new(r, 1.5);
        t.corrections = CorrectionWeights { k: 1.0, ..CorrectionWeights::none() };
        let got = rhs_total(&rho, &t);
        let want = rhs_total(&rho, &TermSet::markovian(1.5 * (1.0 - 2.0 * r)));
        let diff = got.combine(C64::new(1.0, 0.0), &want, C64::new(-1.0, 0.0));
        assert!(diff.max_abs() < 1e-12 * want.max_abs());
    }

    #[test]
    fn renormalised_decoherence_vanishes_at_one_sixteenth() {
        // −(1 − 16 R) s² ρ − (1 − 8 R) s ∂₋ρ with R = 1/16 leaves half the drift.
        let g = make_grid(65, 7.0).unwrap();
        let rho = build_cat_state(&g, 6.0, 0.5).unwrap();
        let mut t = TermSet::new(1.0 / 16.0, 1.0);
        t.corrections = CorrectionWeights { rd: 1.0, ..CorrectionWeights::none() };
        let got = rhs_total(&rho, &t);
        let mut m = TermSet::markovian(1.0);
        m.markov = MarkovParts { kinetic: 1.0, relaxation: 0.5, decoherence: 0.0 };
        let want = rhs_total(&rho, &m);
        let diff = got.combine(C64::new(1.0, 0.0), &want, C64::new(-1.0, 0.0));
        assert!(diff.max_abs() < 1e-12 * want.max_abs());
    }

    #[test]
    fn sigma_map() {
        let g = make_grid(65, 3.0).unwrap();
        let f = Cubic::sample();
        let rho = f.field(&g);
        assert_eq!(sigma_from_rho(&rho, 0.0), rho);
        let sigma = sigma_from_rho(&rho, 0.25);
        let e = interior_rel_error(
            &sigma,
            |x, y| f.d(0, 0, x, y) - (f.d(1, 0, x, y) - f.d(0, 1, x, y)) * (0.5 * (x - y)),
            2,
        );
        assert!(e < 1e-12, "{e:e}");
    }

    #[test]
    fn validation() {
        let g = make_grid(65, 3.0).unwrap();
        assert!(TermSet::new(0.5, 1.0).validate(&g).is_err());
        assert!(TermSet::new(0.1, 0.0).validate(&g).is_err());
        let mut t = TermSet::new(0.1, 1.0);
        t.potential = Some(SampledPotential { values: vec![0.0; 3], derivative: vec![0.0; 3] });
        assert!(matches!(t.validate(&g), Err(Error::Config { .. })));
        assert!(Liouvillian::new(&g, t).is_err());
    }
}
