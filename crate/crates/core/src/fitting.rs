//! Relaxation fits `C(t) = A/(A + t^α) · exp(−B t^β)` and decoherence times.
//!
//! The model is degenerate: a power law with small `A` and a stretched
//! exponential can describe the same curve over a finite window. Fits are
//! therefore run from several seeds, and the two-parameter sub-models
//! (pure stretched exponential, pure power law) are tried as well and
//! preferred whenever they describe the data equally well.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coherence::CoherenceSeries;
use crate::error::{Error, Result};
use crate::quad;

/// `B` at or below this value counts as zero.
pub const B_FLOOR: f64 = 1e-4;
/// Upper bound on `A`; with `α = 0` this stands in for `A → ∞`.
pub const A_MAX: f64 = 1e6;
const A_MIN: f64 = 1e-8;
const ALPHA_MAX: f64 = 6.0;
const B_MAX: f64 = 1e3;
const BETA_MIN: f64 = 1e-3;
const BETA_MAX: f64 = 3.0;

/// Classification thresholds.
pub const ALPHA_TOL: f64 = 0.05;
pub const BETA_TOL: f64 = 0.05;

/// A sub-model is preferred when its rms log-residual exceeds the full
/// model's by less than `max(TIE_REL · rms_full, TIE_ABS)`.
pub const TIE_REL: f64 = 0.05;
pub const TIE_ABS: f64 = 1e-2;

/// Samples below this normalised value are treated as noise and skipped.
const C_MIN: f64 = 1e-10;
/// Maximum number of log-spaced points used in a fit.
const MAX_POINTS: usize = 80;
pub const MIN_POINTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub a: f64,
    pub alpha: f64,
    pub b: f64,
    pub beta: f64,
}

impl FitParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a > 0.0 && self.alpha >= 0.0 && self.b >= 0.0 && (self.b == 0.0 || self.beta > 0.0);
        if !ok || [self.a, self.alpha, self.b, self.beta].iter().any(|v| v.is_nan()) {
            return Err(Error::Domain(format!("invalid fit parameters {self:?}")));
        }
        Ok(())
    }
}

/// `A/(A + t^α) · exp(−B t^β)`.
pub fn eval_cfit(p: &FitParams, t: f64) -> f64 {
    let power = if p.alpha == 0.0 { 1.0 } else { t.powf(p.alpha) };
    let stretched = if p.b == 0.0 { 0.0 } else { p.b * t.powf(p.beta) };
    p.a / (p.a + power) * (-stretched).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Exponential,
    Stretched,
    PowerLaw,
    Mixed,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Exponential => "exponential",
            Classification::Stretched => "stretched",
            Classification::PowerLaw => "power-law",
            Classification::Mixed => "mixed",
        }
    }
}

pub fn classify(p: &FitParams) -> Classification {
    if p.b <= B_FLOOR {
        Classification::PowerLaw
    } else if p.alpha <= ALPHA_TOL && (p.beta - 1.0).abs() <= BETA_TOL {
        Classification::Exponential
    } else if p.alpha <= ALPHA_TOL {
        Classification::Stretched
    } else {
        Classification::Mixed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauFlag {
    Finite,
    Divergent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    Full,
    StretchedExponential,
    PowerLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FitParams,
    pub model: FitModel,
    /// `sqrt(Σ r²)` of the log-residuals.
    pub residual_norm: f64,
    pub rms: f64,
    pub points: usize,
    /// Standard errors from `(JᵀJ)⁻¹ σ²` in the order ln A, α, B, β;
    /// zero for parameters fixed by the model.
    pub std_errors: [f64; 4],
    pub classification: Classification,
    /// `None` when divergent.
    pub tau_d: Option<f64>,
    pub flag: TauFlag,
    /// rms log-residual of every model that was tried.
    pub candidates: Vec<(FitModel, f64)>,
}

impl FitResult {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// `(τ, C_data, C_fit)` rows for overlays.
    pub fn overlay_csv(&self, series: &CoherenceSeries) -> String {
        let mut s = String::from("tau,c_data,c_fit\n");
        for (t, c) in series.tau.iter().zip(&series.normalized) {
            let _ = writeln!(s, "{:e},{:e},{:e}", t, c, eval_cfit(&self.params, *t));
        }
        s
    }
}

// Internal parameter vector: [ln A, α, B, β].
const LO: [f64; 4] = [-18.420_680_743_952_367, 0.0, 0.0, BETA_MIN]; // ln 1e-8
const HI: [f64; 4] = [13.815_510_557_964_274, ALPHA_MAX, B_MAX, BETA_MAX]; // ln 1e6

fn to_params(th: &[f64; 4]) -> FitParams {
    FitParams { a: th[0].exp().clamp(A_MIN, A_MAX), alpha: th[1], b: th[2], beta: th[3] }
}

struct Data {
    ln_t: Vec<f64>,
    ln_c: Vec<f64>,
}

impl Data {
    fn residuals(&self, th: &[f64; 4], out: &mut [f64]) {
        for (k, (&lt, &lc)) in self.ln_t.iter().zip(&self.ln_c).enumerate() {
            out[k] = model_ln(th, lt) - lc;
        }
    }

    fn cost(&self, th: &[f64; 4]) -> f64 {
        self.ln_t
            .iter()
            .zip(&self.ln_c)
            .map(|(&lt, &lc)| {
                let r = model_ln(th, lt) - lc;
                r * r
            })
            .sum::<f64>()
    }

    fn jacobian_row(&self, th: &[f64; 4], lt: f64) -> [f64; 4] {
        let u = th[1] * lt - th[0];
        let sig = sigmoid(u);
        let tb = (th[3] * lt).exp();
        [sig, -sig * lt, -tb, -th[2] * tb * lt]
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn softplus(u: f64) -> f64 {
    if u > 30.0 {
        u + (-u).exp()
    } else {
        u.exp().ln_1p()
    }
}

fn model_ln(th: &[f64; 4], lt: f64) -> f64 {
    -softplus(th[1] * lt - th[0]) - th[2] * (th[3] * lt).exp()
}

struct Lm {
    theta: [f64; 4],
    cost: f64,
    jtj: DMatrix<f64>,
}

/// Box-constrained Levenberg–Marquardt over the parameters with `free[i]`.
fn levenberg_marquardt(data: &Data, start: [f64; 4], free: [bool; 4]) -> Lm {
    let n = data.ln_t.len();
    let idx: Vec<usize> = (0..4).filter(|&i| free[i]).collect();
    let mut th = start;
    for i in 0..4 {
        th[i] = th[i].clamp(LO[i], HI[i]);
    }
    let mut cost = data.cost(&th);
    let mut lambda = 1e-3;
    let mut r = vec![0.0; n];
    let mut jtj = DMatrix::zeros(idx.len(), idx.len());
    for _ in 0..2000 {
        data.residuals(&th, &mut r);
        let mut g = DVector::zeros(idx.len());
        jtj.fill(0.0);
        for k in 0..n {
            let row = data.jacobian_row(&th, data.ln_t[k]);
            for (a, &i) in idx.iter().enumerate() {
                g[a] += row[i] * r[k];
                for (b, &j) in idx.iter().enumerate() {
                    jtj[(a, b)] += row[i] * row[j];
                }
            }
        }
        // parameters pinned at a bound with the descent direction pointing out
        let pinned: Vec<bool> = idx
            .iter()
            .enumerate()
            .map(|(a, &i)| (th[i] <= LO[i] && g[a] > 0.0) || (th[i] >= HI[i] && g[a] < 0.0))
            .collect();
        let mut improved = false;
        while lambda < 1e14 {
            let mut m = jtj.clone();
            let mut rhs = -g.clone();
            for a in 0..idx.len() {
                if pinned[a] {
                    for b in 0..idx.len() {
                        m[(a, b)] = 0.0;
                        m[(b, a)] = 0.0;
                    }
                    m[(a, a)] = 1.0;
                    rhs[a] = 0.0;
                } else {
                    m[(a, a)] += lambda * jtj[(a, a)].max(1e-10);
                }
            }
            let Some(delta) = m.lu().solve(&rhs) else {
                lambda *= 4.0;
                continue;
            };
            let mut trial = th;
            for (a, &i) in idx.iter().enumerate() {
                trial[i] = (th[i] + delta[a]).clamp(LO[i], HI[i]);
            }
            let c = data.cost(&trial);
            if c.is_finite() && c < cost {
                let gain = cost - c;
                th = trial;
                cost = c;
                lambda = (lambda / 3.0).max(1e-12);
                improved = gain > 1e-15 * (1.0 + cost);
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    Lm { theta: th, cost, jtj }
}

fn select_points(series: &CoherenceSeries) -> Result<Data> {
    let pts: Vec<(f64, f64)> = series
        .tau
        .iter()
        .zip(&series.normalized)
        .filter(|(&t, &c)| t > 0.0 && c > C_MIN && c.is_finite())
        .map(|(&t, &c)| (t, c))
        .collect();
    if pts.len() < MIN_POINTS {
        return Err(Error::Numerical(format!(
            "fit needs at least {MIN_POINTS} positive-time samples above {C_MIN:e}, got {}",
            pts.len()
        )));
    }
    let (t0, t1) = (pts[0].0, pts[pts.len() - 1].0);
    let mut chosen: Vec<usize> = Vec::new();
    for k in 0..MAX_POINTS {
        let target = t0 * (t1 / t0).powf(k as f64 / (MAX_POINTS - 1) as f64);
        let i = match pts.binary_search_by(|p| p.0.total_cmp(&target)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i >= pts.len() => pts.len() - 1,
            Err(i) => {
                if target - pts[i - 1].0 <= pts[i].0 - target {
                    i - 1
                } else {
                    i
                }
            }
        };
        if chosen.last() != Some(&i) {
            chosen.push(i);
        }
    }
    Ok(Data {
        ln_t: chosen.iter().map(|&i| pts[i].0.ln()).collect(),
        ln_c: chosen.iter().map(|&i| pts[i].1.ln()).collect(),
    })
}

/// Fits the normalised series.
pub fn fit_coherence(series: &CoherenceSeries) -> Result<FitResult> {
    let data = select_points(series)?;
    let n = data.ln_t.len();
    let t: Vec<f64> = data.ln_t.iter().map(|l| l.exp()).collect();

    // initial guesses: log-slope for the exponential, tail log-log slope for the power law
    let b0 = {
        let num: f64 = t.iter().zip(&data.ln_c).map(|(t, c)| -t * c).sum();
        let den: f64 = t.iter().map(|t| t * t).sum();
        (num / den).clamp(1e-3, B_MAX)
    };
    let alpha0 = {
        let h = n / 2;
        let dl = data.ln_t[n - 1] - data.ln_t[h];
        if dl > 0.0 {
            (-(data.ln_c[n - 1] - data.ln_c[h]) / dl).clamp(0.1, 5.0)
        } else {
            1.0
        }
    };
    let ln_a_max = HI[0];
    let mid = data.ln_t[n / 2];

    let full = [true; 4];
    let seeds = [
        [ln_a_max, 0.01, b0, 1.0],
        [0.0, alpha0, 0.01, 1.0],
        [0.5 * alpha0 * mid, 0.5 * alpha0, 0.5 * b0, 0.7],
    ];
    let best_full = seeds
        .iter()
        .map(|s| (levenberg_marquardt(&data, *s, full), FitModel::Full, full))
        .min_by(|a, b| a.0.cost.total_cmp(&b.0.cost))
        .expect("three seeds");

    let se_free = [false, false, true, true];
    let stretched = levenberg_marquardt(&data, [ln_a_max, 0.0, b0, 1.0], se_free);
    let pl_free = [true, true, false, false];
    let power = [[0.0, alpha0, 0.0, 1.0], [alpha0 * mid, alpha0, 0.0, 1.0]]
        .iter()
        .map(|s| levenberg_marquardt(&data, *s, pl_free))
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("two seeds");

    let rms = |c: f64| (c / n as f64).sqrt();
    let rms_full = rms(best_full.0.cost);
    let candidates = vec![
        (FitModel::Full, rms_full),
        (FitModel::StretchedExponential, rms(stretched.cost)),
        (FitModel::PowerLaw, rms(power.cost)),
    ];
    let tie = (TIE_REL * rms_full).max(TIE_ABS);
    let reduced = if stretched.cost <= power.cost {
        (stretched, FitModel::StretchedExponential, se_free)
    } else {
        (power, FitModel::PowerLaw, pl_free)
    };
    let (lm, model, free) = if rms(reduced.0.cost) <= rms_full + tie { reduced } else { best_full };
    if !lm.cost.is_finite() {
        return Err(Error::Numerical("fit did not converge from any start".into()));
    }

    let params = to_params(&lm.theta);
    let k = free.iter().filter(|&&f| f).count();
    let sigma2 = if n > k { lm.cost / (n - k) as f64 } else { 0.0 };
    let mut std_errors = [0.0; 4];
    if let Some(inv) = lm.jtj.clone().try_inverse() {
        let mut a = 0;
        for (i, se) in std_errors.iter_mut().enumerate() {
            if free[i] {
                *se = (inv[(a, a)] * sigma2).max(0.0).sqrt();
                a += 1;
            }
        }
    }
    let (tau, flag) = tau_d(&params)?;
    Ok(FitResult {
        params,
        model,
        residual_norm: lm.cost.sqrt(),
        rms: rms(lm.cost),
        points: n,
        std_errors,
        classification: classify(&params),
        tau_d: tau,
        flag,
        candidates,
    })
}

/// `∫₀^∞ C_fit(t) dt`.
///
/// With `B ≤ B_FLOOR` the curve is a pure power law, integrable only for
/// `α > 1`, where `∫ A/(A+t^α) dt = A^{1/α} (π/α) / sin(π/α)`. With `α = 0`
/// the constant prefactor `A/(A+1)` is dropped so that the integral refers
/// to a curve starting at 1.
pub fn tau_d(p: &FitParams) -> Result<(Option<f64>, TauFlag)> {
    p.validate()?;
    if p.b <= B_FLOOR {
        if p.alpha <= 1.0 {
            return Ok((None, TauFlag::Divergent));
        }
        let x = PI / p.alpha;
        return Ok((Some(p.a.powf(1.0 / p.alpha) * x / x.sin()), TauFlag::Finite));
    }
    let shape = FitParams { a: if p.alpha == 0.0 { f64::INFINITY } else { p.a }, ..*p };
    let f = |t: f64| {
        if shape.a.is_infinite() {
            (-shape.b * t.powf(shape.beta)).exp()
        } else {
            eval_cfit(&shape, t)
        }
    };
    // exp(−B t^β) < e^{−60} beyond t_end; below t_start the integrand is ~1
    let ln_end = ((60.0 / p.b).ln() / p.beta).min(700.0);
    let ln_start = ln_end - 80.0;
    let head = ln_start.exp() * f(0.0);
    let q = quad::integrate(|u| f(u.exp()) * u.exp(), ln_start, ln_end, 1e-12, 0.0)?;
    Ok((Some(head + q.value), TauFlag::Finite))
}
