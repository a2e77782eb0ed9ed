//! Explicit fourth-order Runge–Kutta integration of the master equation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DensityField, Diagnostics, Grid2D, C64};
use crate::liouvillian::{Liouvillian, TermSet};

/// Safety factor applied to both stability limits.
pub const DT_SAFETY: f64 = 0.4;

/// Largest stable step: `0.4 · min(h²/(2D(1 + 2R_Ω w_K)), 1/c_max)` where
/// `c_max` bounds the spatially varying, non-kinetic part of the operator.
pub fn stable_dt(grid: &Grid2D, terms: &TermSet) -> f64 {
    let h = grid.spacing();
    let kinetic_weight = terms.markov.kinetic.abs().max(if terms.r_omega != 0.0 {
        terms.corrections.k.abs()
    } else {
        0.0
    });
    let kinetic = if kinetic_weight == 0.0 && (terms.r_omega == 0.0 || terms.corrections.nu == 0.0) {
        f64::INFINITY
    } else {
        h * h / (2.0 * terms.d * (1.0 + 2.0 * terms.r_omega * terms.corrections.k.abs()))
    };
    let bound = Liouvillian::new(grid, terms.clone())
        .map(|l| l.pointwise_coefficient_bound())
        .unwrap_or(f64::INFINITY);
    DT_SAFETY * kinetic.min(1.0 / bound)
}

/// Time step selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Final time in units of `1/γ`.
    pub tau_end: f64,
    pub dt: StepSize,
    /// Spacing of diagnostic samples; every sample is also offered to observers.
    pub sample_interval: f64,
    /// Times at which full snapshots are emitted (rounded to the nearest step).
    pub snapshot_times: Vec<f64>,
    /// Run stops when `max|ρ|` exceeds this multiple of its initial value.
    pub blowup_factor: f64,
    /// Boundary mass above this fraction of `max|ρ|` triggers `boundary_action`.
    pub boundary_threshold: f64,
    pub boundary_action: BoundaryAction,
}

/// What happens when the field reaches the edge of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryAction {
    /// End the run with [`Termination::BoundaryContaminated`].
    Stop,
    /// Keep going and record the first crossing in [`RunRecord::boundary_flag`].
    #[default]
    Flag,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tau_end: 0.1,
            dt: StepSize::Auto,
            sample_interval: 1e-3,
            snapshot_times: Vec::new(),
            blowup_factor: 1e6,
            boundary_threshold: 1e-8,
            boundary_action: BoundaryAction::Flag,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_end >= 0.0) || !self.tau_end.is_finite() {
            return Err(Error::config("run.tau_end", format!("must be >= 0, got {}", self.tau_end)));
        }
        if !(self.sample_interval > 0.0) {
            return Err(Error::config(
                "run.sample_interval",
                format!("must be positive, got {}", self.sample_interval),
            ));
        }
        if let StepSize::Fixed(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::config("run.dt", format!("must be positive, got {dt}")));
            }
        }
        if !(self.blowup_factor > 1.0) {
            return Err(Error::config("run.blowup_factor", "must exceed 1"));
        }
        if !(self.boundary_threshold > 0.0) {
            return Err(Error::config("run.boundary_threshold", "must be positive"));
        }
        Ok(())
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    BlowUp { tau: f64 },
    BoundaryContaminated { tau: f64 },
}

impl Termination {
    pub fn is_completed(&self) -> bool {
        matches!(self, Termination::Completed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub tau: f64,
    pub diagnostics: Diagnostics,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub samples: Vec<Sample>,
    /// Times of emitted snapshots.
    pub snapshots: Vec<f64>,
    pub status: Termination,
    pub dt: f64,
    pub steps: u64,
    /// First sample time at which the boundary threshold was exceeded.
    pub boundary_flag: Option<f64>,
}

impl RunRecord {
    /// Largest `|trace(τ) − trace(0)|` over the samples.
    pub fn trace_drift(&self) -> f64 {
        let first = match self.samples.first() {
            Some(s) => s.diagnostics.trace,
            None => return 0.0,
        };
        self.samples
            .iter()
            .map(|s| (s.diagnostics.trace - first).norm())
            .fold(0.0, f64::max)
    }

    /// Largest hermiticity residual relative to `max|ρ|` at the same sample.
    pub fn relative_hermiticity(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| {
                if s.max_abs > 0.0 {
                    s.diagnostics.herm_residual / s.max_abs
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Receives samples and snapshots from [`run`].
pub trait Observer {
    fn sample(&mut self, _field: &DensityField, _sample: &Sample) -> Result<()> {
        Ok(())
    }

    fn snapshot(&mut self, _field: &DensityField) -> Result<()> {
        Ok(())
    }
}

impl Observer for () {}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn sample(&mut self, field: &DensityField, sample: &Sample) -> Result<()> {
        self.0.sample(field, sample)?;
        self.1.sample(field, sample)
    }

    fn snapshot(&mut self, field: &DensityField) -> Result<()> {
        self.0.snapshot(field)?;
        self.1.snapshot(field)
    }
}

impl<O: Observer + ?Sized> Observer for &mut O {
    fn sample(&mut self, field: &DensityField, sample: &Sample) -> Result<()> {
        (**self).sample(field, sample)
    }

    fn snapshot(&mut self, field: &DensityField) -> Result<()> {
        (**self).snapshot(field)
    }
}

/// Collects every sampled field.
#[derive(Debug, Default)]
pub struct FieldCollector {
    pub fields: Vec<DensityField>,
}

impl Observer for FieldCollector {
    fn sample(&mut self, field: &DensityField, _sample: &Sample) -> Result<()> {
        self.fields.push(field.clone());
        Ok(())
    }
}

/// Classical RK4 stepper with preallocated stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    op: Liouvillian,
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    stage: Vec<C64>,
}

fn axpy_into(out: &mut [C64], y: &[C64], a: f64, k: &[C64]) {
    out.par_iter_mut()
        .zip(y.par_iter())
        .zip(k.par_iter())
        .for_each(|((o, y), k)| *o = y + k * a);
}

impl Rk4 {
    pub fn new(grid: &Grid2D, terms: TermSet) -> Result<Self> {
        let len = grid.len();
        let zero = vec![C64::new(0.0, 0.0); len];
        Ok(Rk4 {
            op: Liouvillian::new(grid, terms)?,
            k1: zero.clone(),
            k2: zero.clone(),
            k3: zero.clone(),
            k4: zero.clone(),
            stage: zero,
        })
    }

    /// Advance `rho` in place by `dt`.
    pub fn advance(&mut self, rho: &mut DensityField, dt: f64) {
        let y = rho.values_mut();
        self.op.rhs_into(y, &mut self.k1);
        axpy_into(&mut self.stage, y, 0.5 * dt, &self.k1);
        self.op.rhs_into(&self.stage, &mut self.k2);
        axpy_into(&mut self.stage, y, 0.5 * dt, &self.k2);
        self.op.rhs_into(&self.stage, &mut self.k3);
        axpy_into(&mut self.stage, y, dt, &self.k3);
        self.op.rhs_into(&self.stage, &mut self.k4);
        let w = dt / 6.0;
        y.par_iter_mut()
            .zip(self.k1.par_iter())
            .zip(self.k2.par_iter())
            .zip(self.k3.par_iter().zip(self.k4.par_iter()))
            .for_each(|(((y, a), b), (c, d))| {
                *y += (a + (b + c) * 2.0 + d) * w;
            });
        rho.tau += dt;
    }
}

/// One RK4 step of size `dt`.
pub fn step(f: &DensityField, p: &TermSet, dt: f64) -> Result<DensityField> {
    let mut rk = Rk4::new(f.grid(), p.clone())?;
    let mut out = f.clone();
    rk.advance(&mut out, dt);
    if out.values().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::BlowUp {
            tau: out.tau,
            message: "non-finite value after step".into(),
        });
    }
    Ok(out)
}

/// Step size and counts realising a run configuration exactly on its sample grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub dt: f64,
    pub steps_per_sample: u64,
    pub samples: u64,
    pub sample_interval: f64,
}

pub fn schedule(grid: &Grid2D, terms: &TermSet, rc: &RunConfig) -> Result<Schedule> {
    rc.validate()?;
    let dt_max = match rc.dt {
        StepSize::Auto => stable_dt(grid, terms),
        StepSize::Fixed(dt) => dt,
    };
    let samples = (rc.tau_end / rc.sample_interval).round() as u64;
    let sample_interval = if samples == 0 {
        rc.sample_interval
    } else {
        rc.tau_end / samples as f64
    };
    let steps_per_sample = (sample_interval / dt_max).ceil().max(1.0) as u64;
    Ok(Schedule {
        dt: sample_interval / steps_per_sample as f64,
        steps_per_sample,
        samples,
        sample_interval,
    })
}

fn make_sample(field: &DensityField) -> Sample {
    Sample {
        tau: field.tau,
        diagnostics: field.diagnostics(),
        max_abs: field.max_abs(),
    }
}

/// Integrate `f0` to `rc.tau_end`, reporting samples and snapshots to `obs`.
///
/// Blow-up and boundary contamination end the run early with the matching
/// [`Termination`]; they are not errors. Errors come only from invalid input
/// or failing observers.
pub fn run(
    f0: &DensityField,
    p: &TermSet,
    rc: &RunConfig,
    mut obs: impl Observer,
) -> Result<RunRecord> {
    let grid = f0.grid().clone();
    let sch = schedule(&grid, p, rc)?;
    let mut rk = Rk4::new(&grid, p.clone())?;
    let mut rho = f0.clone();
    let start_tau = rho.tau;

    let mut snapshot_steps: Vec<u64> = rc
        .snapshot_times
        .iter()
        .filter(|&&t| t >= 0.0 && t <= rc.tau_end + 0.5 * sch.dt)
        .map(|&t| (t / sch.dt).round() as u64)
        .collect();
    snapshot_steps.sort_unstable();
    snapshot_steps.dedup();
    let mut next_snapshot = snapshot_steps.iter().peekable();

    let first = make_sample(&rho);
    let initial_max = first.max_abs;
    obs.sample(&rho, &first)?;
    let mut record = RunRecord {
        samples: vec![first],
        snapshots: Vec::new(),
        status: Termination::Completed,
        dt: sch.dt,
        steps: 0,
        boundary_flag: None,
    };
    if next_snapshot.peek() == Some(&&0) {
        obs.snapshot(&rho)?;
        record.snapshots.push(rho.tau);
        next_snapshot.next();
    }

    let total = sch.samples * sch.steps_per_sample;
    for step_index in 1..=total {
        rk.advance(&mut rho, sch.dt);
        // Re-anchor time to the step count so samples land exactly on the grid.
        rho.tau = start_tau + step_index as f64 * sch.dt;
        record.steps = step_index;

        let at_sample = step_index % sch.steps_per_sample == 0;
        if at_sample {
            rho.tau = start_tau + (step_index / sch.steps_per_sample) as f64 * sch.sample_interval;
        }
        if next_snapshot.peek() == Some(&&step_index) {
            obs.snapshot(&rho)?;
            record.snapshots.push(rho.tau);
            next_snapshot.next();
        }
        if at_sample {
            let s = make_sample(&rho);
            let finite = s.max_abs.is_finite() && s.diagnostics.trace.re.is_finite();
            if !finite || s.max_abs > rc.blowup_factor * initial_max {
                record.status = Termination::BlowUp { tau: rho.tau };
                record.samples.push(s);
                return Ok(record);
            }
            obs.sample(&rho, &s)?;
            record.samples.push(s);
            if s.diagnostics.boundary_mass > rc.boundary_threshold * s.max_abs {
                record.boundary_flag.get_or_insert(rho.tau);
                if rc.boundary_action == BoundaryAction::Stop {
                    record.status = Termination::BoundaryContaminated { tau: rho.tau };
                    return Ok(record);
                }
            }
        }
    }
    Ok(record)
}
