//! Scenario files and the sweep pipeline behind the command-line tool.
//!
//! A scenario is one TOML file. Running it writes, for every `R_Ω` of the
//! sweep, `out_dir/name/<label>/` with `manifest.json`, `coherence.csv`,
//! `fit.json`, `fit_overlay.csv` and `snapshots/`, plus `summary.csv`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherence::{evolved_initial_state, CoherenceObserver, CoherenceSeries, MaskMode, MaskSpec};
use crate::constants::PROTON_MASS;
use crate::error::{Error, Result};
use crate::evolve::{self, BoundaryAction, Observer, RunConfig, RunRecord, StepSize, Termination};
use crate::fitting::{fit_coherence, FitResult, MIN_POINTS};
use crate::grid::{build_cat_state, DensityField, Grid2D};
use crate::kernels::{truncation_order_check, KernelKind, OrderStatus, TestPath, TruncationReport};
use crate::liouvillian::{CorrectionWeights, MarkovParts, TermSet};
use crate::params::{
    check_r_omega, nondimensionalize, thermal_wavelength, DimensionlessParams, PhysicalParams, PotentialSpec,
    DEFAULT_GAMMA, DEFAULT_WIDTH, R_OMEGA_MAX,
};
use crate::snapshot::{abs_csv, save_snapshot, SnapshotMeta};

/// The bundled proton scenario.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/proton.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalBlock {
    #[serde(default = "proton_mass")]
    pub mass: f64,
    pub temperature: f64,
    pub gamma: f64,
    /// Packet separation, m.
    pub separation: f64,
    /// Packet width, m. Defaults to a fixed fraction of the thermal wavelength.
    #[serde(default)]
    pub width: Option<f64>,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
}

fn proton_mass() -> f64 {
    PROTON_MASS
}

impl PhysicalBlock {
    /// Physical parameters with the cut-off chosen for `r`.
    pub fn params(&self, r: f64) -> Result<PhysicalParams> {
        let width = match self.width {
            Some(w) => w,
            None => DEFAULT_WIDTH * thermal_wavelength(self.mass, self.temperature)?,
        };
        PhysicalParams {
            mass: self.mass,
            temperature: self.temperature,
            gamma: self.gamma,
            cutoff: f64::INFINITY,
            separation: self.separation,
            width,
            potential: self.potential,
        }
        .with_r_omega(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionlessBlock {
    pub d: f64,
    pub separation: f64,
    pub width: f64,
    #[serde(default)]
    pub harmonic_kappa: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub n: usize,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    /// Defaults to five estimated decoherence times, `5/Δξ²`.
    #[serde(default)]
    pub tau_end: Option<f64>,
    pub sample_interval: f64,
    /// Fixed step; automatic when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Snapshot times as multiples of `1/Δξ²`.
    pub snapshot_multiples: Vec<f64>,
    pub blowup_factor: f64,
    pub boundary_threshold: f64,
    #[serde(default)]
    pub boundary_action: BoundaryAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermsBlock {
    #[serde(default)]
    pub markov: MarkovParts,
    #[serde(default)]
    pub corrections: CorrectionWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskBlock {
    #[serde(default)]
    pub mode: MaskMode,
    /// Half-width as a fraction of `Δξ`; ignored when `w` is given.
    #[serde(default)]
    pub w_fraction: Option<f64>,
    #[serde(default)]
    pub w: Option<f64>,
}

impl MaskBlock {
    pub fn spec(&self, separation: f64) -> Result<MaskSpec> {
        let w = match (self.w, self.w_fraction) {
            (Some(w), _) => w,
            (None, Some(f)) => f * separation,
            (None, None) => return Err(Error::config("mask", "needs `w` or `w_fraction`")),
        };
        let m = MaskSpec::new(self.mode, w);
        m.validate(separation)?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub r_omega: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSweepBlock {
    pub fractions: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    /// `u²(1−u)²`
    Bump,
    /// `u²`
    Square,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelBlock {
    pub omegas: Vec<f64>,
    pub t: f64,
    pub path: PathKind,
    pub kind: KernelKind,
}

impl KernelBlock {
    pub fn validate(&self) -> Result<()> {
        if self.omegas.is_empty() {
            return Err(Error::config("kernels.omegas", "ladder is empty"));
        }
        if self.omegas.len() < 3 {
            return Err(Error::config(
                "kernels.omegas",
                format!("a slope needs at least 3 cut-off values, got {}", self.omegas.len()),
            ));
        }
        if !(self.omegas[0] > 0.0) || self.omegas.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::config("kernels.omegas", "must be positive and strictly increasing"));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::config("kernels.t", format!("must be positive, got {}", self.t)));
        }
        Ok(())
    }

    pub fn test_path(&self) -> TestPath {
        match self.path {
            PathKind::Bump => TestPath::bump(),
            PathKind::Square => TestPath::square(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub physical: Option<PhysicalBlock>,
    #[serde(default)]
    pub dimensionless: Option<DimensionlessBlock>,
    pub grid: GridBlock,
    pub run: RunBlock,
    pub terms: TermsBlock,
    pub mask: MaskBlock,
    pub sweep: SweepBlock,
    pub mask_sweep: MaskSweepBlock,
    pub kernels: KernelBlock,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "proton".into(),
            out_dir: PathBuf::from("out"),
            physical: Some(PhysicalBlock {
                mass: PROTON_MASS,
                temperature: 300.0,
                gamma: DEFAULT_GAMMA,
                separation: 2e-10,
                width: None,
                potential: None,
            }),
            dimensionless: None,
            grid: GridBlock { n: 129, half_width: 7.0 },
            run: RunBlock {
                tau_end: None,
                sample_interval: 0.0025,
                dt: None,
                snapshot_multiples: vec![0.0, 0.25, 0.5, 1.0, 2.0],
                blowup_factor: 1e6,
                boundary_threshold: 1e-8,
                boundary_action: BoundaryAction::Flag,
            },
            terms: TermsBlock { markov: MarkovParts::default(), corrections: CorrectionWeights::default() },
            mask: MaskBlock { mode: MaskMode::Component, w_fraction: Some(0.5), w: None },
            sweep: SweepBlock { r_omega: vec![0.0, 0.1, 0.2, 0.3] },
            mask_sweep: MaskSweepBlock { fractions: vec![0.3, 0.5, 0.7] },
            kernels: KernelBlock {
                omegas: vec![50.0, 100.0, 200.0, 400.0],
                t: 1.5,
                path: PathKind::Bump,
                kind: KernelKind::RealPart,
            },
        }
    }
}

/// Directory name for one sweep entry.
pub fn r_label(r: f64) -> String {
    format!("r{r:.4}")
}

fn config_error(field: &str, e: Error) -> Error {
    match e {
        Error::Config { .. } => e,
        other => Error::config(field, other.to_string()),
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        ScenarioConfig::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name == ".." {
            return Err(Error::config("name", format!("'{}' is not a usable directory name", self.name)));
        }
        match (&self.physical, &self.dimensionless) {
            (Some(_), Some(_)) => {
                return Err(Error::config("physical", "give either [physical] or [dimensionless], not both"))
            }
            (None, None) => return Err(Error::config("physical", "one of [physical] or [dimensionless] is required")),
            _ => {}
        }
        if self.sweep.r_omega.is_empty() {
            return Err(Error::config("sweep.r_omega", "sweep is empty"));
        }
        let mut labels = HashSet::new();
        for (i, &r) in self.sweep.r_omega.iter().enumerate() {
            let field = format!("sweep.r_omega[{i}]");
            if !(0.0..=R_OMEGA_MAX).contains(&r) {
                return Err(Error::config(
                    field,
                    format!("{r} is outside [0, 1/pi]; the cut-off must satisfy Omega >= gamma (1/pi = {R_OMEGA_MAX:.6})"),
                ));
            }
            if !labels.insert(r_label(r)) {
                return Err(Error::config(field, format!("duplicate value {r}")));
            }
        }
        for (i, &r) in self.sweep.r_omega.iter().enumerate() {
            let p = self.dimensionless_params(r).map_err(|e| config_error(&format!("sweep.r_omega[{i}]"), e))?;
            let field = if self.physical.is_some() { "physical" } else { "dimensionless" };
            p.validate().map_err(|e| config_error(field, e))?;
        }
        let p = self.dimensionless_params(self.sweep.r_omega[0])?;
        Grid2D::new(self.grid.n, self.grid.half_width).map_err(|e| config_error("grid", e))?;
        if 0.5 * p.separation + 3.0 * p.width >= self.grid.half_width {
            return Err(Error::config(
                "grid.half_width",
                format!(
                    "packets at +-{:.3} with width {:.3} do not fit inside +-{}",
                    0.5 * p.separation,
                    p.width,
                    self.grid.half_width
                ),
            ));
        }
        self.run_config(&p)?.validate()?;
        for m in &self.run.snapshot_multiples {
            if !(*m >= 0.0) {
                return Err(Error::config("run.snapshot_multiples", format!("must be >= 0, got {m}")));
            }
        }
        self.mask.spec(p.separation)?;
        if self.mask_sweep.fractions.is_empty() {
            return Err(Error::config("mask_sweep.fractions", "no mask widths given"));
        }
        for (i, f) in self.mask_sweep.fractions.iter().enumerate() {
            MaskSpec::new(self.mask.mode, f * p.separation)
                .validate(p.separation)
                .map_err(|e| config_error(&format!("mask_sweep.fractions[{i}]"), e))?;
        }
        self.kernels.validate()
    }

    /// Applies command-line overrides and revalidates.
    pub fn with_overrides(
        mut self,
        out_dir: Option<PathBuf>,
        grid_n: Option<usize>,
        tau_end: Option<f64>,
    ) -> Result<Self> {
        if let Some(o) = out_dir {
            self.out_dir = o;
        }
        if let Some(n) = grid_n {
            self.grid.n = n;
        }
        if let Some(t) = tau_end {
            self.run.tau_end = Some(t);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn dimensionless_params(&self, r: f64) -> Result<DimensionlessParams> {
        check_r_omega(r)?;
        match (&self.physical, &self.dimensionless) {
            (Some(p), _) => nondimensionalize(&p.params(r)?),
            (None, Some(d)) => Ok(DimensionlessParams {
                r_omega: r,
                d: d.d,
                separation: d.separation,
                width: d.width,
                harmonic_kappa: d.harmonic_kappa,
            }),
            (None, None) => Err(Error::config("physical", "one of [physical] or [dimensionless] is required")),
        }
    }

    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.grid.n, self.grid.half_width)
    }

    /// Estimated Markovian decoherence time `1/Δξ²`.
    pub fn tau_d_estimate(p: &DimensionlessParams) -> f64 {
        1.0 / (p.separation * p.separation)
    }

    pub fn run_config(&self, p: &DimensionlessParams) -> Result<RunConfig> {
        let est = Self::tau_d_estimate(p);
        Ok(RunConfig {
            tau_end: self.run.tau_end.unwrap_or(5.0 * est),
            dt: self.run.dt.map_or(StepSize::Auto, StepSize::Fixed),
            sample_interval: self.run.sample_interval,
            snapshot_times: self.run.snapshot_multiples.iter().map(|m| m * est).collect(),
            blowup_factor: self.run.blowup_factor,
            boundary_threshold: self.run.boundary_threshold,
            boundary_action: self.run.boundary_action,
        })
    }

    pub fn term_set(&self, p: &DimensionlessParams, grid: &Grid2D) -> TermSet {
        TermSet {
            markov: self.terms.markov,
            corrections: self.terms.corrections,
            ..TermSet::from_params(p, grid)
        }
    }

    pub fn scenario_dir(&self) -> PathBuf {
        self.out_dir.join(&self.name)
    }
}

/// Everything needed to evolve one sweep entry.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub params: DimensionlessParams,
    pub grid: Grid2D,
    pub terms: TermSet,
    pub run: RunConfig,
    pub rho0: DensityField,
}

pub fn prepare(cfg: &ScenarioConfig, r: f64) -> Result<Prepared> {
    let params = cfg.dimensionless_params(r)?;
    let grid = cfg.grid()?;
    let terms = cfg.term_set(&params, &grid);
    terms.validate(&grid)?;
    let run = cfg.run_config(&params)?;
    let rho0 = build_cat_state(&grid, params.separation, params.width)?;
    Ok(Prepared { params, grid, terms, run, rho0 })
}

/// Coherence run: evolves the off-diagonal component (or the full state in
/// band mode) and returns the series with its run record.
pub fn coherence_run(prep: &Prepared, mask: &MaskSpec) -> Result<(CoherenceSeries, RunRecord)> {
    let start = evolved_initial_state(&prep.rho0, mask);
    let mut obs = CoherenceObserver::new(*mask);
    let rec = evolve::run(&start, &prep.terms, &prep.run, &mut obs)?;
    Ok((obs.into_series()?, rec))
}

/// Fits a series when it is long enough; `None` otherwise.
pub fn fit_if_possible(series: &CoherenceSeries) -> Result<Option<FitResult>> {
    if series.len() < MIN_POINTS {
        return Ok(None);
    }
    fit_coherence(series).map(Some)
}

struct SnapshotWriter {
    dir: PathBuf,
    meta: SnapshotMeta,
    files: Vec<String>,
}

impl Observer for SnapshotWriter {
    fn snapshot(&mut self, field: &DensityField) -> Result<()> {
        let stem = format!("tau_{:.6}", field.tau);
        save_snapshot(&self.dir.join(format!("{stem}.bin")), field, self.meta)?;
        fs::write(self.dir.join(format!("{stem}.csv")), abs_csv(field))?;
        self.files.push(stem);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: Termination,
    pub dt: f64,
    pub steps: u64,
    pub samples: usize,
    pub trace_drift: f64,
    pub relative_hermiticity: f64,
    pub boundary_flag: Option<f64>,
}

impl From<&RunRecord> for RunSummary {
    fn from(r: &RunRecord) -> Self {
        RunSummary {
            status: r.status,
            dt: r.dt,
            steps: r.steps,
            samples: r.samples.len(),
            trace_drift: r.trace_drift(),
            relative_hermiticity: r.relative_hermiticity(),
            boundary_flag: r.boundary_flag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub name: String,
    pub label: String,
    pub params: DimensionlessParams,
    pub physical: Option<PhysicalParams>,
    pub grid_n: usize,
    pub grid_half_width: f64,
    pub run: RunConfig,
    pub mask: MaskSpec,
    pub markov: MarkovParts,
    pub corrections: CorrectionWeights,
    pub tau_d_estimate: f64,
    /// Evolution of the whole cat state; feeds the snapshots.
    pub state_run: RunSummary,
    /// Evolution that feeds the coherence series.
    pub coherence_run: RunSummary,
    pub snapshots: Vec<String>,
    pub fit_error: Option<String>,
}

/// Result of one sweep entry.
#[derive(Debug, Clone)]
pub struct EntryOutcome {
    pub r_omega: f64,
    pub label: String,
    pub manifest: Manifest,
    pub series: CoherenceSeries,
    pub fit: Option<FitResult>,
}

impl EntryOutcome {
    /// True when either evolution stopped early.
    pub fn terminated(&self) -> bool {
        !self.manifest.state_run.status.is_completed() || !self.manifest.coherence_run.status.is_completed()
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, s + "\n")?;
    Ok(())
}

/// Clears a previous result so reruns never mix old and new files.
fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn run_entry(cfg: &ScenarioConfig, r: f64) -> Result<EntryOutcome> {
    let prep = prepare(cfg, r)?;
    let label = r_label(r);
    let dir = cfg.scenario_dir().join(&label);
    let snap_dir = dir.join("snapshots");
    fresh_dir(&dir)?;
    fs::create_dir_all(&snap_dir)?;

    let mut writer = SnapshotWriter {
        dir: snap_dir,
        meta: SnapshotMeta { r_omega: r, d: prep.params.d },
        files: Vec::new(),
    };
    let state_rec = evolve::run(&prep.rho0, &prep.terms, &prep.run, &mut writer)?;

    let mask = cfg.mask.spec(prep.params.separation)?;
    let (series, coh_rec) = coherence_run(&prep, &mask)?;
    fs::write(dir.join("coherence.csv"), series.to_csv())?;

    let (fit, fit_error) = match fit_if_possible(&series) {
        Ok(Some(f)) => (Some(f), None),
        Ok(None) => (None, Some(format!("{} samples, at least {MIN_POINTS} needed", series.len()))),
        Err(e) => (None, Some(e.to_string())),
    };
    if let Some(f) = &fit {
        fs::write(dir.join("fit.json"), f.to_json()? + "\n")?;
        fs::write(dir.join("fit_overlay.csv"), f.overlay_csv(&series))?;
    }

    let manifest = Manifest {
        name: cfg.name.clone(),
        label: label.clone(),
        params: prep.params,
        physical: cfg.physical.as_ref().map(|p| p.params(r)).transpose()?,
        grid_n: prep.grid.n(),
        grid_half_width: prep.grid.half_width(),
        run: prep.run.clone(),
        mask,
        markov: prep.terms.markov,
        corrections: prep.terms.corrections,
        tau_d_estimate: ScenarioConfig::tau_d_estimate(&prep.params),
        state_run: RunSummary::from(&state_rec),
        coherence_run: RunSummary::from(&coh_rec),
        snapshots: writer.files,
        fit_error,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(EntryOutcome { r_omega: r, label, manifest, series, fit })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:e}"))
}

/// `r_omega,tau_d,flag,classification` in sweep order.
pub fn summary_csv(entries: &[EntryOutcome]) -> String {
    let mut s = String::from("r_omega,tau_d,flag,classification\n");
    for e in entries {
        let (tau, flag, class) = match &e.fit {
            Some(f) => (fmt_opt(f.tau_d), serde_plain(&f.flag), f.classification.as_str().to_string()),
            None => (String::new(), "not_fitted".into(), "not_fitted".into()),
        };
        s.push_str(&format!("{},{tau},{flag},{class}\n", e.r_omega));
    }
    s
}

fn serde_plain<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|x| x.as_str().map(str::to_owned))
        .unwrap_or_default()
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub entries: Vec<EntryOutcome>,
    pub summary_path: PathBuf,
}

impl ScenarioOutcome {
    /// True when at least one evolution stopped early or could not be fitted
    /// for a reason other than a zero-length run.
    pub fn any_terminated(&self) -> bool {
        self.entries.iter().any(EntryOutcome::terminated)
    }
}

/// Runs every sweep entry on up to `workers` threads and writes the summary
/// once all of them are done.
pub fn run_scenario(cfg: &ScenarioConfig, workers: usize) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    let root = cfg.scenario_dir();
    fs::create_dir_all(&root)?;
    let results: Vec<Result<EntryOutcome>> =
        pool(workers)?.install(|| cfg.sweep.r_omega.par_iter().map(|&r| run_entry(cfg, r)).collect());
    let entries = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary_path = root.join("summary.csv");
    fs::write(&summary_path, summary_csv(&entries))?;
    Ok(ScenarioOutcome { entries, summary_path })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSweepRow {
    pub r_omega: f64,
    pub w_fraction: f64,
    pub w: f64,
    pub status: Termination,
    pub fit: Option<FitResult>,
}

#[derive(Debug, Clone)]
pub struct MaskSweepOutcome {
    pub rows: Vec<MaskSweepRow>,
    pub summary_path: PathBuf,
}

impl MaskSweepOutcome {
    /// For each `R_Ω`, whether every mask width gave the same classification.
    pub fn stability(&self) -> Vec<(f64, bool)> {
        let mut out: Vec<(f64, bool)> = Vec::new();
        for r in self.rows.iter().map(|x| x.r_omega) {
            if out.iter().any(|(q, _)| *q == r) {
                continue;
            }
            let classes: Vec<_> = self
                .rows
                .iter()
                .filter(|x| x.r_omega == r)
                .map(|x| x.fit.as_ref().map(|f| f.classification))
                .collect();
            let stable = classes[0].is_some() && classes.iter().all(|c| *c == classes[0]);
            out.push((r, stable));
        }
        out
    }

    pub fn any_terminated(&self) -> bool {
        self.rows.iter().any(|r| !r.status.is_completed())
    }
}

pub fn mask_sweep_csv(rows: &[MaskSweepRow]) -> String {
    let mut s = String::from("r_omega,w_fraction,w,classification,tau_d,flag\n");
    for r in rows {
        let (class, tau, flag) = match &r.fit {
            Some(f) => (f.classification.as_str().to_string(), fmt_opt(f.tau_d), serde_plain(&f.flag)),
            None => ("not_fitted".into(), String::new(), "not_fitted".into()),
        };
        s.push_str(&format!("{},{},{:e},{class},{tau},{flag}\n", r.r_omega, r.w_fraction, r.w));
    }
    s
}

/// Coherence fits for every `(R_Ω, w)` pair of the sweep.
pub fn mask_sweep(cfg: &ScenarioConfig, workers: usize) -> Result<MaskSweepOutcome> {
    cfg.validate()?;
    let root = cfg.scenario_dir().join("mask_sweep");
    fs::create_dir_all(&root)?;
    let jobs: Vec<(f64, f64)> = cfg
        .sweep
        .r_omega
        .iter()
        .flat_map(|&r| cfg.mask_sweep.fractions.iter().map(move |&f| (r, f)))
        .collect();
    let results: Vec<Result<MaskSweepRow>> = pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|&(r, frac)| {
                let prep = prepare(cfg, r)?;
                let mask = MaskSpec::new(cfg.mask.mode, frac * prep.params.separation);
                mask.validate(prep.params.separation)?;
                let (series, rec) = coherence_run(&prep, &mask)?;
                let dir = root.join(r_label(r)).join(format!("w{frac:.3}"));
                fresh_dir(&dir)?;
                fs::write(dir.join("coherence.csv"), series.to_csv())?;
                let fit = fit_if_possible(&series).ok().flatten();
                if let Some(f) = &fit {
                    fs::write(dir.join("fit.json"), f.to_json()? + "\n")?;
                }
                Ok(MaskSweepRow { r_omega: r, w_fraction: frac, w: mask.w, status: rec.status, fit })
            })
            .collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary_path = root.join("mask_sweep.csv");
    fs::write(&summary_path, mask_sweep_csv(&rows))?;
    Ok(MaskSweepOutcome { rows, summary_path })
}

#[derive(Debug, Clone)]
pub struct KernelVerification {
    /// First-order expansion; decides pass or fail.
    pub main: TruncationReport,
    /// Zeroth-order control.
    pub control: TruncationReport,
    pub main_csv: PathBuf,
    pub control_csv: PathBuf,
}

impl KernelVerification {
    pub fn status(&self) -> OrderStatus {
        self.main.status
    }

    pub fn line(&self) -> String {
        let slope = |r: &TruncationReport| r.slope.map_or("n/a".to_string(), |s| format!("{s:.3}"));
        let verdict = match self.main.status {
            OrderStatus::Pass => "PASS",
            OrderStatus::Fail => "FAIL",
            OrderStatus::FloorLimited => "INCONCLUSIVE (quadrature floor)",
        };
        format!(
            "kernel expansion {:?} t={}: slope {} (required <= -2), order-0 control slope {}: {verdict}",
            self.main.kind,
            self.main.t,
            slope(&self.main),
            slope(&self.control)
        )
    }
}

pub fn verify_kernels(cfg: &ScenarioConfig) -> Result<KernelVerification> {
    let k = &cfg.kernels;
    k.validate()?;
    let path = k.test_path();
    let main = truncation_order_check(k.kind, &path, k.t, &k.omegas, 1)?;
    let control = truncation_order_check(k.kind, &path, k.t, &k.omegas, 0)?;
    let dir = cfg.scenario_dir().join("kernels");
    fs::create_dir_all(&dir)?;
    let main_csv = dir.join("truncation_order1.csv");
    let control_csv = dir.join("truncation_order0.csv");
    fs::write(&main_csv, main.to_csv())?;
    fs::write(&control_csv, control.to_csv())?;
    Ok(KernelVerification { main, control, main_csv, control_csv })
}

/// Fits an existing `coherence.csv` and writes `fit.json` and
/// `fit_overlay.csv` into `out_dir`.
pub fn refit(csv: &Path, mode: MaskMode, out_dir: &Path) -> Result<FitResult> {
    let text = fs::read_to_string(csv)?;
    let series = CoherenceSeries::from_csv(&text, mode)?;
    let fit = fit_coherence(&series)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("fit.json"), fit.to_json()? + "\n")?;
    fs::write(out_dir.join("fit_overlay.csv"), fit.overlay_csv(&series))?;
    Ok(fit)
}
