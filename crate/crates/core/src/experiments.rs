//! Metrics, parameter sweeps and method comparisons.
//!
//! Data are generated on a fine mesh, perturbed, and transferred to a coarse
//! reconstruction mesh so that the forward model used for inversion differs
//! from the one that produced the data.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::FemSystem;
use crate::baselines::{run_baseline, BaselineConfig, BaselineMethod, GradientPoint};
use crate::data_gen::{add_noise, make_measurement, sample_true_source, transfer_boundary, BoundaryData, Example};
use crate::error::{Error, Result};
use crate::linsolve::{factorize_ccbm, BlockFactorization};
use crate::mesh::{generate_disk_mesh, Mesh};
use crate::regularizer::{run, DampingSchedule, DiscrepancyRule, RunRecord, SoarConfig, StopConfig};
use crate::sparse::CsrMatrix;

/// Relative L²(Ω₀) error ‖p − p†‖/‖p†‖ in the Ω₀ mass metric.
pub fn l2err(p: &[f64], truth: &[f64], m0: &CsrMatrix) -> Result<f64> {
    if p.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: p.len() });
    }
    let reference = m0.quad_form(truth);
    if !(reference > 0.0) {
        return Err(Error::ZeroReference);
    }
    let diff: Vec<f64> = p.iter().zip(truth).map(|(a, b)| a - b).collect();
    Ok((m0.quad_form(&diff).max(0.0) / reference).sqrt())
}

/// Seed for row `index` of an experiment driven by `master`.
pub fn row_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Constant damping, Morozov discrepancy.
    Soar1,
    /// Constant damping, total energy discrepancy.
    Soar2,
    /// Damping r/t, Morozov discrepancy.
    Soar3,
    /// Damping r/t, total energy discrepancy.
    Soar4,
    Drm,
    Nu,
    Nesterov,
}

impl Method {
    pub const ALL: [Method; 7] = [Method::Soar1, Method::Soar2, Method::Soar3, Method::Soar4, Method::Nesterov, Method::Nu, Method::Drm];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Soar1 => "soar1",
            Method::Soar2 => "soar2",
            Method::Soar3 => "soar3",
            Method::Soar4 => "soar4",
            Method::Drm => "drm",
            Method::Nu => "nu",
            Method::Nesterov => "nesterov",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown method '{s}' (expected one of soar1..soar4, drm, nu, nesterov)")))
    }
}

/// Parameters of every method; each run reads the ones it needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodParams {
    pub soar_dt: f64,
    pub soar_eta: f64,
    pub soar_r: f64,
    pub drm_eta: f64,
    pub drm_dt: f64,
    pub drm_c_eps: f64,
    pub nu: f64,
    pub nesterov_alpha: f64,
    pub nesterov_omega: f64,
    pub nesterov_gradient_at: GradientPoint,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            soar_dt: 10.0,
            soar_eta: 0.05,
            soar_r: 5.0,
            drm_eta: 1.0,
            drm_dt: 10.0,
            drm_c_eps: 0.1,
            nu: 0.5,
            nesterov_alpha: 3.0,
            nesterov_omega: 10.0,
            nesterov_gradient_at: GradientPoint::Extrapolated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialGuess {
    Constant(f64),
    /// The nodal interpolant of the true source.
    Truth,
}

/// Everything needed to run one method on one data set.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub method: Method,
    pub params: MethodParams,
    pub stop: StopConfig,
    pub t0: f64,
    pub p0: InitialGuess,
    pub q0: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self { method: Method::Soar1, params: MethodParams::default(), stop: StopConfig::default(), t0: 1.0, p0: InitialGuess::Constant(0.0), q0: 0.0 }
    }
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        self.stop.validate()?;
        let p = &self.params;
        match self.method {
            Method::Soar1 | Method::Soar2 | Method::Soar3 | Method::Soar4 => {
                if !(p.soar_dt > 0.0) {
                    return Err(Error::Config(format!("soar.dt must be > 0, got {}", p.soar_dt)));
                }
                if !(p.soar_eta >= 0.0) {
                    return Err(Error::Config(format!("soar.eta must be >= 0, got {}", p.soar_eta)));
                }
                if !(p.soar_r > 0.0) {
                    return Err(Error::Config(format!("soar.r must be > 0, got {}", p.soar_r)));
                }
                if !(self.t0 > 0.0) && matches!(self.method, Method::Soar3 | Method::Soar4) {
                    return Err(Error::Config(format!("soar.t0 must be > 0 for dynamic damping, got {}", self.t0)));
                }
                Ok(())
            }
            _ => self.baseline_method().expect("baseline").validate(),
        }
    }

    fn baseline_method(&self) -> Option<BaselineMethod> {
        let p = &self.params;
        match self.method {
            Method::Drm => Some(BaselineMethod::Drm { eta: p.drm_eta, dt: p.drm_dt, c_eps: p.drm_c_eps }),
            Method::Nu => Some(BaselineMethod::Nu { nu: p.nu }),
            Method::Nesterov => Some(BaselineMethod::Nesterov { alpha: p.nesterov_alpha, omega: p.nesterov_omega, gradient_at: p.nesterov_gradient_at }),
            _ => None,
        }
    }

    /// The SOAR configuration, for SOAR methods.
    pub fn soar_config(&self, p0: Vec<f64>, q0: Vec<f64>) -> Option<SoarConfig> {
        let p = &self.params;
        let (damping, rule) = match self.method {
            Method::Soar1 => (DampingSchedule::Constant(p.soar_eta), DiscrepancyRule::Morozov),
            Method::Soar2 => (DampingSchedule::Constant(p.soar_eta), DiscrepancyRule::TotalEnergy),
            Method::Soar3 => (DampingSchedule::Dynamic { r: p.soar_r, t0: self.t0 }, DiscrepancyRule::Morozov),
            Method::Soar4 => (DampingSchedule::Dynamic { r: p.soar_r, t0: self.t0 }, DiscrepancyRule::TotalEnergy),
            _ => return None,
        };
        Some(SoarConfig { dt: p.soar_dt, damping, rule, stop: self.stop, t0: self.t0, p0, q0 })
    }
}

/// Runs `settings.method` on a system whose boundary loads already hold the
/// data with noise level `delta`.
pub fn run_method(system: &FemSystem, fact: &BlockFactorization, delta: f64, settings: &RunSettings, truth: Option<&[f64]>) -> Result<RunRecord> {
    settings.validate()?;
    let m0 = system.m0_len();
    let p0 = match settings.p0 {
        InitialGuess::Constant(c) => vec![c; m0],
        InitialGuess::Truth => truth.ok_or_else(|| Error::Config("init.p0 = truth needs a known source".into()))?.to_vec(),
    };
    let q0 = vec![settings.q0; m0];
    if let Some(cfg) = settings.soar_config(p0.clone(), q0.clone()) {
        return run(system, fact, delta, &cfg, truth);
    }
    let method = settings.baseline_method().expect("baseline");
    if let BaselineMethod::Drm { .. } = method {
        log::info!("drm: regularization weight evaluated at the end of each step");
    }
    let cfg = BaselineConfig { method, stop: settings.stop, t0: settings.t0, p0, q0 };
    run_baseline(system, fact, delta, &cfg, truth)
}

/// A fine data mesh, a coarse reconstruction mesh with its factorized
/// forward operator, and the exact measurement. Reused across sweep rows.
pub struct Scenario {
    pub example: Example,
    pub fine_mesh: Arc<Mesh>,
    pub coarse_mesh: Arc<Mesh>,
    /// Coarse system without boundary loads.
    pub system: FemSystem,
    pub fact: BlockFactorization,
    /// p† at the coarse Ω₀ nodes.
    pub truth: Vec<f64>,
    /// Exact data on the fine boundary.
    pub measurement: BoundaryData,
}

impl Scenario {
    pub fn build(example: Example, radius: f64, fine_rings: usize, coarse_rings: usize) -> Result<Self> {
        if fine_rings <= coarse_rings {
            return Err(Error::Config(format!("mesh.fine_rings ({fine_rings}) must exceed mesh.coarse_rings ({coarse_rings})")));
        }
        if !(radius > 0.0) {
            return Err(Error::Config(format!("mesh.radius must be > 0, got {radius}")));
        }
        Self::from_meshes(example, generate_disk_mesh(radius, fine_rings), generate_disk_mesh(radius, coarse_rings))
    }

    pub fn from_meshes(example: Example, fine: Mesh, coarse: Mesh) -> Result<Self> {
        if fine.h >= coarse.h {
            return Err(Error::Config(format!("fine mesh size {} must be below coarse mesh size {}", fine.h, coarse.h)));
        }
        let fine_mesh = Arc::new(fine);
        let fine_region = Arc::new(example.mark(&fine_mesh)?);
        let measurement = make_measurement(fine_mesh.clone(), fine_region, &example)?;
        let coarse_mesh = Arc::new(coarse);
        let coarse_region = Arc::new(example.mark(&coarse_mesh)?);
        let truth = sample_true_source(&example, &coarse_mesh, &coarse_region)?.coefficients;
        let system = FemSystem::assemble(coarse_mesh.clone(), coarse_region)?;
        let fact = factorize_ccbm(&system)?;
        log::info!(
            "scenario {}: fine {} nodes, coarse {} nodes ({} in the source region), fill {}",
            example.name(),
            fine_mesh.node_count(),
            coarse_mesh.node_count(),
            truth.len(),
            fact.info.fill
        );
        Ok(Self { example, fine_mesh, coarse_mesh, system, fact, truth, measurement })
    }

    /// Noisy data on the coarse boundary.
    pub fn noisy_data(&self, delta_prime: f64, seed: u64) -> Result<BoundaryData> {
        if !(0.0..1.0).contains(&delta_prime) {
            return Err(Error::Config(format!("noise.delta_prime must lie in [0, 1), got {delta_prime}")));
        }
        let noisy = add_noise(&self.measurement, delta_prime, seed);
        transfer_boundary(&self.fine_mesh, &self.coarse_mesh, &noisy)
    }

    /// The coarse system loaded with `data`.
    pub fn system_with(&self, data: &BoundaryData) -> Result<FemSystem> {
        let mut system = self.system.clone();
        system.set_boundary_data(&data.nodes, &data.g1, &data.g2)?;
        Ok(system)
    }

    pub fn run(&self, data: &BoundaryData, settings: &RunSettings) -> Result<RunRecord> {
        let system = self.system_with(data)?;
        run_method(&system, &self.fact, data.delta, settings, Some(&self.truth))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    DeltaPrime(Vec<f64>),
    Tau(Vec<f64>),
    /// SOAR time step.
    Dt(Vec<f64>),
    /// SOAR constant damping.
    Eta(Vec<f64>),
    /// SOAR dynamic damping factor.
    R(Vec<f64>),
    Method(Vec<Method>),
}

impl Sweep {
    pub fn axis(&self) -> &'static str {
        match self {
            Sweep::DeltaPrime(_) => "delta_prime",
            Sweep::Tau(_) => "tau",
            Sweep::Dt(_) => "dt",
            Sweep::Eta(_) => "eta",
            Sweep::R(_) => "r",
            Sweep::Method(_) => "method",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Sweep::DeltaPrime(v) | Sweep::Tau(v) | Sweep::Dt(v) | Sweep::Eta(v) | Sweep::R(v) => v.len(),
            Sweep::Method(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, i: usize) -> String {
        match self {
            Sweep::DeltaPrime(v) | Sweep::Tau(v) | Sweep::Dt(v) | Sweep::Eta(v) | Sweep::R(v) => v[i].to_string(),
            Sweep::Method(v) => v[i].name().to_string(),
        }
    }

    /// Settings and noise level of row `i`.
    fn apply(&self, i: usize, base: &RunSettings, delta_prime: f64) -> (RunSettings, f64) {
        let mut s = base.clone();
        let mut dp = delta_prime;
        match self {
            Sweep::DeltaPrime(v) => dp = v[i],
            Sweep::Tau(v) => s.stop.tau = v[i],
            Sweep::Dt(v) => s.params.soar_dt = v[i],
            Sweep::Eta(v) => s.params.soar_eta = v[i],
            Sweep::R(v) => s.params.soar_r = v[i],
            Sweep::Method(v) => s.method = v[i],
        }
        (s, dp)
    }

    /// Whether rows differ only in method and so share one noise draw.
    fn shares_noise(&self) -> bool {
        !matches!(self, Sweep::DeltaPrime(_))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub example: Example,
    pub radius: f64,
    pub fine_rings: usize,
    pub coarse_rings: usize,
    pub delta_prime: f64,
    pub settings: RunSettings,
    pub seed: u64,
    pub sweep: Sweep,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sweep.is_empty() {
            return Err(Error::Config("sweep.values must not be empty".into()));
        }
        if self.fine_rings <= self.coarse_rings {
            return Err(Error::Config(format!("mesh.fine_rings ({}) must exceed mesh.coarse_rings ({})", self.fine_rings, self.coarse_rings)));
        }
        for i in 0..self.sweep.len() {
            let (s, dp) = self.sweep.apply(i, &self.settings, self.delta_prime);
            s.validate()?;
            if !(0.0..1.0).contains(&dp) {
                return Err(Error::Config(format!("noise.delta_prime must lie in [0, 1), got {dp}")));
            }
        }
        Ok(())
    }
}

/// Outcome of one sweep row or comparison cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowResult {
    pub sweep_value: String,
    pub delta_prime: f64,
    pub delta: Option<f64>,
    pub l2err: Option<f64>,
    pub iternum: Option<usize>,
    /// `discrepancy_met`, `max_iterations` or `error: <message>`.
    pub reason: String,
}

impl RowResult {
    fn from_run(sweep_value: String, delta_prime: f64, delta: Option<f64>, outcome: Result<RunRecord>) -> Self {
        match outcome {
            Ok(rec) => Self { sweep_value, delta_prime, delta, l2err: rec.final_l2err(), iternum: Some(rec.iterations()), reason: rec.reason.to_string() },
            Err(e) => {
                log::warn!("row {sweep_value}: {e}");
                Self { sweep_value, delta_prime, delta, l2err: None, iternum: None, reason: format!("error: {e}") }
            }
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub axis: String,
    pub rows: Vec<RowResult>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sweep_value,l2err,iternum,reason\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", csv_field(&r.sweep_value), opt(r.l2err), opt(r.iternum), csv_field(&r.reason)).unwrap();
        }
        out
    }
}

fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs <= 1 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn map_rows<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> T + Send + Sync) -> Result<Vec<T>> {
    if jobs <= 1 {
        return Ok((0..n).map(f).collect());
    }
    with_jobs(jobs, || (0..n).into_par_iter().map(f).collect())
}

/// Runs every sweep row on `scenario`; rows are independent and come back
/// in sweep order whatever `jobs` is. Row failures are recorded, not
/// propagated.
pub fn run_sweep_on(scenario: &Scenario, spec: &ExperimentSpec, jobs: usize) -> Result<SweepTable> {
    spec.validate()?;
    let shared = if spec.sweep.shares_noise() { Some(scenario.noisy_data(spec.delta_prime, row_seed(spec.seed, 0))) } else { None };
    let rows = map_rows(spec.sweep.len(), jobs, |i| {
        let (settings, dp) = spec.sweep.apply(i, &spec.settings, spec.delta_prime);
        let label = spec.sweep.label(i);
        let data = match &shared {
            Some(Ok(d)) => Ok(d.clone()),
            Some(Err(e)) => Err(Error::InvalidArgument(e.to_string())),
            None => scenario.noisy_data(dp, row_seed(spec.seed, i as u64)),
        };
        match data {
            Ok(data) => {
                let delta = Some(data.delta);
                RowResult::from_run(label, dp, delta, scenario.run(&data, &settings))
            }
            Err(e) => RowResult::from_run(label, dp, None, Err(e)),
        }
    })?;
    Ok(SweepTable { axis: spec.sweep.axis().to_string(), rows })
}

pub fn run_sweep(spec: &ExperimentSpec, jobs: usize) -> Result<SweepTable> {
    spec.validate()?;
    let scenario = Scenario::build(spec.example.clone(), spec.radius, spec.fine_rings, spec.coarse_rings)?;
    run_sweep_on(&scenario, spec, jobs)
}

/// Method-by-noise-level grid; every cell of one noise column sees the same
/// data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareTable {
    pub delta_primes: Vec<f64>,
    pub methods: Vec<Method>,
    /// cells[i][j]: method i at noise level j.
    pub cells: Vec<Vec<RowResult>>,
}

impl CompareTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,delta_prime,l2err,iternum,reason\n");
        for (m, row) in self.methods.iter().zip(&self.cells) {
            for (dp, c) in self.delta_primes.iter().zip(row) {
                writeln!(out, "{m},{dp},{},{},{}", opt(c.l2err), opt(c.iternum), csv_field(&c.reason)).unwrap();
            }
        }
        out
    }

    /// Plain-text grid: one line per method, an (L2Err, IterNum) pair per
    /// noise level.
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<10}", "method");
        for dp in &self.delta_primes {
            write!(out, " | {:>8} {:>8}", format!("{}%", dp * 100.0), "").unwrap();
        }
        out.push('\n');
        for (m, row) in self.methods.iter().zip(&self.cells) {
            write!(out, "{:<10}", m.name()).unwrap();
            for c in row {
                let l2 = c.l2err.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
                let it = c.iternum.map_or_else(|| "-".to_string(), |v| v.to_string());
                write!(out, " | {l2:>8} {it:>8}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Runs each method at each noise level on shared data per level.
pub fn compare_methods_on(scenario: &Scenario, base: &RunSettings, methods: &[Method], delta_primes: &[f64], seed: u64, jobs: usize) -> Result<CompareTable> {
    for &m in methods {
        RunSettings { method: m, ..base.clone() }.validate()?;
    }
    let data: Vec<Result<BoundaryData>> = delta_primes.iter().enumerate().map(|(j, &dp)| scenario.noisy_data(dp, row_seed(seed, j as u64))).collect();
    let n = methods.len() * delta_primes.len();
    let flat = map_rows(n, jobs, |idx| {
        let (i, j) = (idx / delta_primes.len(), idx % delta_primes.len());
        let settings = RunSettings { method: methods[i], ..base.clone() };
        let label = methods[i].name().to_string();
        match &data[j] {
            Ok(d) => RowResult::from_run(label, delta_primes[j], Some(d.delta), scenario.run(d, &settings)),
            Err(e) => RowResult::from_run(label, delta_primes[j], None, Err(Error::InvalidArgument(e.to_string()))),
        }
    })?;
    let mut cells = Vec::with_capacity(methods.len());
    let mut it = flat.into_iter();
    for _ in methods {
        cells.push(it.by_ref().take(delta_primes.len()).collect());
    }
    Ok(CompareTable { delta_primes: delta_primes.to_vec(), methods: methods.to_vec(), cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mass(diag: &[f64]) -> CsrMatrix {
        CsrMatrix::from_triplets(diag.len(), diag.len(), diag.iter().enumerate().map(|(i, &d)| (i, i, d)).collect())
    }

    #[test]
    fn l2err_identities() {
        let m = mass(&[0.5, 1.0, 2.0]);
        let t = [1.0, -2.0, 3.0];
        assert_eq!(l2err(&t, &t, &m).unwrap(), 0.0);
        assert!((l2err(&[0.0; 3], &t, &m).unwrap() - 1.0).abs() < 1e-15);
        assert!((l2err(&[2.0, -4.0, 6.0], &t, &m).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(l2err(&t, &[0.0; 3], &m), Err(Error::ZeroReference)));
    }

    #[test]
    fn row_seeds_are_distinct_and_stable() {
        let seeds: Vec<u64> = (0..100).map(|i| row_seed(42, i)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 100);
        assert_eq!(row_seed(42, 7), seeds[7]);
        assert_ne!(row_seed(43, 7), seeds[7]);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("soar5".parse::<Method>().is_err());
    }

    #[test]
    fn csv_quotes_messages_with_commas() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
