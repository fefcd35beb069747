//! Second order asymptotical regularization.
//!
//! The damped flow p̈ + η(t)ṗ + w_im(p) = 0 on the Ω₀ coefficients is
//! integrated with the Störmer-Verlet scheme (half-kick, drift, half-kick),
//! where w_im is the imaginary part of the adjoint field. Iteration stops by
//! the discrepancy principle.

use std::fmt;
use std::fmt::Write as _;

use crate::assembly::FemSystem;
use crate::error::{Error, Result};
use crate::experiments::l2err;
use crate::linsolve::{solve_adjoint, solve_ccbm, BlockFactorization};
use crate::sparse::CsrMatrix;

/// C₀(Ω) = max(d, R)·√(2π) for a ball of radius R in d dimensions.
pub fn c0_constant(d: usize, radius: f64) -> f64 {
    (d as f64).max(radius) * (2.0 * std::f64::consts::PI).sqrt()
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// ‖v‖_{0,Ω} = √(vᵀEv)
pub fn norm_omega(e: &CsrMatrix, v: &[f64]) -> Result<f64> {
    check_len(e.ncols(), v.len())?;
    Ok(e.quad_form(v).max(0.0).sqrt())
}

/// ‖q‖_P = √(qᵀM₀q) with P = L²(Ω₀).
pub fn norm_p(m0: &CsrMatrix, q: &[f64]) -> Result<f64> {
    norm_omega(m0, q)
}

/// χ = ‖u_im‖_{0,Ω} − threshold
pub fn discrepancy_morozov(u_im: &[f64], e: &CsrMatrix, threshold: f64) -> Result<f64> {
    Ok(norm_omega(e, u_im)? - threshold)
}

/// χ_TE = ‖u_im‖²_{0,Ω} + ‖q‖²_P − threshold²
pub fn discrepancy_total_energy(u_im: &[f64], q: &[f64], e: &CsrMatrix, m0: &CsrMatrix, threshold_sq: f64) -> Result<f64> {
    check_len(e.ncols(), u_im.len())?;
    check_len(m0.ncols(), q.len())?;
    Ok(e.quad_form(u_im) + m0.quad_form(q) - threshold_sq)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DampingSchedule {
    Constant(f64),
    /// η(t) = r/t for t ≥ t0.
    Dynamic {
        r: f64,
        t0: f64,
    },
}

impl DampingSchedule {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            DampingSchedule::Constant(eta) => eta,
            DampingSchedule::Dynamic { r, t0 } => {
                debug_assert!(t >= t0 - 1e-12 * t0.abs(), "dynamic damping evaluated before t0");
                r / t
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            DampingSchedule::Constant(eta) if !(eta >= 0.0) => Err(Error::Config(format!("soar.eta must be >= 0, got {eta}"))),
            DampingSchedule::Dynamic { r, .. } if !(r > 0.0) => Err(Error::Config(format!("soar.r must be > 0, got {r}"))),
            DampingSchedule::Dynamic { t0, .. } if !(t0 > 0.0) => Err(Error::Config(format!("soar.t0 must be > 0 for dynamic damping, got {t0}"))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscrepancyRule {
    Morozov,
    TotalEnergy,
}

/// Discrepancy-principle parameters shared by every method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopConfig {
    pub tau: f64,
    /// Use τδ as the threshold instead of C₀τδ.
    pub absorb_c0: bool,
    pub c0: f64,
    pub eps0: f64,
    pub n_max: usize,
}

impl Default for StopConfig {
    fn default() -> Self {
        Self { tau: 0.01, absorb_c0: true, c0: c0_constant(2, 1.0), eps0: 1e-6, n_max: 1000 }
    }
}

impl StopConfig {
    pub fn threshold(&self, delta: f64) -> f64 {
        if self.absorb_c0 {
            self.tau * delta
        } else {
            self.c0 * self.tau * delta
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("stop.tau must be > 0, got {}", self.tau)));
        }
        if !(self.eps0 >= 0.0) {
            return Err(Error::Config(format!("stop.eps0 must be >= 0, got {}", self.eps0)));
        }
        if !(self.c0 > 0.0) {
            return Err(Error::Config(format!("stop.c0 must be > 0, got {}", self.c0)));
        }
        Ok(())
    }

    /// Discrepancy value under `rule`; `q` is the velocity (ignored by Morozov).
    pub fn evaluate(&self, rule: DiscrepancyRule, system: &FemSystem, delta: f64, u_im: &[f64], q: &[f64]) -> Result<f64> {
        let thr = self.threshold(delta);
        match rule {
            DiscrepancyRule::Morozov => discrepancy_morozov(u_im, &system.e, thr),
            DiscrepancyRule::TotalEnergy => discrepancy_total_energy(u_im, q, &system.e, &system.m0, thr * thr),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoarConfig {
    pub dt: f64,
    pub damping: DampingSchedule,
    pub rule: DiscrepancyRule,
    pub stop: StopConfig,
    /// Start time t₀.
    pub t0: f64,
    pub p0: Vec<f64>,
    pub q0: Vec<f64>,
}

impl SoarConfig {
    pub fn validate(&self, m0: usize) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("soar.dt must be > 0, got {}", self.dt)));
        }
        self.damping.validate()?;
        if let DampingSchedule::Dynamic { t0, .. } = self.damping {
            if self.t0 < t0 {
                return Err(Error::Config(format!("start time {} precedes the damping origin {t0}", self.t0)));
            }
        }
        self.stop.validate()?;
        check_len(m0, self.p0.len())?;
        check_len(m0, self.q0.len())
    }
}

/// Current iterate plus the fields solved at `p`.
#[derive(Debug, Clone)]
pub struct IterState {
    pub k: usize,
    pub t: f64,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// w_im(p) at the Ω₀ nodes.
    pub w_im: Vec<f64>,
    /// u_im(p) at all nodes.
    pub u_im: Vec<f64>,
}

/// u_im(p) and the Ω₀-restricted w_im(p): one CCBM and one adjoint solve.
pub fn fields_at(system: &FemSystem, fact: &BlockFactorization, p: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let u = solve_ccbm(fact, system, p)?;
    let w = solve_adjoint(fact, system, &u.im)?;
    Ok((u.im, system.region.restrict(&w.im)))
}

impl IterState {
    pub fn initial(system: &FemSystem, fact: &BlockFactorization, t0: f64, p0: Vec<f64>, q0: Vec<f64>) -> Result<Self> {
        let (u_im, w_im) = fields_at(system, fact, &p0)?;
        Ok(Self { k: 0, t: t0, p: p0, q: q0, w_im, u_im })
    }
}

/// One damped Störmer-Verlet step for q̇ = −η(t)q − force(p), ṗ = q.
///
/// `force_p` is the force at `p`; `force` evaluates it at the new position.
/// Returns (p', q', force(p')).
pub fn verlet_step<F>(p: &[f64], q: &[f64], force_p: &[f64], t: f64, dt: f64, damping: &DampingSchedule, mut force: F) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let eta_k = damping.at(t);
    let q_half: Vec<f64> = q.iter().zip(force_p).map(|(&qi, &fi)| qi - 0.5 * dt * (eta_k * qi + fi)).collect();
    let p_next: Vec<f64> = p.iter().zip(&q_half).map(|(&pi, &qh)| pi + dt * qh).collect();
    let force_next = force(&p_next)?;
    let eta_next = damping.at(t + dt);
    let q_next = q_half.iter().zip(&force_next).map(|(&qh, &fi)| qh - 0.5 * dt * (eta_next * qh + fi)).collect();
    Ok((p_next, q_next, force_next))
}

/// Advances the state by one step; two linear solves (CCBM + adjoint at the
/// new p), the force at the old p coming from the state cache.
pub fn soar_step(state: &IterState, system: &FemSystem, fact: &BlockFactorization, cfg: &SoarConfig) -> Result<IterState> {
    let mut u_next = Vec::new();
    let (p, q, w_im) = verlet_step(&state.p, &state.q, &state.w_im, state.t, cfg.dt, &cfg.damping, |p_new| {
        let (u, w) = fields_at(system, fact, p_new)?;
        u_next = u;
        Ok(w)
    })?;
    Ok(IterState { k: state.k + 1, t: state.t + cfg.dt, p, q, w_im, u_im: u_next })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    DiscrepancyMet,
    MaxIterations,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::DiscrepancyMet => "discrepancy_met",
            Termination::MaxIterations => "max_iterations",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRow {
    pub k: usize,
    pub t: f64,
    /// Value of the stopping discrepancy.
    pub chi: f64,
    /// V = ½‖u_im‖²_{0,Ω}
    pub v: f64,
    /// ‖q‖_P (zero for methods without a velocity).
    pub qnorm_p: f64,
    pub l2err: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    pub p: Vec<f64>,
    pub reason: Termination,
}

impl RunRecord {
    /// Index of the returned iterate.
    pub fn iterations(&self) -> usize {
        self.rows.last().map_or(0, |r| r.k)
    }

    pub fn final_l2err(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.l2err)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,t,chi,V,qnormP,l2err\n");
        for r in &self.rows {
            let l2 = r.l2err.map(|v| v.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{},{}", r.k, r.t, r.chi, r.v, r.qnorm_p, l2).unwrap();
        }
        out
    }
}

/// Bookkeeping shared by SOAR and the baselines so that every method stops
/// through the same discrepancy evaluation.
pub(crate) struct Recorder<'a> {
    pub system: &'a FemSystem,
    pub stop: &'a StopConfig,
    pub rule: DiscrepancyRule,
    pub delta: f64,
    pub truth: Option<&'a [f64]>,
    pub rows: Vec<RunRow>,
}

impl<'a> Recorder<'a> {
    pub fn new(system: &'a FemSystem, stop: &'a StopConfig, rule: DiscrepancyRule, delta: f64, truth: Option<&'a [f64]>) -> Self {
        Self { system, stop, rule, delta, truth, rows: Vec::new() }
    }

    /// Records row k and reports whether iteration must stop.
    pub fn check(&mut self, k: usize, t: f64, p: &[f64], u_im: &[f64], q: Option<&[f64]>) -> Result<Option<Termination>> {
        if p.iter().any(|v| !v.is_finite()) || u_im.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIterate(k));
        }
        let zeros;
        let q = match q {
            Some(q) => q,
            None => {
                zeros = vec![0.0; p.len()];
                &zeros
            }
        };
        let chi = self.stop.evaluate(self.rule, self.system, self.delta, u_im, q)?;
        let v = 0.5 * self.system.e.quad_form(u_im);
        let qnorm_p = norm_p(&self.system.m0, q)?;
        let l2err = match self.truth {
            Some(tr) => Some(l2err(p, tr, &self.system.m0)?),
            None => None,
        };
        log::debug!("k={k} t={t} chi={chi:e} V={v:e} |q|={qnorm_p:e} l2err={l2err:?}");
        self.rows.push(RunRow { k, t, chi, v, qnorm_p, l2err });
        if chi <= self.stop.eps0 {
            Ok(Some(Termination::DiscrepancyMet))
        } else if k >= self.stop.n_max {
            Ok(Some(Termination::MaxIterations))
        } else {
            Ok(None)
        }
    }
}

/// Runs the Störmer-Verlet iteration from (p0, q0) at t0 until the selected
/// discrepancy drops to ε₀ or N_max steps are taken. `delta` is the noise
/// level of the data already loaded into `system`; `truth` (Ω₀
/// coefficients of p†) enables the L2Err column.
pub fn run(system: &FemSystem, fact: &BlockFactorization, delta: f64, cfg: &SoarConfig, truth: Option<&[f64]>) -> Result<RunRecord> {
    cfg.validate(system.m0_len())?;
    let mut rec = Recorder::new(system, &cfg.stop, cfg.rule, delta, truth);
    let mut state = IterState::initial(system, fact, cfg.t0, cfg.p0.clone(), cfg.q0.clone())?;
    loop {
        if let Some(reason) = rec.check(state.k, state.t, &state.p, &state.u_im, Some(&state.q))? {
            return Ok(RunRecord { rows: rec.rows, p: state.p, reason });
        }
        state = soar_step(&state, system, fact, cfg)?;
        if state.q.iter().chain(&state.w_im).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIterate(state.k));
        }
    }
}

/// Step sizes and damping of the second order flow that reproduce the
/// ν-method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuSchedule {
    pub nu: f64,
}

impl NuSchedule {
    /// (Δt_k, η_k); rejected where a denominator vanishes (k = 1, ν = ½).
    pub fn at(&self, k: usize) -> Result<(f64, f64)> {
        nu_schedule(self.nu, k)
    }
}

pub fn nu_schedule(nu: f64, k: usize) -> Result<(f64, f64)> {
    if k < 1 || !(nu > 0.0) {
        return Err(Error::InvalidArgument(format!("nu schedule needs k >= 1 and nu > 0 (k={k}, nu={nu})")));
    }
    let k = k as f64;
    let dt_den = (k + 2.0 * nu - 1.0) * (2.0 * k + 4.0 * nu - 1.0);
    let eta_den = 4.0 * (2.0 * k + 2.0 * nu - 3.0) * (2.0 * k + 2.0 * nu - 1.0) * (k + nu - 1.0);
    if dt_den == 0.0 || eta_den == 0.0 {
        return Err(Error::InvalidArgument(format!("nu schedule has a zero denominator at k={k}, nu={nu}")));
    }
    let dt = 4.0 * (2.0 * k + 2.0 * nu - 1.0) * (k + nu - 1.0) / dt_den;
    let eta_num = (k + 2.0 * nu - 1.0) * (2.0 * k + 4.0 * nu - 1.0) * (2.0 * k + 2.0 * nu - 3.0) - (k - 1.0) * (2.0 * k - 3.0) * (3.0 * k + 3.0 * nu - 1.0);
    Ok((dt, eta_num / eta_den))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c0_values() {
        let s = (2.0 * std::f64::consts::PI).sqrt();
        assert!((c0_constant(2, 1.0) - 5.013257).abs() < 1e-6);
        assert_eq!(c0_constant(2, 3.0), 3.0 * s);
        assert_eq!(c0_constant(3, 1.0), 3.0 * s);
    }

    fn identity(n: usize) -> CsrMatrix {
        CsrMatrix::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    #[test]
    fn discrepancy_values() {
        let e = identity(1);
        assert_eq!(discrepancy_morozov(&[0.0], &e, 0.3).unwrap(), -0.3);
        assert_eq!(discrepancy_morozov(&[0.0], &e, 0.0).unwrap(), 0.0);
        // Unit-area mass with u ≡ 1: norm 1.
        assert_eq!(discrepancy_morozov(&[1.0], &e, 0.5).unwrap(), 0.5);
        assert_eq!(discrepancy_total_energy(&[0.0], &[0.0], &e, &e, 0.0).unwrap(), 0.0);
        assert_eq!(discrepancy_total_energy(&[0.0], &[0.0], &e, &e, 0.04).unwrap(), -0.04);
        assert_eq!(discrepancy_total_energy(&[1.0], &[0.0], &e, &e, 0.25).unwrap(), 0.75);
        assert!(matches!(norm_omega(&e, &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn damping_schedules() {
        assert_eq!(DampingSchedule::Constant(0.3).at(123.0), 0.3);
        let d = DampingSchedule::Dynamic { r: 5.0, t0: 1.0 };
        assert_eq!(d.at(1.0), 5.0);
        assert_eq!(d.at(1.0 + 0.5), 5.0 / 1.5);
    }

    #[test]
    fn force_free_drift() {
        let (p, q, _) = verlet_step(&[1.0, 2.0], &[0.5, -1.0], &[0.0, 0.0], 1.0, 0.1, &DampingSchedule::Constant(0.0), |p| Ok(vec![0.0; p.len()])).unwrap();
        assert!((p[0] - 1.05).abs() < 1e-15 && (p[1] - 1.9).abs() < 1e-15);
        assert_eq!(q, vec![0.5, -1.0]);
    }

    #[test]
    fn frozen_gradient_two_half_kicks() {
        let (dt, g) = (0.3, 2.0);
        let (p, q, _) = verlet_step(&[1.0], &[0.0], &[g], 1.0, dt, &DampingSchedule::Constant(0.0), |_| Ok(vec![g])).unwrap();
        assert!((q[0] + dt * g).abs() < 1e-15);
        assert!((p[0] - (1.0 - dt * dt / 2.0 * g)).abs() < 1e-15);
    }

    #[test]
    fn time_reversal_with_frozen_force() {
        let g = vec![0.7, -1.3, 0.2];
        let p0 = vec![1.0, 0.5, -2.0];
        let q0 = vec![0.1, 0.0, 0.4];
        let damp = DampingSchedule::Constant(0.0);
        let (p1, q1, f1) = verlet_step(&p0, &q0, &g, 1.0, 0.25, &damp, |_| Ok(g.clone())).unwrap();
        let (p2, q2, _) = verlet_step(&p1, &q1, &f1, 1.25, -0.25, &damp, |_| Ok(g.clone())).unwrap();
        for i in 0..3 {
            assert!((p2[i] - p0[i]).abs() <= 1e-12 * (1.0 + p0[i].abs()));
            assert!((q2[i] - q0[i]).abs() <= 1e-12 * (1.0 + q0[i].abs()));
        }
    }

    #[test]
    fn dynamic_damping_uses_both_times() {
        let damp = DampingSchedule::Dynamic { r: 5.0, t0: 1.0 };
        let dt = 0.5;
        let (_, q, _) = verlet_step(&[0.0], &[1.0], &[0.0], 1.0, dt, &damp, |_| Ok(vec![0.0])).unwrap();
        let q_half = 1.0 - dt / 2.0 * 5.0;
        let expected = q_half - dt / 2.0 * (5.0 / 1.5) * q_half;
        assert!((q[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn nu_schedule_values() {
        let (dt, _) = nu_schedule(0.5, 2).unwrap();
        assert!((dt - 2.4).abs() < 1e-14);
        assert!(nu_schedule(0.5, 1).is_err());
        for nu in [0.5, 1.0, 2.0] {
            for k in 2..=1000 {
                assert!(NuSchedule { nu }.at(k).unwrap().0 > 0.0);
            }
        }
    }
}
