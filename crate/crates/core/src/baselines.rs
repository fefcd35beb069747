//! Comparison methods: damped Landweber-type dynamical regularization (DRM),
//! the ν-method and Nesterov acceleration. All of them share the CCBM and
//! adjoint solves and stop through the same Morozov discrepancy check as
//! SOAR.

use crate::assembly::FemSystem;
use crate::error::{Error, Result};
use crate::linsolve::BlockFactorization;
use crate::regularizer::{fields_at, DiscrepancyRule, Recorder, RunRecord, StopConfig};

/// ε(t) = c/(t ln t)
pub fn drm_epsilon(t: f64, c_eps: f64) -> f64 {
    c_eps / (t * t.ln())
}

/// One DRM update from (p_k, q_k) with the gradient w at p_k and the
/// regularization weight `eps`.
pub fn drm_step(p: &[f64], q: &[f64], w: &[f64], eps: f64, eta: f64, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let s = 1.0 / (1.0 + eta * dt);
    let q_next: Vec<f64> = q.iter().zip(w).zip(p).map(|((&qi, &wi), &pi)| s * qi - dt * s * (wi + eps * pi)).collect();
    let p_next = p.iter().zip(&q_next).map(|(&pi, &qi)| pi + dt * qi).collect();
    (p_next, q_next)
}

/// (μ_k, ω_k) of the ν-method, k ≥ 1.
pub fn nu_coefficients(k: usize, nu: f64) -> (f64, f64) {
    assert!(k >= 1, "nu-method coefficients start at k = 1");
    if k == 1 {
        return (0.0, (4.0 * nu + 2.0) / (4.0 * nu + 1.0));
    }
    let k = k as f64;
    let mu = (k - 1.0) * (2.0 * k - 3.0) * (2.0 * k + 2.0 * nu - 1.0) / ((k + 2.0 * nu - 1.0) * (2.0 * k + 4.0 * nu - 1.0) * (2.0 * k + 2.0 * nu - 3.0));
    let omega = 4.0 * (2.0 * k + 2.0 * nu - 1.0) * (k + nu - 1.0) / ((k + 2.0 * nu - 1.0) * (2.0 * k + 4.0 * nu - 1.0));
    (mu, omega)
}

/// p_{k+1} = p_k + μ_k(p_k − p_{k−1}) − ω_k w
pub fn nu_step(k: usize, nu: f64, p: &[f64], p_prev: &[f64], w: &[f64]) -> Vec<f64> {
    let (mu, omega) = nu_coefficients(k, nu);
    p.iter().zip(p_prev).zip(w).map(|((&pk, &pm), &wi)| pk + mu * (pk - pm) - omega * wi).collect()
}

/// (k−1)/(k+α−1)
pub fn nesterov_factor(k: usize, alpha: f64) -> f64 {
    let k = k as f64;
    (k - 1.0) / (k + alpha - 1.0)
}

pub fn nesterov_extrapolate(k: usize, alpha: f64, p: &[f64], p_prev: &[f64]) -> Vec<f64> {
    let c = nesterov_factor(k, alpha);
    p.iter().zip(p_prev).map(|(&pk, &pm)| pk + c * (pk - pm)).collect()
}

/// p_{k+1} = z_k − ω w
pub fn nesterov_step(z: &[f64], w: &[f64], omega: f64) -> Vec<f64> {
    z.iter().zip(w).map(|(&zi, &wi)| zi - omega * wi).collect()
}

/// Where Nesterov's gradient is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientPoint {
    /// At the extrapolated point z_k (the accelerated gradient scheme).
    Extrapolated,
    /// At p_k.
    Current,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineMethod {
    Drm { eta: f64, dt: f64, c_eps: f64 },
    Nu { nu: f64 },
    Nesterov { alpha: f64, omega: f64, gradient_at: GradientPoint },
}

impl BaselineMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineMethod::Drm { .. } => "drm",
            BaselineMethod::Nu { .. } => "nu",
            BaselineMethod::Nesterov { .. } => "nesterov",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BaselineMethod::Drm { eta, dt, c_eps } => {
                if !(dt > 0.0) {
                    return Err(Error::Config(format!("drm.dt must be > 0, got {dt}")));
                }
                if !(eta >= 0.0) {
                    return Err(Error::Config(format!("drm.eta must be >= 0, got {eta}")));
                }
                if !(c_eps >= 0.0) {
                    return Err(Error::Config(format!("drm.c_eps must be >= 0, got {c_eps}")));
                }
            }
            BaselineMethod::Nu { nu } => {
                if !(nu > 0.0) {
                    return Err(Error::Config(format!("nu.nu must be > 0, got {nu}")));
                }
            }
            BaselineMethod::Nesterov { alpha, omega, .. } => {
                if !(alpha >= 3.0) {
                    return Err(Error::Config(format!("nesterov.alpha must be >= 3, got {alpha}")));
                }
                if !(omega > 0.0) {
                    return Err(Error::Config(format!("nesterov.omega must be > 0, got {omega}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    pub stop: StopConfig,
    /// Start time for DRM; ignored by the other methods.
    pub t0: f64,
    pub p0: Vec<f64>,
    /// Initial DRM velocity; ignored by the other methods.
    pub q0: Vec<f64>,
}

/// Runs a baseline until the Morozov discrepancy drops to ε₀ or N_max
/// updates are taken. The ν-method and Nesterov start from p¹ = p⁰ and count
/// updates from there.
pub fn run_baseline(system: &FemSystem, fact: &BlockFactorization, delta: f64, cfg: &BaselineConfig, truth: Option<&[f64]>) -> Result<RunRecord> {
    cfg.method.validate()?;
    cfg.stop.validate()?;
    let m0 = system.m0_len();
    for got in [cfg.p0.len(), cfg.q0.len()] {
        if got != m0 {
            return Err(Error::DimensionMismatch { expected: m0, got });
        }
    }
    let mut rec = Recorder::new(system, &cfg.stop, DiscrepancyRule::Morozov, delta, truth);
    let finish = |rec: Recorder, p: Vec<f64>, reason| Ok(RunRecord { rows: rec.rows, p, reason });
    match cfg.method {
        BaselineMethod::Drm { eta, dt, c_eps } => {
            let (mut p, mut q) = (cfg.p0.clone(), cfg.q0.clone());
            let mut t = cfg.t0;
            for k in 0.. {
                let (u_im, w) = fields_at(system, fact, &p)?;
                if let Some(reason) = rec.check(k, t, &p, &u_im, Some(&q))? {
                    return finish(rec, p, reason);
                }
                // ε is singular at t = 1, so it is taken at the end of the step.
                let eps = drm_epsilon(t + dt, c_eps);
                (p, q) = drm_step(&p, &q, &w, eps, eta, dt);
                t += dt;
            }
            unreachable!()
        }
        BaselineMethod::Nu { nu } => {
            let (mut p_prev, mut p) = (cfg.p0.clone(), cfg.p0.clone());
            for j in 0.. {
                let (u_im, w) = fields_at(system, fact, &p)?;
                if let Some(reason) = rec.check(j, j as f64, &p, &u_im, None)? {
                    return finish(rec, p, reason);
                }
                let next = nu_step(j + 1, nu, &p, &p_prev, &w);
                p_prev = std::mem::replace(&mut p, next);
            }
            unreachable!()
        }
        BaselineMethod::Nesterov { alpha, omega, gradient_at } => {
            let (mut p_prev, mut p) = (cfg.p0.clone(), cfg.p0.clone());
            for j in 0.. {
                let (u_im, w_p) = fields_at(system, fact, &p)?;
                if let Some(reason) = rec.check(j, j as f64, &p, &u_im, None)? {
                    return finish(rec, p, reason);
                }
                let z = nesterov_extrapolate(j + 1, alpha, &p, &p_prev);
                let w = match gradient_at {
                    GradientPoint::Current => w_p,
                    GradientPoint::Extrapolated => fields_at(system, fact, &z)?.1,
                };
                let next = nesterov_step(&z, &w, omega);
                p_prev = std::mem::replace(&mut p, next);
            }
            unreachable!()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_nu_coefficients() {
        let (mu, omega) = nu_coefficients(1, 0.5);
        assert_eq!(mu, 0.0);
        assert!((omega - 4.0 / 3.0).abs() < 1e-15);
        let (mu, omega) = nu_coefficients(2, 0.5);
        assert!((mu - 0.2).abs() < 1e-15);
        assert!((omega - 2.4).abs() < 1e-14);
    }

    #[test]
    fn chebyshev_steps_stay_bounded() {
        for k in 1..=10_000 {
            let (_, omega) = nu_coefficients(k, 0.5);
            assert!(omega > 0.0 && omega <= 4.0, "k={k} omega={omega}");
        }
    }

    #[test]
    fn nesterov_factor_values() {
        assert_eq!(nesterov_factor(1, 3.0), 0.0);
        assert_eq!(nesterov_factor(2, 3.0), 0.25);
        let mut last = -1.0;
        for k in 1..1000 {
            let f = nesterov_factor(k, 3.0);
            assert!(f > last && f < 1.0);
            last = f;
        }
    }

    #[test]
    fn drm_step_by_hand() {
        let (p, q) = drm_step(&[1.0], &[2.0], &[0.5], 0.1, 1.0, 2.0);
        let q1 = 2.0 / 3.0 - 2.0 / 3.0 * (0.5 + 0.1);
        assert!((q[0] - q1).abs() < 1e-15);
        assert!((p[0] - (1.0 + 2.0 * q1)).abs() < 1e-15);
    }

    #[test]
    fn drm_epsilon_decays() {
        assert!((drm_epsilon(11.0, 0.1) - 0.1 / (11.0 * 11f64.ln())).abs() < 1e-18);
        assert!(drm_epsilon(1.0, 0.1).is_infinite());
    }

    #[test]
    fn recurrence_by_hand() {
        let p = nu_step(2, 0.5, &[1.0], &[0.0], &[1.0]);
        assert!((p[0] - (1.0 + 0.2 - 2.4)).abs() < 1e-14);
        let z = nesterov_extrapolate(2, 3.0, &[1.0], &[0.0]);
        assert_eq!(z, vec![1.25]);
        assert_eq!(nesterov_step(&z, &[0.1], 10.0), vec![0.25]);
    }
}
