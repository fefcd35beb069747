//! Flat dotted-key JSON configuration shared by the command line tool.
//!
//! Every key has a default; [`Config::to_json`] echoes the full set so that a
//! provenance record can be fed back as a config file.

use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::baselines::GradientPoint;
use crate::data_gen::Example;
use crate::error::{Error, Result};
use crate::experiments::{ExperimentSpec, InitialGuess, Method, MethodParams, RunSettings, Sweep};
use crate::regularizer::{c0_constant, StopConfig};

#[derive(Debug, Clone)]
pub struct Config {
    pub example: String,
    pub seed: u64,
    pub method: Method,
    pub radius: f64,
    pub fine_rings: usize,
    pub coarse_rings: usize,
    pub mesh_file: Option<PathBuf>,
    pub data_file: Option<PathBuf>,
    pub delta_prime: f64,
    pub params: MethodParams,
    pub t0: f64,
    pub tau: f64,
    pub absorb_c0: bool,
    /// None means C₀ of the disk of radius `radius`.
    pub c0: Option<f64>,
    pub eps0: f64,
    pub n_max: usize,
    pub p0: InitialGuess,
    pub q0: f64,
    pub sweep_axis: String,
    pub sweep_values: Vec<Value>,
    pub compare_methods: Vec<Method>,
    pub compare_delta_primes: Vec<f64>,
}

impl Default for Config {
    fn default() -> Self {
        let params = MethodParams::default();
        Self {
            example: "example1".into(),
            seed: 1,
            method: Method::Soar1,
            radius: 1.0,
            fine_rings: 64,
            coarse_rings: 8,
            mesh_file: None,
            data_file: None,
            delta_prime: 0.05,
            params,
            t0: 1.0,
            tau: 0.01,
            absorb_c0: true,
            c0: None,
            eps0: 1e-6,
            n_max: 1000,
            p0: InitialGuess::Constant(0.0),
            q0: 0.0,
            sweep_axis: "delta_prime".into(),
            sweep_values: vec![json!(0.05)],
            compare_methods: Method::ALL.to_vec(),
            compare_delta_primes: vec![0.05, 0.1, 0.2],
        }
    }
}

fn bad(key: &str, want: &str, v: &Value) -> Error {
    Error::Config(format!("{key}: expected {want}, got {v}"))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    v.as_f64().ok_or_else(|| bad(key, "a number", v))
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    v.as_u64().map(|n| n as usize).ok_or_else(|| bad(key, "a non-negative integer", v))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| bad(key, "a string", v))
}

fn as_path(key: &str, v: &Value) -> Result<Option<PathBuf>> {
    match v {
        Value::Null => Ok(None),
        Value::String(s) if s.is_empty() => Ok(None),
        Value::String(s) => Ok(Some(PathBuf::from(s))),
        _ => Err(bad(key, "a path string or null", v)),
    }
}

fn as_array<'a>(key: &str, v: &'a Value) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| bad(key, "an array", v))
}

fn path_value(p: &Option<PathBuf>) -> Value {
    p.as_ref().map_or(Value::Null, |p| json!(p.to_string_lossy()))
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::default();
        cfg.merge_json(&serde_json::from_str(&text)?)?;
        Ok(cfg)
    }

    /// Applies every key of `value`, which must be a flat object or a
    /// provenance record holding one under "config".
    pub fn merge_json(&mut self, value: &Value) -> Result<()> {
        let obj = value.as_object().ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        let obj = match obj.get("config") {
            Some(Value::Object(inner)) => inner,
            _ => obj,
        };
        for (k, v) in obj {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Applies a `key=value` override; the value is parsed as JSON and
    /// falls back to a plain string.
    pub fn set_str(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
        let v = v.trim();
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        self.set(k.trim(), &value)
    }

    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        let p = &mut self.params;
        match key {
            "example" => {
                let name = as_str(key, v)?;
                name.parse::<Example>()?;
                self.example = name.to_string();
            }
            "seed" => self.seed = v.as_u64().ok_or_else(|| bad(key, "a non-negative integer", v))?,
            "method" => self.method = as_str(key, v)?.parse()?,
            "mesh.radius" => self.radius = as_f64(key, v)?,
            "mesh.fine_rings" => self.fine_rings = as_usize(key, v)?,
            "mesh.coarse_rings" => self.coarse_rings = as_usize(key, v)?,
            "mesh.file" => self.mesh_file = as_path(key, v)?,
            "data.file" => self.data_file = as_path(key, v)?,
            "noise.delta_prime" => self.delta_prime = as_f64(key, v)?,
            "soar.dt" => p.soar_dt = as_f64(key, v)?,
            "soar.eta" => p.soar_eta = as_f64(key, v)?,
            "soar.r" => p.soar_r = as_f64(key, v)?,
            "soar.t0" => self.t0 = as_f64(key, v)?,
            "drm.eta" => p.drm_eta = as_f64(key, v)?,
            "drm.dt" => p.drm_dt = as_f64(key, v)?,
            "drm.c_eps" => p.drm_c_eps = as_f64(key, v)?,
            "nu.nu" => p.nu = as_f64(key, v)?,
            "nesterov.alpha" => p.nesterov_alpha = as_f64(key, v)?,
            "nesterov.omega" => p.nesterov_omega = as_f64(key, v)?,
            "nesterov.gradient_at" => {
                p.nesterov_gradient_at = match as_str(key, v)? {
                    "z" | "extrapolated" => GradientPoint::Extrapolated,
                    "p" | "current" => GradientPoint::Current,
                    _ => return Err(bad(key, "\"z\" or \"p\"", v)),
                }
            }
            "stop.tau" => self.tau = as_f64(key, v)?,
            "stop.absorb_c0" => self.absorb_c0 = v.as_bool().ok_or_else(|| bad(key, "a boolean", v))?,
            "stop.c0" => self.c0 = if v.is_null() { None } else { Some(as_f64(key, v)?) },
            "stop.eps0" => self.eps0 = as_f64(key, v)?,
            "stop.n_max" => self.n_max = as_usize(key, v)?,
            "init.p0" => {
                self.p0 = match v {
                    Value::String(s) if s == "truth" => InitialGuess::Truth,
                    _ => InitialGuess::Constant(as_f64(key, v).map_err(|_| bad(key, "a number or \"truth\"", v))?),
                }
            }
            "init.q0" => self.q0 = as_f64(key, v)?,
            "sweep.axis" => {
                let axis = as_str(key, v)?;
                if !["delta_prime", "tau", "dt", "eta", "r", "method"].contains(&axis) {
                    return Err(bad(key, "one of delta_prime, tau, dt, eta, r, method", v));
                }
                self.sweep_axis = axis.to_string();
            }
            "sweep.values" => self.sweep_values = as_array(key, v)?.clone(),
            "compare.methods" => self.compare_methods = as_array(key, v)?.iter().map(|m| as_str(key, m).and_then(str::parse)).collect::<Result<_>>()?,
            "compare.delta_primes" => self.compare_delta_primes = as_array(key, v)?.iter().map(|x| as_f64(key, x)).collect::<Result<_>>()?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn example(&self) -> Result<Example> {
        self.example.parse()
    }

    pub fn stop(&self) -> StopConfig {
        StopConfig { tau: self.tau, absorb_c0: self.absorb_c0, c0: self.c0.unwrap_or_else(|| c0_constant(2, self.radius)), eps0: self.eps0, n_max: self.n_max }
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings { method: self.method, params: self.params, stop: self.stop(), t0: self.t0, p0: self.p0, q0: self.q0 }
    }

    pub fn sweep(&self) -> Result<Sweep> {
        let key = "sweep.values";
        let nums = || self.sweep_values.iter().map(|v| as_f64(key, v)).collect::<Result<Vec<f64>>>();
        Ok(match self.sweep_axis.as_str() {
            "delta_prime" => Sweep::DeltaPrime(nums()?),
            "tau" => Sweep::Tau(nums()?),
            "dt" => Sweep::Dt(nums()?),
            "eta" => Sweep::Eta(nums()?),
            "r" => Sweep::R(nums()?),
            "method" => Sweep::Method(self.sweep_values.iter().map(|v| as_str(key, v).and_then(str::parse)).collect::<Result<_>>()?),
            other => return Err(Error::Config(format!("sweep.axis: unknown axis '{other}'"))),
        })
    }

    pub fn experiment(&self) -> Result<ExperimentSpec> {
        Ok(ExperimentSpec {
            example: self.example()?,
            radius: self.radius,
            fine_rings: self.fine_rings,
            coarse_rings: self.coarse_rings,
            delta_prime: self.delta_prime,
            settings: self.settings(),
            seed: self.seed,
            sweep: self.sweep()?,
        })
    }

    /// Checks ranges that do not depend on the subcommand.
    pub fn validate(&self) -> Result<()> {
        self.settings().validate()?;
        if !(self.radius > 0.0) {
            return Err(Error::Config(format!("mesh.radius must be > 0, got {}", self.radius)));
        }
        if self.coarse_rings == 0 {
            return Err(Error::Config("mesh.coarse_rings must be >= 1".into()));
        }
        if self.fine_rings <= self.coarse_rings {
            return Err(Error::Config(format!("mesh.fine_rings ({}) must exceed mesh.coarse_rings ({})", self.fine_rings, self.coarse_rings)));
        }
        if !(0.0..1.0).contains(&self.delta_prime) {
            return Err(Error::Config(format!("noise.delta_prime must lie in [0, 1), got {}", self.delta_prime)));
        }
        Ok(())
    }

    /// Every key with its current value.
    pub fn to_json(&self) -> Value {
        let p = &self.params;
        let mut m = Map::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_string(), v);
        };
        put("example", json!(self.example));
        put("seed", json!(self.seed));
        put("method", json!(self.method.name()));
        put("mesh.radius", json!(self.radius));
        put("mesh.fine_rings", json!(self.fine_rings));
        put("mesh.coarse_rings", json!(self.coarse_rings));
        put("mesh.file", path_value(&self.mesh_file));
        put("data.file", path_value(&self.data_file));
        put("noise.delta_prime", json!(self.delta_prime));
        put("soar.dt", json!(p.soar_dt));
        put("soar.eta", json!(p.soar_eta));
        put("soar.r", json!(p.soar_r));
        put("soar.t0", json!(self.t0));
        put("drm.eta", json!(p.drm_eta));
        put("drm.dt", json!(p.drm_dt));
        put("drm.c_eps", json!(p.drm_c_eps));
        put("nu.nu", json!(p.nu));
        put("nesterov.alpha", json!(p.nesterov_alpha));
        put("nesterov.omega", json!(p.nesterov_omega));
        put(
            "nesterov.gradient_at",
            json!(match p.nesterov_gradient_at {
                GradientPoint::Extrapolated => "z",
                GradientPoint::Current => "p",
            }),
        );
        put("stop.tau", json!(self.tau));
        put("stop.absorb_c0", json!(self.absorb_c0));
        put("stop.c0", self.c0.map_or(Value::Null, |c| json!(c)));
        put("stop.eps0", json!(self.eps0));
        put("stop.n_max", json!(self.n_max));
        put(
            "init.p0",
            match self.p0 {
                InitialGuess::Constant(c) => json!(c),
                InitialGuess::Truth => json!("truth"),
            },
        );
        put("init.q0", json!(self.q0));
        put("sweep.axis", json!(self.sweep_axis));
        put("sweep.values", Value::Array(self.sweep_values.clone()));
        put("compare.methods", json!(self.compare_methods.iter().map(|m| m.name()).collect::<Vec<_>>()));
        put("compare.delta_primes", json!(self.compare_delta_primes));
        Value::Object(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut cfg = Config::default();
        cfg.set_str("soar.dt=2.5").unwrap();
        cfg.set_str("method=nesterov").unwrap();
        cfg.set_str("init.p0=truth").unwrap();
        cfg.set_str("sweep.values=[0.1,0.2]").unwrap();
        cfg.set_str("stop.c0=3").unwrap();
        let echoed = cfg.to_json();
        let mut back = Config::default();
        back.merge_json(&json!({ "config": echoed.clone() })).unwrap();
        assert_eq!(back.to_json(), echoed);
    }

    #[test]
    fn unknown_keys_and_bad_types_are_rejected() {
        let mut cfg = Config::default();
        assert!(matches!(cfg.set_str("soar.dtt=1"), Err(Error::Config(_))));
        assert!(cfg.set_str("soar.dt=fast").is_err());
        assert!(cfg.set_str("no_equals").is_err());
        assert!(cfg.set_str("sweep.axis=gamma").is_err());
    }

    #[test]
    fn zero_time_step_names_the_field() {
        let mut cfg = Config::default();
        cfg.set_str("soar.dt=0").unwrap();
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("soar.dt"), "{msg}");
    }

    #[test]
    fn c0_defaults_to_the_disk_constant() {
        let mut cfg = Config::default();
        assert!((cfg.stop().c0 - c0_constant(2, 1.0)).abs() < 1e-15);
        cfg.set_str("mesh.radius=3").unwrap();
        assert!((cfg.stop().c0 - c0_constant(2, 3.0)).abs() < 1e-15);
    }
}
