//! C ABI over soar-core.
//!
//! Objects are opaque handles created by `soar_*_new`/`soar_*_generate`
//! style functions and released with the matching `soar_*_free`. Fallible
//! calls return a [`SoarStatus`]; the message of the last failure on the
//! calling thread is available from [`soar_last_error_message`].

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use soar_core::baselines::GradientPoint;
use soar_core::data_gen::Example;
use soar_core::experiments::{row_seed, InitialGuess, Method, MethodParams, RunSettings, Scenario};
use soar_core::mesh::{generate_disk_mesh, load_mesh, Mesh};
use soar_core::regularizer::{c0_constant, RunRecord, StopConfig, Termination};
use soar_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoarStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Mesh = 4,
    Singular = 5,
    NotConverged = 6,
    NonFinite = 7,
    Io = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoarMethod {
    Soar1 = 1,
    Soar2 = 2,
    Soar3 = 3,
    Soar4 = 4,
    Drm = 5,
    Nu = 6,
    Nesterov = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoarExample {
    Example1 = 1,
    Example2 = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoarTermination {
    DiscrepancyMet = 0,
    MaxIterations = 1,
}

/// Run parameters; obtain defaults from `soar_run_config_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SoarRunConfig {
    pub method: SoarMethod,
    pub delta_prime: f64,
    pub seed: u64,
    pub dt: f64,
    pub eta: f64,
    pub r: f64,
    pub t0: f64,
    pub tau: f64,
    pub absorb_c0: bool,
    /// Non-positive selects the disk constant for the problem radius.
    pub c0: f64,
    pub eps0: f64,
    pub n_max: usize,
    pub p0: f64,
    pub q0: f64,
    pub drm_eta: f64,
    pub drm_dt: f64,
    pub drm_c_eps: f64,
    pub nu: f64,
    pub nesterov_alpha: f64,
    pub nesterov_omega: f64,
    /// Evaluate Nesterov's gradient at the extrapolated point (else at p_k).
    pub nesterov_gradient_at_z: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SoarRunRow {
    pub k: usize,
    pub t: f64,
    pub chi: f64,
    pub v: f64,
    pub qnorm_p: f64,
    /// NaN when no reference source is known.
    pub l2err: f64,
}

pub struct SoarMesh(Mesh);

pub struct SoarProblem {
    scenario: Scenario,
    radius: f64,
}

pub struct SoarRun {
    record: RunRecord,
    delta: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SoarStatus {
    match e {
        Error::Parse { .. } => SoarStatus::Parse,
        Error::EmptyRegion | Error::InvalidBoundary(_) | Error::DegenerateElement { .. } | Error::MissingBoundaryValue(_) => SoarStatus::Mesh,
        Error::SingularSystem { .. } => SoarStatus::Singular,
        Error::NotConverged(_) => SoarStatus::NotConverged,
        Error::NonFiniteIterate(_) => SoarStatus::NonFinite,
        Error::Io(_) => SoarStatus::Io,
        Error::Json(_) => SoarStatus::Parse,
        Error::DimensionMismatch { .. } | Error::ZeroReference | Error::InvalidArgument(_) | Error::Config(_) => SoarStatus::InvalidArgument,
    }
}

/// Runs `f`, recording failures and panics in the thread-local message.
fn guard(f: impl FnOnce() -> Result<(), Error>) -> SoarStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SoarStatus::Ok,
        Ok(Err(e)) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SoarStatus::Panic
        }
    }
}

fn null_error(what: &str) -> Error {
    Error::InvalidArgument(format!("{what} is null"))
}

/// Checks an out-pointer, clears it, and stores `value` there on success.
unsafe fn emit<T>(out: *mut *mut T, make: impl FnOnce() -> Result<T, Error>) -> SoarStatus {
    if out.is_null() {
        set_last_error("output pointer is null".into());
        return SoarStatus::NullPointer;
    }
    *out = ptr::null_mut();
    let mut value = None;
    let status = guard(|| {
        value = Some(make()?);
        Ok(())
    });
    if let Some(v) = value {
        *out = Box::into_raw(Box::new(v));
    }
    status
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn soar_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn soar_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Generates a structured disk mesh.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn soar_mesh_generate(radius: f64, rings: usize, out: *mut *mut SoarMesh) -> SoarStatus {
    emit(out, || {
        if !(radius > 0.0) || rings == 0 {
            return Err(Error::InvalidArgument(format!("need radius > 0 and rings >= 1 (got {radius}, {rings})")));
        }
        Ok(SoarMesh(generate_disk_mesh(radius, rings)))
    })
}

/// Loads a mesh file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn soar_mesh_load(path: *const c_char, out: *mut *mut SoarMesh) -> SoarStatus {
    emit(out, || {
        if path.is_null() {
            return Err(null_error("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|e| Error::InvalidArgument(format!("path is not UTF-8: {e}")))?;
        Ok(SoarMesh(load_mesh(path)?))
    })
}

/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn soar_mesh_node_count(mesh: *const SoarMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.node_count())
}

/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn soar_mesh_triangle_count(mesh: *const SoarMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.triangle_count())
}

/// Longest triangle side; NaN for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn soar_mesh_h(mesh: *const SoarMesh) -> f64 {
    mesh.as_ref().map_or(f64::NAN, |m| m.0.h)
}

/// # Safety
/// `mesh` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn soar_mesh_free(mesh: *mut SoarMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Builds a problem: exact data on a fine disk mesh, and the factorized
/// forward operator on a coarse one.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn soar_problem_new(example: SoarExample, radius: f64, fine_rings: usize, coarse_rings: usize, out: *mut *mut SoarProblem) -> SoarStatus {
    emit(out, || {
        let example = match example {
            SoarExample::Example1 => Example::Example1,
            SoarExample::Example2 => Example::Example2,
        };
        if coarse_rings == 0 {
            return Err(Error::InvalidArgument("coarse_rings must be >= 1".into()));
        }
        Ok(SoarProblem { scenario: Scenario::build(example, radius, fine_rings, coarse_rings)?, radius })
    })
}

/// Number of unknown source coefficients.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn soar_problem_m0(problem: *const SoarProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.scenario.truth.len())
}

/// Copies the true source coefficients into `buf` (length must equal m0).
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn soar_problem_truth(problem: *const SoarProblem, buf: *mut f64, len: usize) -> SoarStatus {
    let Some(problem) = problem.as_ref() else {
        set_last_error("problem is null".into());
        return SoarStatus::NullPointer;
    };
    copy_out(&problem.scenario.truth, buf, len)
}

/// # Safety
/// `problem` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn soar_problem_free(problem: *mut SoarProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

#[no_mangle]
pub extern "C" fn soar_run_config_default() -> SoarRunConfig {
    let p = MethodParams::default();
    let s = StopConfig::default();
    SoarRunConfig {
        method: SoarMethod::Soar1,
        delta_prime: 0.05,
        seed: 1,
        dt: p.soar_dt,
        eta: p.soar_eta,
        r: p.soar_r,
        t0: 1.0,
        tau: s.tau,
        absorb_c0: s.absorb_c0,
        c0: 0.0,
        eps0: s.eps0,
        n_max: s.n_max,
        p0: 0.0,
        q0: 0.0,
        drm_eta: p.drm_eta,
        drm_dt: p.drm_dt,
        drm_c_eps: p.drm_c_eps,
        nu: p.nu,
        nesterov_alpha: p.nesterov_alpha,
        nesterov_omega: p.nesterov_omega,
        nesterov_gradient_at_z: true,
    }
}

fn settings_from(cfg: &SoarRunConfig, radius: f64) -> RunSettings {
    let method = match cfg.method {
        SoarMethod::Soar1 => Method::Soar1,
        SoarMethod::Soar2 => Method::Soar2,
        SoarMethod::Soar3 => Method::Soar3,
        SoarMethod::Soar4 => Method::Soar4,
        SoarMethod::Drm => Method::Drm,
        SoarMethod::Nu => Method::Nu,
        SoarMethod::Nesterov => Method::Nesterov,
    };
    RunSettings {
        method,
        params: MethodParams {
            soar_dt: cfg.dt,
            soar_eta: cfg.eta,
            soar_r: cfg.r,
            drm_eta: cfg.drm_eta,
            drm_dt: cfg.drm_dt,
            drm_c_eps: cfg.drm_c_eps,
            nu: cfg.nu,
            nesterov_alpha: cfg.nesterov_alpha,
            nesterov_omega: cfg.nesterov_omega,
            nesterov_gradient_at: if cfg.nesterov_gradient_at_z { GradientPoint::Extrapolated } else { GradientPoint::Current },
        },
        stop: StopConfig {
            tau: cfg.tau,
            absorb_c0: cfg.absorb_c0,
            c0: if cfg.c0 > 0.0 { cfg.c0 } else { c0_constant(2, radius) },
            eps0: cfg.eps0,
            n_max: cfg.n_max,
        },
        t0: cfg.t0,
        p0: InitialGuess::Constant(cfg.p0),
        q0: cfg.q0,
    }
}

/// Draws noisy data (seeded by `config.seed`) and runs the configured
/// method. The same seed and noise level give the same data as the
/// command line `solve`.
///
/// # Safety
/// `problem` and `config` must be live pointers and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn soar_run(problem: *const SoarProblem, config: *const SoarRunConfig, out: *mut *mut SoarRun) -> SoarStatus {
    emit(out, || {
        let problem = problem.as_ref().ok_or_else(|| null_error("problem"))?;
        let cfg = config.as_ref().ok_or_else(|| null_error("config"))?;
        let data = problem.scenario.noisy_data(cfg.delta_prime, row_seed(cfg.seed, 0))?;
        let record = problem.scenario.run(&data, &settings_from(cfg, problem.radius))?;
        Ok(SoarRun { record, delta: data.delta })
    })
}

/// Index of the returned iterate.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn soar_run_iterations(run: *const SoarRun) -> usize {
    run.as_ref().map_or(0, |r| r.record.iterations())
}

/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn soar_run_termination(run: *const SoarRun) -> SoarTermination {
    match run.as_ref().map(|r| r.record.reason) {
        Some(Termination::DiscrepancyMet) => SoarTermination::DiscrepancyMet,
        _ => SoarTermination::MaxIterations,
    }
}

/// Relative L² error of the returned source; NaN for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn soar_run_l2err(run: *const SoarRun) -> f64 {
    run.as_ref().and_then(|r| r.record.final_l2err()).unwrap_or(f64::NAN)
}

/// Noise level δ of the data used.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn soar_run_delta(run: *const SoarRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.delta)
}

/// Number of history rows (iterations + 1).
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn soar_run_history_len(run: *const SoarRun) -> usize {
    run.as_ref().map_or(0, |r| r.record.rows.len())
}

/// # Safety
/// `run` must be a live handle and `row` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn soar_run_history_row(run: *const SoarRun, index: usize, row: *mut SoarRunRow) -> SoarStatus {
    if run.is_null() || row.is_null() {
        set_last_error("run or row pointer is null".into());
        return SoarStatus::NullPointer;
    }
    let rows = &(*run).record.rows;
    let Some(r) = rows.get(index) else {
        set_last_error(format!("history index {index} out of range (len {})", rows.len()));
        return SoarStatus::InvalidArgument;
    };
    *row = SoarRunRow { k: r.k, t: r.t, chi: r.chi, v: r.v, qnorm_p: r.qnorm_p, l2err: r.l2err.unwrap_or(f64::NAN) };
    SoarStatus::Ok
}

/// Copies the reconstructed coefficients into `buf` (length must equal m0).
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn soar_run_source(run: *const SoarRun, buf: *mut f64, len: usize) -> SoarStatus {
    let Some(run) = run.as_ref() else {
        set_last_error("run is null".into());
        return SoarStatus::NullPointer;
    };
    copy_out(&run.record.p, buf, len)
}

/// # Safety
/// `run` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn soar_run_free(run: *mut SoarRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> SoarStatus {
    if buf.is_null() {
        set_last_error("buffer is null".into());
        return SoarStatus::NullPointer;
    }
    if len != src.len() {
        set_last_error(format!("buffer length {len} does not match {}", src.len()));
        return SoarStatus::InvalidArgument;
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, len);
    SoarStatus::Ok
}
