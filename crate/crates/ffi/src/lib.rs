//! C interface to castlab.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns a
//! [`CastlabStatus`]; on failure [`castlab_last_error`] describes it.
//! Panics are caught and reported as [`CastlabStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use castlab::config::parse_config;
use castlab::gibbs::{gradient_descent, DescentOptions, Multipliers};
use castlab::oracle::solve_lp;
use castlab::protocol::ProtocolVariant;
use castlab::simulator::{run_simulation, verify_detailed_balance, SimConfig, SimMetrics};
use castlab::{NetworkConfig, NodePowerProfile, ThroughputMode};

pub const CASTLAB_MODE_GROUPPUT: u32 = 0;
pub const CASTLAB_MODE_ANYPUT: u32 = 1;
pub const CASTLAB_VARIANT_CAPTURE: u32 = 0;
pub const CASTLAB_VARIANT_NONCAPTURE: u32 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CastlabStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    InvalidArgument = 4,
    ComputationFailed = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Network of nodes with power profiles and a topology.
pub struct CastlabNetwork {
    inner: NetworkConfig,
}

/// Full simulation setup.
pub struct CastlabSimConfig {
    inner: SimConfig,
}

/// Metrics of a finished simulation.
pub struct CastlabSimResult {
    inner: SimMetrics,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).expect("nul bytes removed"));
}

struct Fail(CastlabStatus, String);

impl From<castlab::Error> for Fail {
    fn from(e: castlab::Error) -> Self {
        let status = match e {
            castlab::Error::InvalidConfig(_) => CastlabStatus::InvalidConfig,
            castlab::Error::Domain(_) | castlab::Error::SizeGuard { .. } | castlab::Error::WrongSolver(_) => CastlabStatus::InvalidArgument,
            _ => CastlabStatus::ComputationFailed,
        };
        Fail(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CastlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CastlabStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CastlabStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(CastlabStatus::NullArgument, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(CastlabStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn fill(dst: *mut f64, len: usize, src: &[f64], what: &str) -> Result<(), Fail> {
    if dst.is_null() {
        return Ok(());
    }
    if len < src.len() {
        return Err(Fail(CastlabStatus::BufferTooSmall, format!("{what} needs {} entries, buffer holds {len}", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

fn mode(m: u32) -> Result<ThroughputMode, Fail> {
    match m {
        CASTLAB_MODE_GROUPPUT => Ok(ThroughputMode::Groupput),
        CASTLAB_MODE_ANYPUT => Ok(ThroughputMode::Anyput),
        _ => Err(Fail(CastlabStatus::InvalidArgument, format!("unknown mode {m}"))),
    }
}

fn variant(v: u32) -> Result<ProtocolVariant, Fail> {
    match v {
        CASTLAB_VARIANT_CAPTURE => Ok(ProtocolVariant::Capture),
        CASTLAB_VARIANT_NONCAPTURE => Ok(ProtocolVariant::NonCapture),
        _ => Err(Fail(CastlabStatus::InvalidArgument, format!("unknown variant {v}"))),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn castlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next castlab call on the same thread.
#[no_mangle]
pub extern "C" fn castlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a network config (or the network of a simulation config) from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn castlab_network_from_json(json: *const c_char, out: *mut *mut CastlabNetwork) -> CastlabStatus {
    guard(|| {
        let loaded = parse_config(text(json, "json")?).map_err(|e| Fail(CastlabStatus::InvalidConfig, e.to_string()))?;
        put(out, CastlabNetwork { inner: loaded.network().clone() })
    })
}

/// Clique of `n` identical nodes; powers in watts.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn castlab_network_homogeneous(
    n: usize,
    rho: f64,
    listen_cost: f64,
    transmit_cost: f64,
    out: *mut *mut CastlabNetwork,
) -> CastlabStatus {
    guard(|| {
        let net = NetworkConfig::homogeneous(n, NodePowerProfile::new(rho, listen_cost, transmit_cost));
        net.validate()?;
        put(out, CastlabNetwork { inner: net })
    })
}

/// Number of nodes, 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn castlab_network_node_count(net: *const CastlabNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.inner.len())
}

/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn castlab_network_free(net: *mut CastlabNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Oracle throughput and per-node listen/transmit fractions of a clique.
/// `alpha` and `beta` may be null; otherwise they need `len ≥` node count.
///
/// # Safety
/// Pointers must be null or valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn castlab_oracle_solve(
    net: *const CastlabNetwork,
    mode_code: u32,
    throughput: *mut f64,
    alpha: *mut f64,
    beta: *mut f64,
    len: usize,
) -> CastlabStatus {
    guard(|| {
        let net = borrow(net, "network")?;
        let s = solve_lp(&net.inner, mode(mode_code)?)?;
        fill(alpha, len, &s.alpha, "alpha")?;
        fill(beta, len, &s.beta, "beta")?;
        if !throughput.is_null() {
            *throughput = s.throughput;
        }
        Ok(())
    })
}

/// Entropy-perturbed optimum at temperature `sigma`; multipliers in 1/W.
///
/// # Safety
/// Pointers must be null or valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn castlab_gibbs_solve(
    net: *const CastlabNetwork,
    sigma: f64,
    mode_code: u32,
    throughput: *mut f64,
    eta: *mut f64,
    len: usize,
) -> CastlabStatus {
    guard(|| {
        let net = borrow(net, "network")?;
        let opts = DescentOptions { record_trace: false, ..Default::default() };
        let g = gradient_descent(&net.inner, sigma, mode(mode_code)?, &opts)?;
        fill(eta, len, &g.multipliers.eta, "eta")?;
        if !throughput.is_null() {
            *throughput = g.throughput;
        }
        Ok(())
    })
}

/// Largest relative detailed-balance violation of the protocol rates at `eta`.
///
/// # Safety
/// `eta` must hold `len` values equal to the node count.
#[no_mangle]
pub unsafe extern "C" fn castlab_verify_detailed_balance(
    net: *const CastlabNetwork,
    eta: *const f64,
    len: usize,
    sigma: f64,
    variant_code: u32,
    mode_code: u32,
    max_violation: *mut f64,
) -> CastlabStatus {
    guard(|| {
        let net = borrow(net, "network")?;
        if eta.is_null() {
            return Err(null("eta"));
        }
        if len != net.inner.len() {
            return Err(Fail(CastlabStatus::InvalidArgument, format!("eta has {len} entries for {} nodes", net.inner.len())));
        }
        let m = Multipliers::new(std::slice::from_raw_parts(eta, len).to_vec())?;
        let r = verify_detailed_balance(&net.inner, &m, sigma, variant(variant_code)?, mode(mode_code)?)?;
        if max_violation.is_null() {
            return Err(null("max_violation"));
        }
        *max_violation = r.max_violation;
        Ok(())
    })
}

/// Parses a simulation config from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn castlab_sim_config_from_json(json: *const c_char, out: *mut *mut CastlabSimConfig) -> CastlabStatus {
    guard(|| {
        let loaded = parse_config(text(json, "json")?).map_err(|e| Fail(CastlabStatus::InvalidConfig, e.to_string()))?;
        let sim = loaded
            .simulation()
            .ok_or_else(|| Fail(CastlabStatus::InvalidConfig, "expected a simulation config (with a \"network\" field)".into()))?;
        put(out, CastlabSimConfig { inner: sim.clone() })
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn castlab_sim_config_set_seed(cfg: *mut CastlabSimConfig, seed: u64) -> CastlabStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("config"))?;
        cfg.inner.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn castlab_sim_config_free(cfg: *mut CastlabSimConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the simulation to completion.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn castlab_simulate(cfg: *const CastlabSimConfig, out: *mut *mut CastlabSimResult) -> CastlabStatus {
    guard(|| {
        let cfg = borrow(cfg, "config")?;
        let m = run_simulation(&cfg.inner)?;
        put(out, CastlabSimResult { inner: m })
    })
}

/// Measured groupput and anyput (either pointer may be null) and event count.
///
/// # Safety
/// `res` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn castlab_sim_result_throughput(
    res: *const CastlabSimResult,
    groupput: *mut f64,
    anyput: *mut f64,
    events: *mut u64,
) -> CastlabStatus {
    guard(|| {
        let r = &borrow(res, "result")?.inner;
        if !groupput.is_null() {
            *groupput = r.groupput;
        }
        if !anyput.is_null() {
            *anyput = r.anyput;
        }
        if !events.is_null() {
            *events = r.events;
        }
        Ok(())
    })
}

/// Full metrics as JSON; free with [`castlab_string_free`]. Null on failure.
///
/// # Safety
/// `res` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn castlab_sim_result_json(res: *const CastlabSimResult) -> *mut c_char {
    let mut s = ptr::null_mut();
    guard(|| {
        let r = &borrow(res, "result")?.inner;
        let json = serde_json::to_string(r).map_err(|e| Fail(CastlabStatus::ComputationFailed, e.to_string()))?;
        s = CString::new(json).expect("json has no nul bytes").into_raw();
        Ok(())
    });
    s
}

/// # Safety
/// `res` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn castlab_sim_result_free(res: *mut CastlabSimResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn castlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
