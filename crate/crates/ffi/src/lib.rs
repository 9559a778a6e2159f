//! C interface to `greedy_core`.
//!
//! Simulators are opaque `GreedySim` handles created by the
//! `greedy_sim_new*` functions and released with `greedy_sim_free`. Every
//! fallible call returns a `GreedyStatus`; after a failure the message is
//! available from `greedy_last_error` until the next failing call on the
//! same thread. Strings handed out by the library are released with
//! `greedy_string_free`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use greedy_core::cli::{render, Cli};
use greedy_core::coupling::{run_coupled, CoupledOptions, Stamp};
use greedy_core::engine::{EventKind, EventRecord, ModelConfig, RandomTape, ServiceKind};
use greedy_core::error::Error;
use greedy_core::explicit_sim::{
    customers_from_potential, run_until_regeneration, CustomerSet, ExplicitSim,
    RegenerationOutcome, Strategy,
};
use greedy_core::potential_sim::{
    run_potential_until_regeneration, ClearProfile, PotentialSim, PotentialState,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreedyStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    Contract = 3,
    Format = 4,
    Io = 5,
    Usage = 6,
    Panic = 7,
}

/// Values of `GreedyConfig::service`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreedyService {
    Exponential = 0,
    Deterministic = 1,
    Geometric = 2,
}

/// Values of the `model` argument of the constructors.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreedyModel {
    Explicit = 0,
    Potential = 1,
    Polling = 2,
}

/// Values of `GreedyEvent::kind`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreedyEventKind {
    Arrival = 0,
    ServiceStart = 1,
    Departure = 2,
    Regeneration = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyConfig {
    pub lambda: f64,
    pub mu: f64,
    pub speed: f64,
    /// A `GreedyService` value.
    pub service: u32,
    /// Success probability for the geometric law, ignored otherwise.
    pub geometric_p: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyEvent {
    pub time: f64,
    /// A `GreedyEventKind` value.
    pub kind: u32,
    pub server: f64,
    /// NaN when there is no target.
    pub target: f64,
    /// -1 when the model does not track customers.
    pub customers: i64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyRegeneration {
    pub censored: bool,
    /// NaN when censored.
    pub tau: f64,
    pub end_time: f64,
    /// NaN when no arrival was seen.
    pub first_arrival: f64,
    pub served: u64,
    pub busy_time: f64,
    pub travel_time: f64,
    pub idle_time: f64,
    pub traveled: f64,
}

/// Verdicts of one coupled run; event indices are -1 when the stopping
/// time was not reached.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyCoupled {
    pub identities_ok: bool,
    pub degenerate: bool,
    pub shapes_ok: bool,
    pub events: u64,
    pub t_o_event: i64,
    pub t_v_event: i64,
    pub t_1_event: i64,
    pub t_u_event: i64,
}

enum Inner {
    Explicit(Box<ExplicitSim>),
    Potential(Box<PotentialSim>),
}

/// Opaque simulator handle.
pub struct GreedySim {
    inner: Inner,
}

struct Failure(GreedyStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidConfig(_) => GreedyStatus::InvalidConfig,
            Error::PotentialFormat(_) => GreedyStatus::Format,
            Error::Io(_) => GreedyStatus::Io,
            _ => GreedyStatus::Contract,
        };
        Failure(status, e.to_string())
    }
}

type Res<T> = Result<T, Failure>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Res<()>) -> GreedyStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GreedyStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GreedyStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(GreedyStatus::NullPointer, format!("{name} is null"))
}

unsafe fn get<'a, T>(p: *const T, name: &str) -> Res<&'a T> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn get_mut<'a, T>(p: *mut T, name: &str) -> Res<&'a mut T> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Res<&'a str> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(GreedyStatus::Format, format!("{name} is not UTF-8")))
}

fn model_config(c: &GreedyConfig) -> Res<ModelConfig> {
    let kind = match c.service {
        0 => ServiceKind::Exponential,
        1 => ServiceKind::Deterministic,
        2 => ServiceKind::Geometric { p: c.geometric_p },
        k => {
            return Err(Failure(
                GreedyStatus::InvalidConfig,
                format!("unknown service law {k}"),
            ))
        }
    };
    if let ServiceKind::Geometric { p } = kind {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Failure(
                GreedyStatus::InvalidConfig,
                format!("geometric p must lie in (0, 1], got {p}"),
            ));
        }
    }
    Ok(ModelConfig::new(c.lambda, c.mu, c.speed, kind)?)
}

fn build(
    cfg: &GreedyConfig,
    model: u32,
    seed: u64,
    state: Option<PotentialState>,
) -> Res<GreedySim> {
    let config = model_config(cfg)?;
    let tape = RandomTape::new(seed);
    let strategy = match model {
        0 | 1 => Strategy::Greedy,
        2 => Strategy::Polling {
            halt_when_empty: false,
        },
        m => {
            return Err(Failure(
                GreedyStatus::InvalidConfig,
                format!("unknown model {m}"),
            ))
        }
    };
    let inner = if model == 1 {
        let st = state.unwrap_or_else(|| PotentialState::empty_circle(0.0));
        Inner::Potential(Box::new(PotentialSim::new(config, &tape, st)?))
    } else {
        let (server, customers) = match state {
            None => (0.0, CustomerSet::new()),
            Some(st) => (
                st.server,
                customers_from_potential(&st.profile, config.lambda, &tape)?,
            ),
        };
        Inner::Explicit(Box::new(ExplicitSim::new(
            config, strategy, &tape, server, customers,
        )?))
    };
    Ok(GreedySim { inner })
}

unsafe fn create(out: *mut *mut GreedySim, f: impl FnOnce() -> Res<GreedySim>) -> GreedyStatus {
    guard(|| {
        let out = get_mut(out, "out")?;
        *out = std::ptr::null_mut();
        *out = Box::into_raw(Box::new(f()?));
        Ok(())
    })
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn greedy_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. Owned by the
/// library.
#[no_mangle]
pub extern "C" fn greedy_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Simulator started from the empty system with the server at 0.
///
/// # Safety
/// `cfg` must point to a valid config and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn greedy_sim_new(
    cfg: *const GreedyConfig,
    model: u32,
    seed: u64,
    out: *mut *mut GreedySim,
) -> GreedyStatus {
    create(out, || build(get(cfg, "cfg")?, model, seed, None))
}

/// Simulator started serving at 0 with the constant potential `level`
/// (explicit models sample the waiting customers from it).
///
/// # Safety
/// As for `greedy_sim_new`.
#[no_mangle]
pub unsafe extern "C" fn greedy_sim_new_constant(
    cfg: *const GreedyConfig,
    model: u32,
    seed: u64,
    level: f64,
    out: *mut *mut GreedySim,
) -> GreedyStatus {
    create(out, || {
        if !(level <= 0.0) {
            return Err(Failure(
                GreedyStatus::InvalidConfig,
                format!("potential level must be <= 0, got {level}"),
            ));
        }
        let st = PotentialState::serving(ClearProfile::constant_circle(level), 0.0);
        build(get(cfg, "cfg")?, model, seed, Some(st))
    })
}

/// Simulator started from a potential given as a JSON profile document.
///
/// # Safety
/// As for `greedy_sim_new`; `json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn greedy_sim_new_from_json(
    cfg: *const GreedyConfig,
    model: u32,
    seed: u64,
    json: *const c_char,
    out: *mut *mut GreedySim,
) -> GreedyStatus {
    create(out, || {
        let st = PotentialState::from_json(text(json, "json")?)?;
        if model != 1 && !st.profile.is_circle() {
            return Err(Failure(
                GreedyStatus::Contract,
                "explicit models run on the circle".into(),
            ));
        }
        build(get(cfg, "cfg")?, model, seed, Some(st))
    })
}

/// # Safety
/// `sim` must come from a constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn greedy_sim_free(sim: *mut GreedySim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

fn event(ev: &EventRecord) -> GreedyEvent {
    GreedyEvent {
        time: ev.time,
        kind: match ev.kind {
            EventKind::Arrival => 0,
            EventKind::ServiceStart => 1,
            EventKind::Departure => 2,
            EventKind::Regeneration => 3,
        },
        server: ev.server,
        target: ev.target.unwrap_or(f64::NAN),
        customers: ev.customers.map_or(-1, |n| n as i64),
    }
}

/// Apply the next event. `*has_event` is false when no event can occur.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn greedy_sim_step(
    sim: *mut GreedySim,
    out: *mut GreedyEvent,
    has_event: *mut bool,
) -> GreedyStatus {
    guard(|| {
        let sim = get_mut(sim, "sim")?;
        let out = get_mut(out, "out")?;
        let has = get_mut(has_event, "has_event")?;
        let ev = match &mut sim.inner {
            Inner::Explicit(s) => s.step(),
            Inner::Potential(s) => s.step()?,
        };
        *has = ev.is_some();
        if let Some(ev) = ev {
            *out = event(&ev);
        }
        Ok(())
    })
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn greedy_sim_clock(sim: *const GreedySim, out: *mut f64) -> GreedyStatus {
    guard(|| {
        let sim = get(sim, "sim")?;
        *get_mut(out, "out")? = match &sim.inner {
            Inner::Explicit(s) => s.clock(),
            Inner::Potential(s) => s.clock(),
        };
        Ok(())
    })
}

/// Run until the system is empty or `horizon`; counters are cumulative
/// from the start of the simulator.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn greedy_sim_run_until_regeneration(
    sim: *mut GreedySim,
    horizon: f64,
    out: *mut GreedyRegeneration,
) -> GreedyStatus {
    guard(|| {
        let sim = get_mut(sim, "sim")?;
        let out = get_mut(out, "out")?;
        if horizon.is_nan() {
            return Err(Failure(
                GreedyStatus::InvalidConfig,
                "horizon is NaN".into(),
            ));
        }
        let o: RegenerationOutcome = match &mut sim.inner {
            Inner::Explicit(s) => run_until_regeneration(s, horizon, false),
            Inner::Potential(s) => run_potential_until_regeneration(s, horizon, false)?,
        };
        *out = GreedyRegeneration {
            censored: o.censored,
            tau: o.tau.unwrap_or(f64::NAN),
            end_time: o.end_time,
            first_arrival: o.first_arrival.unwrap_or(f64::NAN),
            served: o.served,
            busy_time: o.split.serving,
            travel_time: o.split.moving,
            idle_time: o.split.idle,
            traveled: o.traveled,
        };
        Ok(())
    })
}

/// One coupled circle / line / truncated-line run from the constant
/// potential `level`, serving at 0.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn greedy_couple(
    cfg: *const GreedyConfig,
    seed: u64,
    level: f64,
    tolerance: f64,
    horizon: f64,
    out: *mut GreedyCoupled,
) -> GreedyStatus {
    guard(|| {
        let config = model_config(get(cfg, "cfg")?)?;
        let out = get_mut(out, "out")?;
        if !(level <= 0.0) {
            return Err(Failure(
                GreedyStatus::InvalidConfig,
                format!("potential level must be <= 0, got {level}"),
            ));
        }
        let start = PotentialState::serving(ClearProfile::constant_circle(level), 0.0);
        let opts = CoupledOptions {
            tolerance,
            horizon,
            ..Default::default()
        };
        let rep = run_coupled(&config, &RandomTape::new(seed), &start, &opts)?;
        let idx = |s: Option<Stamp>| s.map_or(-1, |s| s.event as i64);
        *out = GreedyCoupled {
            identities_ok: rep.identities_ok,
            degenerate: rep.degenerate,
            shapes_ok: rep.shapes_ok,
            events: rep.events,
            t_o_event: idx(rep.t_circle.t_o),
            t_v_event: idx(rep.t_circle.t_v),
            t_1_event: idx(rep.t_line.t_1),
            t_u_event: idx(rep.t_line.t_u),
        };
        Ok(())
    })
}

/// Run a command-line invocation in-process. `argv` holds the arguments
/// after the program name. The main output is returned in `*out_text`
/// (also written to `--out` when given; side tables go to their paths),
/// and `*failed_gates` receives the number of failed gates.
///
/// # Safety
/// `argv` must hold `argc` NUL-terminated strings; the other pointers must
/// be valid. Free `*out_text` with `greedy_string_free`.
#[no_mangle]
pub unsafe extern "C" fn greedy_cli_run(
    argc: usize,
    argv: *const *const c_char,
    out_text: *mut *mut c_char,
    failed_gates: *mut u32,
) -> GreedyStatus {
    guard(|| {
        let out = get_mut(out_text, "out_text")?;
        *out = std::ptr::null_mut();
        let gates = get_mut(failed_gates, "failed_gates")?;
        if argc > 0 && argv.is_null() {
            return Err(null("argv"));
        }
        let mut args = vec!["greedy".to_string()];
        for i in 0..argc {
            args.push(text(*argv.add(i), "argv entry")?.to_string());
        }
        let cli = Cli::parse_args(&args).map_err(|e| Failure(GreedyStatus::Usage, e))?;
        let r = render(&cli)?;
        for (path, body) in &r.extra {
            std::fs::write(path, body).map_err(Error::from)?;
        }
        if let Some(path) = &r.out {
            std::fs::write(path, &r.text).map_err(Error::from)?;
        }
        *gates = r.gates.len() as u32;
        *out = CString::new(r.text)
            .map_err(|e| Failure(GreedyStatus::Format, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn greedy_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
