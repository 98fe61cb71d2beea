//! C interface to the `fpphe` toolkit.
//!
//! Graphs and simulation outcomes are opaque handles created and released
//! through this API. Every fallible call returns an [`FppheStatus`]; on
//! failure a description is available from [`fpphe_last_error`] on the same
//! thread. Strings handed out by the library are released with
//! [`fpphe_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fpphe::analytics::{self, GwSpec};
use fpphe::error::Error;
use fpphe::experiments::{self, TrialPlan};
use fpphe::feasibility::{self, FeasibilityProblem, RateConstants};
use fpphe::graph::{self, Graph, TileParams, VertexId};
use fpphe::rng::trial_rng;
use fpphe::seeding::place_seeds;
use fpphe::sim::{self, PType, SimOutcome, StopCondition};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FppheStatus {
    Ok = 0,
    InvalidParameter = 1,
    NullPointer = 2,
    ResourceLimit = 3,
    Exhausted = 4,
    Infeasible = 5,
    Unstable = 6,
    Format = 7,
    Io = 8,
    NotFound = 9,
    Panic = 10,
}

/// Type of an infected vertex.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FppheType {
    Uninfected = 0,
    Fpp1 = 1,
    FppLambda = 2,
}

/// Rate constants of the feasibility model, laid out for C.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FppheRateConstants {
    pub cin1: f64,
    pub cin2: f64,
    pub cin_d: f64,
    pub cout1: f64,
    pub cout2: f64,
    pub cout_d: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FppheHl {
    pub h: u64,
    pub l: u64,
    pub feasible: bool,
    pub h_coefficient: f64,
    pub lambda_zero: f64,
}

pub struct FppheGraph(Graph);

pub struct FppheOutcome(SimOutcome);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FppheStatus {
    match e {
        Error::InvalidParameter(_) => FppheStatus::InvalidParameter,
        Error::ResourceLimit { .. } => FppheStatus::ResourceLimit,
        Error::Exhausted(_) => FppheStatus::Exhausted,
        Error::Infeasible(_) => FppheStatus::Infeasible,
        Error::Unstable(_) => FppheStatus::Unstable,
        Error::Format(_) | Error::Json(_) => FppheStatus::Format,
        Error::Io(_) => FppheStatus::Io,
    }
}

struct Fail(FppheStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(FppheStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, turning errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FppheStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FppheStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            FppheStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(FppheStatus::Format, format!("{what} is not valid UTF-8")))
}

unsafe fn graph_ref<'a>(g: *const FppheGraph) -> Result<&'a Graph, Fail> {
    g.as_ref().map(|g| &g.0).ok_or_else(|| null("graph"))
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

fn string_out(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(FppheStatus::Format, "string contains NUL".into()))
}

unsafe fn emit_graph(out: *mut *mut FppheGraph, g: Result<Graph, Error>) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(ptr::null_mut());
    out.write(Box::into_raw(Box::new(FppheGraph(g?))));
    Ok(())
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fpphe_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fpphe_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds the tile with parameters `(D, L, H, R)`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fpphe_graph_tile(d: u32, l: u32, h: u32, r: u32, out: *mut *mut FppheGraph) -> FppheStatus {
    guard(|| emit_graph(out, TileParams::new(d, l, h, r).and_then(|p| graph::build_tile(&p))))
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fpphe_graph_complete_tree(d: u32, h: u32, out: *mut *mut FppheGraph) -> FppheStatus {
    guard(|| emit_graph(out, graph::build_complete_tree(d, h)))
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fpphe_graph_capped_tree(d: u32, h: u32, out: *mut *mut FppheGraph) -> FppheStatus {
    guard(|| emit_graph(out, graph::build_capped_tree(d, h)))
}

/// Loads a graph from its JSON dump.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fpphe_graph_from_json(json: *const c_char, out: *mut *mut FppheGraph) -> FppheStatus {
    guard(|| {
        let s = read_str(json, "json")?;
        emit_graph(out, Graph::from_json(s))
    })
}

/// # Safety
/// `g` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fpphe_graph_free(g: *mut FppheGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of vertices, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fpphe_graph_vertex_count(g: *const FppheGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.vertex_count())
}

/// Number of edges, parallel edges counted separately; 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fpphe_graph_edge_count(g: *const FppheGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.edge_count())
}

/// Looks up a named vertex such as `"O"`, `"B"` or `"W_1"`.
///
/// # Safety
/// `g` must be a live handle, `name` NUL-terminated and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fpphe_graph_landmark(g: *const FppheGraph, name: *const c_char, out: *mut u32) -> FppheStatus {
    guard(|| {
        let g = graph_ref(g)?;
        let name = read_str(name, "name")?;
        let v = g
            .landmark(name)
            .ok_or_else(|| Fail(FppheStatus::NotFound, format!("no landmark named {name:?}")))?;
        write_out(out, v)
    })
}

/// DOT rendering of the graph; release with [`fpphe_string_free`].
///
/// # Safety
/// `g` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fpphe_graph_to_dot(g: *const FppheGraph, out: *mut *mut c_char) -> FppheStatus {
    guard(|| {
        let g = graph_ref(g)?;
        write_out(out, string_out(graph::export_dot(g))?)
    })
}

/// Runs trial `trial_index` of stream `master_seed` from `origin`: seeds are
/// placed with density `mu` on every other vertex, then the process runs
/// until `target` is infected. Pass `UINT32_MAX` as `target` to run until
/// nothing is left to infect.
///
/// # Safety
/// `g` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fpphe_simulate(
    g: *const FppheGraph,
    origin: u32,
    target: u32,
    mu: f64,
    lambda: f64,
    master_seed: u64,
    trial_index: u64,
    out: *mut *mut FppheOutcome,
) -> FppheStatus {
    guard(|| {
        let g = graph_ref(g)?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        out.write(ptr::null_mut());
        if !g.contains(origin) {
            return Err(Fail(FppheStatus::InvalidParameter, format!("origin {origin} not in graph")));
        }
        let stop = if target == u32::MAX {
            StopCondition::exhaustive()
        } else {
            StopCondition::target(target)
        };
        let mut rng = trial_rng(master_seed, trial_index);
        let seeds = place_seeds(g, mu, &[origin], &mut rng)?;
        let outcome = sim::simulate(g, origin, &seeds, lambda, &stop, &mut rng)?;
        out.write(Box::into_raw(Box::new(FppheOutcome(outcome))));
        Ok(())
    })
}

/// # Safety
/// `o` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fpphe_outcome_free(o: *mut FppheOutcome) {
    if !o.is_null() {
        drop(Box::from_raw(o));
    }
}

/// Number of infected vertices, or 0 for a null handle.
///
/// # Safety
/// `o` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fpphe_outcome_infected_count(o: *const FppheOutcome) -> usize {
    o.as_ref().map_or(0, |o| o.0.infected_count)
}

/// Type and infection time of `v`. Uninfected vertices report
/// [`FppheType::Uninfected`] and an infinite time.
///
/// # Safety
/// `o` must be a live handle; `ty` and `time` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fpphe_outcome_vertex(
    o: *const FppheOutcome,
    v: u32,
    ty: *mut FppheType,
    time: *mut f64,
) -> FppheStatus {
    guard(|| {
        let o = &o.as_ref().ok_or_else(|| null("outcome"))?.0;
        if v as usize >= o.records.len() {
            return Err(Fail(FppheStatus::InvalidParameter, format!("vertex {v} not in graph")));
        }
        let (t, s) = match o.record(v as VertexId) {
            None => (FppheType::Uninfected, f64::INFINITY),
            Some(r) => match r.ptype {
                PType::Fpp1 => (FppheType::Fpp1, r.time),
                PType::FppLambda => (FppheType::FppLambda, r.time),
            },
        };
        write_out(ty, t)?;
        write_out(time, s)
    })
}

/// Outcome as a JSON document; release with [`fpphe_string_free`].
///
/// # Safety
/// `o` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fpphe_outcome_to_json(o: *const FppheOutcome, out: *mut *mut c_char) -> FppheStatus {
    guard(|| {
        let o = &o.as_ref().ok_or_else(|| null("outcome"))?.0;
        write_out(out, string_out(o.to_json().to_string())?)
    })
}

/// Extinction probability of the seed-blocked branching process with
/// offspring `Binomial(d, 1 - mu)`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fpphe_gw_extinction(d: u32, mu: f64, out: *mut f64) -> FppheStatus {
    guard(|| {
        let q = analytics::gw_extinction(GwSpec::new(d, mu)?, 1e-12)?;
        write_out(out, q)
    })
}

/// Writes whether `(d, mu)` is supercritical and whether the second
/// technical condition holds.
///
/// # Safety
/// Both output pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fpphe_tech_cond(d: u32, mu: f64, supercritical: *mut bool, second: *mut bool) -> FppheStatus {
    guard(|| {
        let (a, b) = analytics::check_tech_cond(d, mu)?;
        write_out(supercritical, a)?;
        write_out(second, b)
    })
}

fn constants(c: &FppheRateConstants) -> RateConstants {
    RateConstants {
        cin1: c.cin1,
        cin2: c.cin2,
        cin_d: c.cin_d,
        cout1: c.cout1,
        cout2: c.cout2,
        cout_d: c.cout_d,
    }
}

/// # Safety
/// `c` must point to a valid struct and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fpphe_lambda_zero(c: *const FppheRateConstants, out: *mut f64) -> FppheStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("constants"))?;
        write_out(out, feasibility::lambda_zero(&constants(c))?)
    })
}

/// Smallest admissible `(H, L)`. An infeasible instance is not an error:
/// the call succeeds with `feasible == false`.
///
/// # Safety
/// `c` must point to a valid struct and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fpphe_solve_hl(
    lambda: f64,
    c: *const FppheRateConstants,
    frak_c: f64,
    r: u64,
    out: *mut FppheHl,
) -> FppheStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("constants"))?;
        let p = FeasibilityProblem {
            lambda,
            constants: constants(c),
            frak_c,
            r,
            h_cap: feasibility::DEFAULT_H_CAP,
        };
        let s = feasibility::solve_hl(&p)?;
        write_out(
            out,
            FppheHl {
                h: s.h,
                l: s.l,
                feasible: s.feasible,
                h_coefficient: s.h_coefficient,
                lambda_zero: s.lambda_zero,
            },
        )
    })
}

/// Monte Carlo estimate for a JSON trial plan, returned as JSON. Trials run
/// on `workers` threads. Release the result with
/// [`fpphe_string_free`].
///
/// # Safety
/// `plan_json` must be NUL-terminated and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fpphe_estimate_json(plan_json: *const c_char, workers: usize, out: *mut *mut c_char) -> FppheStatus {
    guard(|| {
        let plan: TrialPlan = serde_json::from_str(read_str(plan_json, "plan")?).map_err(Error::from)?;
        let res = experiments::estimate_event(&plan, workers)?;
        write_out(out, string_out(serde_json::to_string(&res).map_err(Error::from)?)?)
    })
}
