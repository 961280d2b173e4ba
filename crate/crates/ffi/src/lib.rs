//! C interface to the `gnb_sleep` library.
//!
//! Objects cross the boundary as opaque handles created by `gs_*_new` or
//! `gs_*_build` calls and released with the matching `gs_*_free`. Every
//! fallible call returns a [`GsStatus`]; on failure a message describing the
//! error is available from [`gs_last_error_message`] on the same thread.
//! Panics are caught at the boundary and reported as [`GsStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gnb_sleep::baselines::lower_bound;
use gnb_sleep::config::parse_config;
use gnb_sleep::greedy::{greedy_action, greedy_thresholds};
use gnb_sleep::index::{build_cluster_tables, index_action, IndexOptions, IndexTable};
use gnb_sleep::joint_mdp::{rvia_solve, SolvedMdp};
use gnb_sleep::sim::{
    delta_metric, run_policy, AlwaysOn, GreedyPolicy, IndexPolicy, OptimalPolicy, Policy, RoundRobinPolicy,
    UniformPolicy,
};
use gnb_sleep::{ActionVector, CellState, Cluster, ClusterConfig, CostFunction, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Capacity = 4,
    NonConvergence = 5,
    Unsupported = 6,
    InfeasibleAction = 7,
    Io = 8,
    Panic = 9,
    Internal = 10,
}

impl From<&Error> for GsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) | Error::InvalidParameter { .. } => GsStatus::InvalidArgument,
            Error::Config { .. } => GsStatus::Config,
            Error::Capacity { .. } => GsStatus::Capacity,
            Error::NonConvergence { .. } => GsStatus::NonConvergence,
            Error::Unsupported(_) => GsStatus::Unsupported,
            Error::InfeasibleAction(_) => GsStatus::InfeasibleAction,
            Error::Io(_) | Error::Csv(_) | Error::Dump(_) => GsStatus::Io,
            Error::Consistency(_) => GsStatus::Internal,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsCostKind {
    Linear = 0,
    Quadratic = 1,
    /// The standard three-piece function.
    Piecewise = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsPolicyKind {
    Optimal = 0,
    Index = 1,
    Greedy = 2,
    Uniform = 3,
    RoundRobin = 4,
    AlwaysOn = 5,
}

/// State of one cell: whether it was on last segment and its residual user count.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GsCellState {
    pub prev_on: bool,
    pub residual_users: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsSimSummary {
    pub avg_cost: f64,
    pub ci_halfwidth: f64,
    pub lower_bound: f64,
    /// Percent gap to the lower bound.
    pub delta_percent: f64,
}

/// Opaque cluster model.
pub struct GsCluster(Cluster);

/// Opaque joint MDP solution.
pub struct GsSolution(SolvedMdp);

/// Opaque per-cell index tables.
pub struct GsIndexTables(Vec<IndexTable>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Run `f` with panics and errors translated to a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GsStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            GsStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            GsStatus::InvalidArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            GsStatus::from(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GsStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn read_states(states: *const GsCellState, len: usize, m: usize) -> Result<Vec<CellState>, Fail> {
    if len != m {
        return Err(Fail::Arg(format!("expected {m} cell states, got {len}")));
    }
    if states.is_null() {
        return Err(Fail::Null("states"));
    }
    Ok(std::slice::from_raw_parts(states, len)
        .iter()
        .map(|s| CellState::new(s.prev_on, s.residual_users))
        .collect())
}

unsafe fn write_action(a: &ActionVector, on_out: *mut u8) -> Result<(), Fail> {
    if on_out.is_null() {
        return Err(Fail::Null("on_out"));
    }
    let dst = std::slice::from_raw_parts_mut(on_out, a.len());
    for (d, &on) in dst.iter_mut().zip(a.as_slice()) {
        *d = on as u8;
    }
    Ok(())
}

/// Message of the last failed call on this thread, or NULL.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `m` identical cells with the standard parameters and arrival set `set` (1 to 5).
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn gs_cluster_new_standard(
    m: u32,
    k: u32,
    set: u32,
    cost: GsCostKind,
    out: *mut *mut GsCluster,
) -> GsStatus {
    guard(|| {
        let out = unsafe { self::out(out, "out") }?;
        let f = match cost {
            GsCostKind::Linear => CostFunction::Linear,
            GsCostKind::Quadratic => CostFunction::Quadratic,
            GsCostKind::Piecewise => CostFunction::PiecewiseLinear(gnb_sleep::PiecewiseLinear::standard()),
        };
        let cfg = ClusterConfig::standard(m as usize, k as usize, set as usize, f)?;
        *out = Box::into_raw(Box::new(GsCluster(Cluster::new(cfg)?)));
        Ok(())
    })
}

/// Build a cluster from configuration text in the library's file format.
///
/// # Safety
/// `text` must be a NUL-terminated UTF-8 string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn gs_cluster_from_config(text: *const c_char, out: *mut *mut GsCluster) -> GsStatus {
    guard(|| {
        if text.is_null() {
            return Err(Fail::Null("text"));
        }
        let out = unsafe { self::out(out, "out") }?;
        let s = unsafe { CStr::from_ptr(text) }
            .to_str()
            .map_err(|e| Fail::Arg(format!("config text is not UTF-8: {e}")))?;
        let cfg = parse_config(s)?;
        *out = Box::into_raw(Box::new(GsCluster(Cluster::new(cfg.cluster)?)));
        Ok(())
    })
}

/// # Safety
/// `c` must be NULL or a handle from a `gs_cluster_*` constructor not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_cluster_free(c: *mut GsCluster) {
    if !c.is_null() {
        drop(unsafe { Box::from_raw(c) });
    }
}

/// Number of cells, sleep limit and truncation level.
///
/// # Safety
/// `c` must be a live cluster handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gs_cluster_dims(c: *const GsCluster, m: *mut u32, k: *mut u32, n_th: *mut u32) -> GsStatus {
    guard(|| {
        let c = unsafe { as_ref(c, "cluster") }?;
        *unsafe { out(m, "m") }? = c.0.m() as u32;
        *unsafe { out(k, "k") }? = c.0.k() as u32;
        *unsafe { out(n_th, "n_th") }? = c.0.n_th() as u32;
        Ok(())
    })
}

/// # Safety
/// `c` must be a live cluster handle and `value` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn gs_lower_bound(c: *const GsCluster, value: *mut f64) -> GsStatus {
    guard(|| {
        let c = unsafe { as_ref(c, "cluster") }?;
        *unsafe { out(value, "value") }? = lower_bound(&c.0)?.value;
        Ok(())
    })
}

/// Greedy sleep thresholds of one cell.
///
/// # Safety
/// `c` must be a live cluster handle; `gamma_l` and `gamma_u` valid for one write each.
#[no_mangle]
pub unsafe extern "C" fn gs_greedy_thresholds(
    c: *const GsCluster,
    cell: u32,
    gamma_l: *mut f64,
    gamma_u: *mut f64,
) -> GsStatus {
    guard(|| {
        let c = unsafe { as_ref(c, "cluster") }?;
        let cfg = c.0.config();
        let cp = cfg
            .cells
            .get(cell as usize)
            .ok_or_else(|| Fail::Arg(format!("cell {cell} does not exist")))?;
        let th = greedy_thresholds(cp, &cfg.power, cfg.segment_duration)?;
        *unsafe { out(gamma_l, "gamma_l") }? = th.gamma_l;
        *unsafe { out(gamma_u, "gamma_u") }? = th.gamma_u;
        Ok(())
    })
}

/// Greedy action for a state of `len` cells; writes 1 (on) or 0 (off) per cell.
///
/// # Safety
/// `states` must point to `len` readable states and `on_out` to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gs_greedy_action(
    c: *const GsCluster,
    states: *const GsCellState,
    len: usize,
    on_out: *mut u8,
) -> GsStatus {
    guard(|| {
        let c = unsafe { as_ref(c, "cluster") }?;
        let s = unsafe { read_states(states, len, c.0.m()) }?;
        c.0.check_state(&s)?;
        unsafe { write_action(&greedy_action(&s, &c.0), on_out) }
    })
}

/// Solve the joint MDP. Fails with [`GsStatus::Capacity`] for instances over budget.
///
/// # Safety
/// `c` must be a live cluster handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn gs_solve(c: *const GsCluster, out: *mut *mut GsSolution) -> GsStatus {
    guard(|| {
        let c = unsafe { as_ref(c, "cluster") }?;
        let out = unsafe { self::out(out, "out") }?;
        *out = Box::into_raw(Box::new(GsSolution(rvia_solve(&c.0)?)));
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a handle from [`gs_solve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_solution_free(s: *mut GsSolution) {
    if !s.is_null() {
        drop(unsafe { Box::from_raw(s) });
    }
}

/// Optimal long-run average cost per segment.
///
/// # Safety
/// `s` must be a live solution handle and `gain` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn gs_solution_gain(s: *const GsSolution, gain: *mut f64) -> GsStatus {
    guard(|| {
        let s = unsafe { as_ref(s, "solution") }?;
        *unsafe { out(gain, "gain") }? = s.0.gain();
        Ok(())
    })
}

/// Optimal action in a state.
///
/// # Safety
/// As [`gs_greedy_action`], with `s` a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn gs_solution_action(
    s: *const GsSolution,
    states: *const GsCellState,
    len: usize,
    on_out: *mut u8,
) -> GsStatus {
    guard(|| {
        let s = unsafe { as_ref(s, "solution") }?;
        let st = unsafe { read_states(states, len, s.0.m()) }?;
        if let Some(bad) = st.iter().find(|c| c.residual_users as usize > s.0.n_th()) {
            return Err(Fail::Arg(format!("residual count {} exceeds n_th", bad.residual_users)));
        }
        unsafe { write_action(&s.0.action(&st), on_out) }
    })
}

/// Index tables for every cell of the cluster.
///
/// # Safety
/// `c` must be a live cluster handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn gs_index_tables_build(c: *const GsCluster, out: *mut *mut GsIndexTables) -> GsStatus {
    guard(|| {
        let c = unsafe { as_ref(c, "cluster") }?;
        let out = unsafe { self::out(out, "out") }?;
        let t = build_cluster_tables(&c.0, &IndexOptions::default())?;
        *out = Box::into_raw(Box::new(GsIndexTables(t)));
        Ok(())
    })
}

/// # Safety
/// `t` must be NULL or a handle from [`gs_index_tables_build`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gs_index_tables_free(t: *mut GsIndexTables) {
    if !t.is_null() {
        drop(unsafe { Box::from_raw(t) });
    }
}

/// Index of state `(prev_on, n)` in cell `cell`.
///
/// # Safety
/// `t` must be a live tables handle and `value` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn gs_index_value(
    t: *const GsIndexTables,
    cell: u32,
    prev_on: bool,
    n: u32,
    value: *mut f64,
) -> GsStatus {
    guard(|| {
        let t = unsafe { as_ref(t, "tables") }?;
        let table = t.0.get(cell as usize).ok_or_else(|| Fail::Arg(format!("cell {cell} does not exist")))?;
        if n as usize > table.n_th() {
            return Err(Fail::Arg(format!("residual count {n} exceeds n_th = {}", table.n_th())));
        }
        *unsafe { out(value, "value") }? = table.get(prev_on, n as usize);
        Ok(())
    })
}

/// Index-policy action with at most `k` cells off.
///
/// # Safety
/// As [`gs_greedy_action`], with `t` a live tables handle.
#[no_mangle]
pub unsafe extern "C" fn gs_index_action(
    t: *const GsIndexTables,
    states: *const GsCellState,
    len: usize,
    k: u32,
    on_out: *mut u8,
) -> GsStatus {
    guard(|| {
        let t = unsafe { as_ref(t, "tables") }?;
        let s = unsafe { read_states(states, len, t.0.len()) }?;
        if k as usize > len {
            return Err(Fail::Arg(format!("k = {k} exceeds the {len} cells")));
        }
        unsafe { write_action(&index_action(&s, &t.0, k as usize), on_out) }
    })
}

/// Simulate one policy for `segments` segments.
///
/// # Safety
/// `c` must be a live cluster handle and `summary` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn gs_simulate(
    c: *const GsCluster,
    policy: GsPolicyKind,
    segments: u64,
    seed: u64,
    summary: *mut GsSimSummary,
) -> GsStatus {
    guard(|| {
        let c = unsafe { as_ref(c, "cluster") }?;
        let summary = unsafe { out(summary, "summary") }?;
        let cl = &c.0;
        let (m, k) = (cl.m(), cl.k());
        let mut pol: Box<dyn Policy> = match policy {
            GsPolicyKind::Optimal => Box::new(OptimalPolicy::new(rvia_solve(cl)?)),
            GsPolicyKind::Index => Box::new(IndexPolicy::new(build_cluster_tables(cl, &IndexOptions::default())?, k)),
            GsPolicyKind::Greedy => Box::new(GreedyPolicy::new(cl)),
            GsPolicyKind::Uniform => Box::new(UniformPolicy::new(m, k)),
            GsPolicyKind::RoundRobin => Box::new(RoundRobinPolicy::new(m, k)),
            GsPolicyKind::AlwaysOn => Box::new(AlwaysOn::new(m)),
        };
        let r = run_policy(cl, pol.as_mut(), segments, seed)?;
        let lb = lower_bound(cl)?.value;
        *summary = GsSimSummary {
            avg_cost: r.avg_cost,
            ci_halfwidth: r.ci_halfwidth,
            lower_bound: lb,
            delta_percent: delta_metric(r.avg_cost, lb)?,
        };
        Ok(())
    })
}
