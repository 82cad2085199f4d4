//! C ABI for `r3t-core`.
//!
//! Configs and menus cross the boundary as opaque handles that the caller frees
//! with the matching `*_free` function. Every fallible call returns an
//! [`R3tStatus`]; on failure a description is available from
//! [`r3t_last_error_message`] on the same thread. Strings returned by this
//! library are owned by the caller and released with [`r3t_string_free`].
//! Panics never unwind into the caller; they surface as `R3T_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::ptr;

use r3t_core::feasibility;
use r3t_core::ledger;
use r3t_core::sim::{self, SimSpec};
use r3t_core::solver::{self, SolveRequest};
use r3t_core::{ContractMenu, Error, InfoCase, MarketConfig, MarketParams, Mechanism};

/// Result of every fallible call. Values 2 and 3 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum R3tStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Infeasible = 3,
    AuditFailed = 4,
    InvalidArgument = 5,
    Parse = 6,
    Panic = 7,
}

#[repr(u32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum R3tInfoCase {
    Cic = 0,
    Iic = 1,
}

#[repr(u32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum R3tMechanism {
    R3t = 0,
    Ctwt = 1,
    Linear = 2,
}

/// Validated market configuration.
pub struct R3tConfig(MarketConfig);

/// Contract menu, one item per type.
pub struct R3tMenu(ContractMenu);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct R3tItem {
    pub type_index: usize,
    pub join_round: u32,
    pub bonus_factor: f64,
    pub effort: f64,
    pub salary: f64,
    pub bonus: f64,
    pub reward: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct R3tAuditSummary {
    pub pass: bool,
    pub ir_violations: usize,
    pub ic_violations: usize,
    pub monotonicity_failures: usize,
    pub item_errors: usize,
    /// Spend minus budget; positive means over budget.
    pub bf_excess: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct R3tSimSummary {
    pub rounds_completed: u32,
    pub complete: bool,
    pub cloud_utility: f64,
    pub client_utility: f64,
    pub spend: f64,
    pub spend_micro: u64,
    pub final_performance: f64,
    pub ledger_events: usize,
    pub ledger_paid_micro: u64,
    pub chain_verified: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: R3tStatus,
    message: String,
}

impl Failure {
    fn new(status: R3tStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Config(_) | Error::ConfigParse(_) => R3tStatus::Config,
            Error::Infeasible { .. } | Error::MonotonicityPostcheck => R3tStatus::Infeasible,
            Error::Parse(_) => R3tStatus::Parse,
            _ => R3tStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> R3tStatus {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => R3tStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(_) => {
            set_last_error("internal panic");
            R3tStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: the caller guarantees `p` is null or valid for reads.
    unsafe { p.as_ref() }
        .ok_or_else(|| Failure::new(R3tStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: the caller guarantees `p` is null or valid for writes.
    unsafe { p.as_mut() }
        .ok_or_else(|| Failure::new(R3tStatus::NullPointer, format!("{what} is null")))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(
            R3tStatus::NullPointer,
            format!("{what} is null"),
        ));
    }
    // SAFETY: non-null and, per the caller's contract, NUL-terminated.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|e| Failure::new(R3tStatus::Parse, format!("{what} is not UTF-8: {e}")))
}

fn parse_info_case(raw: u32) -> Result<InfoCase, Failure> {
    match raw {
        x if x == R3tInfoCase::Cic as u32 => Ok(InfoCase::Cic),
        x if x == R3tInfoCase::Iic as u32 => Ok(InfoCase::Iic),
        _ => Err(Failure::new(
            R3tStatus::InvalidArgument,
            format!("unknown info case {raw}"),
        )),
    }
}

fn parse_mechanism(raw: u32) -> Result<Mechanism, Failure> {
    match raw {
        x if x == R3tMechanism::R3t as u32 => Ok(Mechanism::R3t),
        x if x == R3tMechanism::Ctwt as u32 => Ok(Mechanism::Ctwt),
        x if x == R3tMechanism::Linear as u32 => Ok(Mechanism::Linear),
        _ => Err(Failure::new(
            R3tStatus::InvalidArgument,
            format!("unknown mechanism {raw}"),
        )),
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the most recent failure on this thread, or null. Valid until the
/// next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn r3t_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn r3t_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn r3t_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: produced by `CString::into_raw` in this crate.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Creates the reference configuration.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn r3t_config_default(out: *mut *mut R3tConfig) -> R3tStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        let cfg = r3t_core::validate_config(MarketParams::default())?;
        *out = Box::into_raw(Box::new(R3tConfig(cfg)));
        Ok(())
    })
}

/// Parses and validates a TOML config. Omitted keys take reference values.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn r3t_config_from_toml(
    toml: *const c_char,
    out: *mut *mut R3tConfig,
) -> R3tStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out") }?;
        let src = unsafe { text(toml, "toml") }?;
        let cfg = r3t_core::validate_config(MarketParams::from_toml_str(src)?)?;
        *out = Box::into_raw(Box::new(R3tConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn r3t_config_free(cfg: *mut R3tConfig) {
    if !cfg.is_null() {
        // SAFETY: produced by `Box::into_raw` in this crate.
        drop(unsafe { Box::from_raw(cfg) });
    }
}

/// Number of client types, or 0 for a null handle.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn r3t_config_num_types(cfg: *const R3tConfig) -> usize {
    unsafe { cfg.as_ref() }.map_or(0, |c| c.0.k())
}

/// Hex SHA-256 digest of the resolved parameters; free with [`r3t_string_free`].
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn r3t_config_digest(cfg: *const R3tConfig) -> *mut c_char {
    unsafe { cfg.as_ref() }.map_or(ptr::null_mut(), |c| into_c_string(c.0.digest()))
}

/// Solves the menu for `round` (1-based). `mechanism` must be `R3T` or `CTWT`.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn r3t_solve(
    cfg: *const R3tConfig,
    info_case: u32,
    mechanism: u32,
    round: u32,
    out: *mut *mut R3tMenu,
) -> R3tStatus {
    guard(|| {
        let cfg = &unsafe { deref(cfg, "cfg") }?.0;
        let out = unsafe { out_ref(out, "out") }?;
        let case = parse_info_case(info_case)?;
        let req = SolveRequest {
            round,
            ..SolveRequest::initial(cfg)
        };
        let req = match parse_mechanism(mechanism)? {
            Mechanism::R3t => req,
            Mechanism::Ctwt => req.time_blind(),
            Mechanism::Linear => {
                return Err(Failure::new(
                    R3tStatus::InvalidArgument,
                    "linear pricing has no menu",
                ))
            }
        };
        let sol = solver::solve(cfg, case, &req)?;
        *out = Box::into_raw(Box::new(R3tMenu(sol.menu)));
        Ok(())
    })
}

/// # Safety
/// `menu` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn r3t_menu_free(menu: *mut R3tMenu) {
    if !menu.is_null() {
        // SAFETY: produced by `Box::into_raw` in this crate.
        drop(unsafe { Box::from_raw(menu) });
    }
}

/// Number of items, or 0 for a null handle.
///
/// # Safety
/// `menu` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn r3t_menu_len(menu: *const R3tMenu) -> usize {
    unsafe { menu.as_ref() }.map_or(0, |m| m.0.items.len())
}

/// Copies item `index` (0-based) into `out`.
///
/// # Safety
/// `menu` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn r3t_menu_item(
    menu: *const R3tMenu,
    index: usize,
    out: *mut R3tItem,
) -> R3tStatus {
    guard(|| {
        let menu = &unsafe { deref(menu, "menu") }?.0;
        let out = unsafe { out_ref(out, "out") }?;
        let item = menu.items.get(index).ok_or_else(|| {
            Failure::new(
                R3tStatus::InvalidArgument,
                format!("item {index} out of range 0..{}", menu.items.len()),
            )
        })?;
        *out = R3tItem {
            type_index: item.type_index,
            join_round: item.join_round,
            bonus_factor: item.bonus_factor,
            effort: item.effort,
            salary: item.salary,
            bonus: item.bonus,
            reward: item.reward,
        };
        Ok(())
    })
}

/// Menu document as JSON; free with [`r3t_string_free`]. Null for a null handle.
///
/// # Safety
/// `menu` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn r3t_menu_to_json(menu: *const R3tMenu) -> *mut c_char {
    unsafe { menu.as_ref() }.map_or(ptr::null_mut(), |m| into_c_string(m.0.to_json()))
}

/// Parses a menu document and checks it has one item per type of `cfg`.
///
/// # Safety
/// `cfg` must be a live handle, `json` NUL-terminated, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn r3t_menu_from_json(
    cfg: *const R3tConfig,
    json: *const c_char,
    out: *mut *mut R3tMenu,
) -> R3tStatus {
    guard(|| {
        let cfg = &unsafe { deref(cfg, "cfg") }?.0;
        let src = unsafe { text(json, "json") }?;
        let out = unsafe { out_ref(out, "out") }?;
        let menu = ContractMenu::from_json(src, cfg)?;
        *out = Box::into_raw(Box::new(R3tMenu(menu)));
        Ok(())
    })
}

/// Audits `menu` against `cfg`. The summary is filled in either way;
/// the status is `AUDIT_FAILED` when any check fails.
///
/// # Safety
/// `cfg` and `menu` must be live handles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn r3t_audit(
    cfg: *const R3tConfig,
    menu: *const R3tMenu,
    out: *mut R3tAuditSummary,
) -> R3tStatus {
    guard(|| {
        let cfg = &unsafe { deref(cfg, "cfg") }?.0;
        let menu = &unsafe { deref(menu, "menu") }?.0;
        let out = unsafe { out_ref(out, "out") }?;
        menu.check_structure(cfg)?;
        let report = feasibility::audit(menu, cfg);
        *out = R3tAuditSummary {
            pass: report.pass,
            ir_violations: report.ir_violations.len(),
            ic_violations: report.ic_violations.len(),
            monotonicity_failures: report.monotonicity_failures.len(),
            item_errors: report.item_errors.len(),
            bf_excess: report.bf_excess,
        };
        if report.pass {
            Ok(())
        } else {
            Err(Failure::new(R3tStatus::AuditFailed, report.to_string()))
        }
    })
}

/// Runs `rounds` rounds of the simulation and summarizes the trace and ledger.
/// A run that halts on an infeasible round still returns `OK` with
/// `complete == false`.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn r3t_simulate(
    cfg: *const R3tConfig,
    mechanism: u32,
    info_case: u32,
    rounds: u32,
    out: *mut R3tSimSummary,
) -> R3tStatus {
    guard(|| {
        let cfg = &unsafe { deref(cfg, "cfg") }?.0;
        let out = unsafe { out_ref(out, "out") }?;
        let spec = SimSpec {
            mechanism: parse_mechanism(mechanism)?,
            info_case: parse_info_case(info_case)?,
            rounds,
        };
        let run = sim::run_simulation(cfg, spec)?;
        let t = &run.trace;
        *out = R3tSimSummary {
            rounds_completed: t.rounds.len() as u32,
            complete: t.is_complete(),
            cloud_utility: t.totals.cloud_utility,
            client_utility: t.totals.client_utility,
            spend: t.totals.spend,
            spend_micro: t.totals.spend_micro,
            final_performance: t.totals.final_performance,
            ledger_events: run.ledger.len(),
            ledger_paid_micro: run.ledger.total_paid_micro(),
            chain_verified: ledger::verify_chain(run.ledger.events()),
        };
        Ok(())
    })
}
