// SPDX-License-Identifier: Apache-2.0

//! C interface to `lcre`. Theories are opaque handles; every call returns an
//! [`LcreStatus`], writes results through out-pointers as NUL-terminated
//! strings owned by the caller (release with [`lcre_string_free`]), and leaves
//! a message for [`lcre_last_error`] on failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lcre::algebra::{
    check_value_consistency, print_algebra, search_counter_model, ConsistencyReport,
    CounterModelOutcome,
};
use lcre::models::Oracle;
use lcre::proofs::{
    check_proof, generate_calc_proof, prove_heuristic, CheckVerdict, GenerateError,
};
use lcre::rewriting::{check_ce_validity, conversion_search, SearchOptions, ValidityStatus};
use lcre::syntax::{parse_goal, parse_proof, parse_term, parse_theory, print_proof, TheoryFile};

/// Result codes; the first five match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcreStatus {
    /// Affirmative result.
    Ok = 0,
    /// Negative result or witness found.
    Negative = 1,
    /// Undecided or bound exhausted.
    Unknown = 2,
    /// Malformed input.
    InputError = 3,
    /// The constraint oracle failed.
    OracleError = 4,
    /// A required pointer was null.
    NullPointer = 5,
    /// An internal error was caught at the boundary.
    Internal = 6,
}

/// A parsed theory with its validity oracle.
pub struct LcreTheory {
    file: TheoryFile,
    oracle: Oracle,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn fail(status: LcreStatus, msg: impl Into<String>) -> LcreStatus {
    set_error(msg);
    status
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, LcreStatus> {
    if p.is_null() {
        return Err(fail(LcreStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(LcreStatus::InputError, "argument is not UTF-8"))
}

unsafe fn put(out: *mut *mut c_char, s: String) {
    if !out.is_null() {
        *out = CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw);
    }
}

fn guard(f: impl FnOnce() -> Result<LcreStatus, LcreStatus>) -> LcreStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) | Ok(Err(s)) => s,
        Err(_) => fail(LcreStatus::Internal, "internal panic"),
    }
}

unsafe fn theory<'a>(t: *const LcreTheory) -> Result<&'a LcreTheory, LcreStatus> {
    t.as_ref()
        .ok_or_else(|| fail(LcreStatus::NullPointer, "null theory handle"))
}

/// Message describing the most recent failure on this thread. The pointer is
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn lcre_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn lcre_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned through an out-pointer.
///
/// # Safety
/// `s` must be null or a string produced by this library, released once.
#[no_mangle]
pub unsafe extern "C" fn lcre_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses theory text into a new handle.
///
/// # Safety
/// `source` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lcre_theory_parse(
    source: *const c_char,
    out: *mut *mut LcreTheory,
) -> LcreStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(LcreStatus::NullPointer, "null out-pointer"));
        }
        *out = ptr::null_mut();
        let src = text(source)?;
        let file = parse_theory(src).map_err(|e| fail(LcreStatus::InputError, e.to_string()))?;
        let oracle = file.theory.oracle();
        *out = Box::into_raw(Box::new(LcreTheory { file, oracle }));
        Ok(LcreStatus::Ok)
    })
}

/// Releases a theory handle.
///
/// # Safety
/// `t` must be null or a handle from [`lcre_theory_parse`], released once.
#[no_mangle]
pub unsafe extern "C" fn lcre_theory_free(t: *mut LcreTheory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of equations in the theory.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lcre_theory_equation_count(t: *const LcreTheory) -> usize {
    t.as_ref().map_or(0, |t| t.file.theory.equations.len())
}

/// Searches for a conversion between two terms within `bound` rule steps.
/// Returns `Ok` and writes the trace, or `Unknown` when none is found.
///
/// # Safety
/// String arguments must be NUL-terminated; `trace_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn lcre_convert(
    t: *const LcreTheory,
    lhs: *const c_char,
    rhs: *const c_char,
    bound: u32,
    trace_out: *mut *mut c_char,
) -> LcreStatus {
    guard(|| {
        let th = theory(t)?;
        let parse =
            |p| parse_term(&th.file, p).map_err(|e| fail(LcreStatus::InputError, e.to_string()));
        let s = parse(text(lhs)?)?;
        let u = parse(text(rhs)?)?;
        let opts = SearchOptions {
            bound: bound as usize,
            ..SearchOptions::default()
        };
        match conversion_search(&th.file.theory, &s, &u, &opts) {
            Some(tr) => {
                let lines: Vec<String> = tr.steps.iter().map(|st| st.to_string()).collect();
                put(trace_out, lines.join("\n"));
                Ok(LcreStatus::Ok)
            }
            None => Ok(LcreStatus::Unknown),
        }
    })
}

/// Checks validity of a goal given as `[(pi ...)] [(constraint φ)] L R`.
/// `Ok` for proved or sample-confirmed goals, `Negative` when an instance has
/// no conversion, `Unknown` otherwise. The status label is written out.
///
/// # Safety
/// `goal` must be NUL-terminated; `label_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn lcre_validate(
    t: *const LcreTheory,
    goal: *const c_char,
    label_out: *mut *mut c_char,
) -> LcreStatus {
    guard(|| {
        let th = theory(t)?;
        let ce = parse_goal(&th.file, text(goal)?)
            .map_err(|e| fail(LcreStatus::InputError, e.to_string()))?;
        let st = check_ce_validity(&th.file.theory, &ce, &th.oracle, &SearchOptions::default())
            .map_err(|e| fail(LcreStatus::OracleError, e.to_string()))?;
        put(label_out, st.to_string());
        Ok(match st {
            ValidityStatus::NoConversionWithinBound(_) => LcreStatus::Negative,
            ValidityStatus::Unknown(_) => LcreStatus::Unknown,
            _ => LcreStatus::Ok,
        })
    })
}

/// Checks a derivation. `Ok` if accepted, `Negative` if rejected, `Unknown`
/// if the oracle could not decide a side condition; the report is written out.
///
/// # Safety
/// `proof` must be NUL-terminated; `report_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn lcre_check_proof(
    t: *const LcreTheory,
    proof: *const c_char,
    report_out: *mut *mut c_char,
) -> LcreStatus {
    guard(|| {
        let th = theory(t)?;
        let d = parse_proof(&th.file, text(proof)?)
            .map_err(|e| fail(LcreStatus::InputError, e.to_string()))?;
        let rep = check_proof(&th.file.theory, &th.oracle, &d)
            .map_err(|e| fail(LcreStatus::OracleError, e.to_string()))?;
        put(report_out, rep.to_string());
        Ok(match rep.verdict {
            CheckVerdict::Accepted => LcreStatus::Ok,
            CheckVerdict::Rejected { .. } => LcreStatus::Negative,
            CheckVerdict::OracleUnknown { .. } => LcreStatus::Unknown,
        })
    })
}

/// Builds a derivation for a goal; `Unknown` when none is found.
///
/// # Safety
/// `goal` must be NUL-terminated; `proof_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn lcre_prove(
    t: *const LcreTheory,
    goal: *const c_char,
    proof_out: *mut *mut c_char,
) -> LcreStatus {
    guard(|| {
        let th = theory(t)?;
        let ce = parse_goal(&th.file, text(goal)?)
            .map_err(|e| fail(LcreStatus::InputError, e.to_string()))?;
        let oracle_err =
            |e: lcre::models::OracleError| fail(LcreStatus::OracleError, e.to_string());
        let d = match generate_calc_proof(&th.file.theory, &th.oracle, &ce) {
            Ok(d) => Some(d),
            Err(GenerateError::Oracle(e)) => return Err(oracle_err(e)),
            Err(_) => prove_heuristic(&th.file.theory, &th.oracle, &ce, &SearchOptions::default())
                .map_err(oracle_err)?,
        };
        match d {
            Some(d) => {
                put(proof_out, print_proof(&d));
                Ok(LcreStatus::Ok)
            }
            None => Ok(LcreStatus::Unknown),
        }
    })
}

/// Value-consistency search to `depth` rule steps. `Ok` when no two values
/// were found convertible, `Negative` with the pair written out otherwise.
///
/// # Safety
/// `witness_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn lcre_consistent(
    t: *const LcreTheory,
    depth: u32,
    witness_out: *mut *mut c_char,
) -> LcreStatus {
    guard(|| {
        let th = theory(t)?;
        let opts = SearchOptions::default();
        match check_value_consistency(
            &th.file.theory,
            depth as usize,
            opts.pool_radius,
            opts.max_nodes,
        ) {
            ConsistencyReport::ConsistentUpTo(_) => Ok(LcreStatus::Ok),
            ConsistencyReport::InconsistentWitness { u, v, .. } => {
                put(witness_out, format!("{u} {v}"));
                Ok(LcreStatus::Negative)
            }
        }
    })
}

/// Counter-model search over a finite underlying model. `Ok` with the algebra
/// written out, `Unknown` when the bounds are exhausted.
///
/// # Safety
/// `goal` must be NUL-terminated; `algebra_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn lcre_refute(
    t: *const LcreTheory,
    goal: *const c_char,
    extra: u32,
    term_card: u32,
    algebra_out: *mut *mut c_char,
) -> LcreStatus {
    guard(|| {
        let th = theory(t)?;
        let ce = parse_goal(&th.file, text(goal)?)
            .map_err(|e| fail(LcreStatus::InputError, e.to_string()))?;
        match search_counter_model(&th.file.theory, &ce, extra as usize, term_card as usize)
            .map_err(|e| fail(LcreStatus::InputError, e.to_string()))?
        {
            CounterModelOutcome::Found { algebra, .. } => {
                put(algebra_out, print_algebra(&algebra));
                Ok(LcreStatus::Ok)
            }
            CounterModelOutcome::Exhausted { .. } => Ok(LcreStatus::Unknown),
        }
    })
}
