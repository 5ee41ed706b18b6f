//! C ABI for the fieldtriple library.
//!
//! The API hands out opaque handles: [`FtProblem`] wraps a parsed problem
//! description, [`FtReport`] the outcome of a verification run. Every
//! fallible call returns an [`FtStatus`] code and records a message
//! readable through [`ft_last_error`] on failure. Strings returned through
//! `char**` out parameters are owned by the caller and must be released
//! with [`ft_string_free`]; handles must be released with their matching
//! `*_free` function. Handles are safe to share across threads for reads,
//! but each handle must be freed exactly once.
//!
//! The matching header is generated into `include/fieldtriple.h` at build
//! time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fmt::Display;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::str::FromStr;

use fieldtriple::dynamics::el_residual;
use fieldtriple::problem::ProblemFile;
use fieldtriple::verify::{full_suite, reports_to_json, CheckReport, CheckStatus, ProblemSpec};

/// Result code returned by every fallible function in this API.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FtStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument was malformed: bad UTF-8, a wrong buffer length, or a
    /// name the problem does not define.
    InvalidArgument = 2,
    /// The problem description could not be read, parsed, or assembled.
    BadProblem = 3,
    /// Evaluation failed at runtime, for example outside a field's domain.
    EvalFailed = 4,
    /// A panic was caught at the boundary. State is still consistent, but
    /// the call did nothing.
    Internal = 5,
}

/// Opaque handle to a parsed verification problem.
pub struct FtProblem {
    spec: ProblemSpec,
}

/// Opaque handle to the outcome of a verification run, one entry per check.
pub struct FtReport {
    entries: Vec<CheckReport>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Display) {
    let msg = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(msg).ok());
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn fail(status: FtStatus, msg: impl Display) -> FtStatus {
    set_last_error(msg);
    status
}

fn guarded(body: impl FnOnce() -> FtStatus) -> FtStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(FtStatus::Internal, "internal panic"),
    }
}

fn give_string(text: &str, out: *mut *mut c_char) -> FtStatus {
    let owned = CString::new(text.replace('\0', " ")).expect("nul was stripped");
    unsafe { *out = owned.into_raw() };
    FtStatus::Ok
}

/// Returns the message describing the most recent failure on the calling
/// thread, or null if the last fallible call succeeded. The pointer stays
/// valid until the next call into this library from the same thread; do
/// not free it.
#[no_mangle]
pub extern "C" fn ft_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a problem description from a JSON string and writes a new handle
/// to `out`. Release the handle with [`ft_problem_free`].
///
/// # Safety
/// `json` must point to a NUL-terminated string and `out` to writable
/// space for one pointer; both must stay valid for the duration of the
/// call.
#[no_mangle]
pub unsafe extern "C" fn ft_problem_from_json(
    json: *const c_char,
    out: *mut *mut FtProblem,
) -> FtStatus {
    guarded(|| {
        clear_last_error();
        if json.is_null() || out.is_null() {
            return fail(FtStatus::NullArgument, "json and out must be non-null");
        }
        let text = match unsafe { CStr::from_ptr(json) }.to_str() {
            Ok(text) => text,
            Err(_) => return fail(FtStatus::InvalidArgument, "json is not valid UTF-8"),
        };
        match ProblemFile::from_str(text).and_then(ProblemFile::into_spec) {
            Ok(spec) => {
                unsafe { *out = Box::into_raw(Box::new(FtProblem { spec })) };
                FtStatus::Ok
            }
            Err(err) => fail(FtStatus::BadProblem, err),
        }
    })
}

/// Reads a problem description from a JSON file and writes a new handle to
/// `out`. Release the handle with [`ft_problem_free`].
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to writable
/// space for one pointer; both must stay valid for the duration of the
/// call.
#[no_mangle]
pub unsafe extern "C" fn ft_problem_from_file(
    path: *const c_char,
    out: *mut *mut FtProblem,
) -> FtStatus {
    guarded(|| {
        clear_last_error();
        if path.is_null() || out.is_null() {
            return fail(FtStatus::NullArgument, "path and out must be non-null");
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(path) => path,
            Err(_) => return fail(FtStatus::InvalidArgument, "path is not valid UTF-8"),
        };
        match ProblemFile::from_path(path).and_then(ProblemFile::into_spec) {
            Ok(spec) => {
                unsafe { *out = Box::into_raw(Box::new(FtProblem { spec })) };
                FtStatus::Ok
            }
            Err(err) => fail(FtStatus::BadProblem, err),
        }
    })
}

/// Releases a problem handle. Passing null is a no-op.
///
/// # Safety
/// `problem` must be a handle returned by this library that has not been
/// freed already, and must not be used after this call.
#[no_mangle]
pub unsafe extern "C" fn ft_problem_free(problem: *mut FtProblem) {
    if !problem.is_null() {
        drop(unsafe { Box::from_raw(problem) });
    }
}

/// Returns the base dimension of the problem, or 0 if `problem` is null.
///
/// # Safety
/// `problem` must be null or a live handle returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ft_problem_base_dim(problem: *const FtProblem) -> usize {
    if problem.is_null() {
        return 0;
    }
    unsafe { &*problem }.spec.dims.m
}

/// Returns the fibre dimension of the problem, or 0 if `problem` is null.
///
/// # Safety
/// `problem` must be null or a live handle returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ft_problem_fiber_dim(problem: *const FtProblem) -> usize {
    if problem.is_null() {
        return 0;
    }
    unsafe { &*problem }.spec.dims.n
}

/// Runs the full verification suite on the problem and writes a report
/// handle to `out`. Release the report with [`ft_report_free`]. The run
/// itself always succeeds; individual check outcomes are read from the
/// report.
///
/// # Safety
/// `problem` must be a live handle returned by this library and `out`
/// must point to writable space for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_problem_check(
    problem: *const FtProblem,
    out: *mut *mut FtReport,
) -> FtStatus {
    guarded(|| {
        clear_last_error();
        if problem.is_null() || out.is_null() {
            return fail(FtStatus::NullArgument, "problem and out must be non-null");
        }
        let entries = full_suite(&unsafe { &*problem }.spec);
        unsafe { *out = Box::into_raw(Box::new(FtReport { entries })) };
        FtStatus::Ok
    })
}

/// Evaluates the Euler-Lagrange residual of a named section at a base
/// point. `x` must hold `ft_problem_base_dim` coordinates and `out` must
/// have room for `ft_problem_fiber_dim` values, one per field component.
/// Fails with `InvalidArgument` if the problem has no Lagrangian or does
/// not define the section.
///
/// # Safety
/// `problem` must be a live handle returned by this library, `section` a
/// NUL-terminated string, `x` readable for `x_len` doubles, and `out`
/// writable for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ft_el_residual(
    problem: *const FtProblem,
    section: *const c_char,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> FtStatus {
    guarded(|| {
        clear_last_error();
        if problem.is_null() || section.is_null() || x.is_null() || out.is_null() {
            return fail(FtStatus::NullArgument, "all pointer arguments must be non-null");
        }
        let spec = &unsafe { &*problem }.spec;
        let name = match unsafe { CStr::from_ptr(section) }.to_str() {
            Ok(name) => name,
            Err(_) => return fail(FtStatus::InvalidArgument, "section name is not valid UTF-8"),
        };
        let Some(lag) = &spec.lagrangian else {
            return fail(FtStatus::InvalidArgument, "the problem has no lagrangian");
        };
        let Some((_, phi)) = spec.sections.iter().find(|(known, _)| known == name) else {
            return fail(FtStatus::InvalidArgument, format!("unknown section {name:?}"));
        };
        if x_len != spec.dims.m {
            return fail(
                FtStatus::InvalidArgument,
                format!("expected {} base coordinates, got {x_len}", spec.dims.m),
            );
        }
        if out_len != spec.dims.n {
            return fail(
                FtStatus::InvalidArgument,
                format!("expected room for {} residuals, got {out_len}", spec.dims.n),
            );
        }
        let point = unsafe { slice::from_raw_parts(x, x_len) };
        match el_residual(lag, phi, point) {
            Ok(values) => {
                unsafe { slice::from_raw_parts_mut(out, out_len) }.copy_from_slice(&values);
                FtStatus::Ok
            }
            Err(err) => fail(FtStatus::EvalFailed, err),
        }
    })
}

/// Returns the number of entries in the report, or 0 if `report` is null.
///
/// # Safety
/// `report` must be null or a live handle returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ft_report_len(report: *const FtReport) -> usize {
    if report.is_null() {
        return 0;
    }
    unsafe { &*report }.entries.len()
}

/// Returns the number of failed entries in the report, or 0 if `report`
/// is null.
///
/// # Safety
/// `report` must be null or a live handle returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ft_report_failures(report: *const FtReport) -> usize {
    if report.is_null() {
        return 0;
    }
    unsafe { &*report }
        .entries
        .iter()
        .filter(|entry| entry.status == CheckStatus::Fail)
        .count()
}

unsafe fn entry<'a>(report: *const FtReport, index: usize) -> Option<&'a CheckReport> {
    if report.is_null() {
        return None;
    }
    unsafe { &*report }.entries.get(index)
}

/// Returns the status of entry `index`: 0 pass, 1 fail, 2 skipped, or -1
/// if `report` is null or the index is out of range.
///
/// # Safety
/// `report` must be null or a live handle returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ft_report_entry_status(report: *const FtReport, index: usize) -> i32 {
    match unsafe { entry(report, index) } {
        Some(found) => match found.status {
            CheckStatus::Pass => 0,
            CheckStatus::Fail => 1,
            CheckStatus::Skipped => 2,
        },
        None => -1,
    }
}

/// Returns the worst violation of entry `index`, or NaN if `report` is
/// null or the index is out of range.
///
/// # Safety
/// `report` must be null or a live handle returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ft_report_entry_violation(report: *const FtReport, index: usize) -> f64 {
    unsafe { entry(report, index) }.map_or(f64::NAN, |found| found.violation)
}

/// Returns the tolerance of entry `index`, or NaN if `report` is null or
/// the index is out of range.
///
/// # Safety
/// `report` must be null or a live handle returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ft_report_entry_tolerance(report: *const FtReport, index: usize) -> f64 {
    unsafe { entry(report, index) }.map_or(f64::NAN, |found| found.tolerance)
}

/// Writes the name of entry `index` to `out` as a newly allocated string.
/// Release it with [`ft_string_free`].
///
/// # Safety
/// `report` must be a live handle returned by this library and `out` must
/// point to writable space for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_report_entry_name(
    report: *const FtReport,
    index: usize,
    out: *mut *mut c_char,
) -> FtStatus {
    guarded(|| {
        clear_last_error();
        if out.is_null() {
            return fail(FtStatus::NullArgument, "out must be non-null");
        }
        match unsafe { entry(report, index) } {
            Some(found) => give_string(&found.name, out),
            None => fail(FtStatus::InvalidArgument, format!("no entry {index}")),
        }
    })
}

/// Writes the location of entry `index` to `out` as a newly allocated
/// string: where the worst violation was seen, or the reason an entry was
/// skipped. Release it with [`ft_string_free`].
///
/// # Safety
/// `report` must be a live handle returned by this library and `out` must
/// point to writable space for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_report_entry_location(
    report: *const FtReport,
    index: usize,
    out: *mut *mut c_char,
) -> FtStatus {
    guarded(|| {
        clear_last_error();
        if out.is_null() {
            return fail(FtStatus::NullArgument, "out must be non-null");
        }
        match unsafe { entry(report, index) } {
            Some(found) => give_string(&found.location, out),
            None => fail(FtStatus::InvalidArgument, format!("no entry {index}")),
        }
    })
}

/// Serializes the whole report to pretty-printed JSON and writes it to
/// `out` as a newly allocated string. Release it with [`ft_string_free`].
///
/// # Safety
/// `report` must be a live handle returned by this library and `out` must
/// point to writable space for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ft_report_to_json(
    report: *const FtReport,
    out: *mut *mut c_char,
) -> FtStatus {
    guarded(|| {
        clear_last_error();
        if report.is_null() || out.is_null() {
            return fail(FtStatus::NullArgument, "report and out must be non-null");
        }
        give_string(&reports_to_json(&unsafe { &*report }.entries), out)
    })
}

/// Releases a report handle. Passing null is a no-op.
///
/// # Safety
/// `report` must be a handle returned by this library that has not been
/// freed already, and must not be used after this call.
#[no_mangle]
pub unsafe extern "C" fn ft_report_free(report: *mut FtReport) {
    if !report.is_null() {
        drop(unsafe { Box::from_raw(report) });
    }
}

/// Releases a string returned by this library. Passing null is a no-op.
///
/// # Safety
/// `s` must be a string returned by this library that has not been freed
/// already, and must not be used after this call.
#[no_mangle]
pub unsafe extern "C" fn ft_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}
