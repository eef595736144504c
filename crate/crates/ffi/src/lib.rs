//! C ABI over the `chainport` simulator.
//!
//! Objects cross the boundary as opaque handles (`CpSpec`, `CpTable`) that
//! the caller releases with the matching `*_free` function. Every fallible
//! call returns a `CpStatus`; on failure `cp_last_error` returns a message
//! for the calling thread, valid until the next failing call on that thread.
//! Strings returned through out-parameters are owned by the caller and must
//! be released with `cp_string_free`.
//!
//! The header `include/chainport.h` is generated by the build script.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chainport::corrections::{derive_table, CorrectionTable};
use chainport::error::Error;
use chainport::hilbert::C64;
use chainport::protocol::{
    branch_kraus, channel_fidelity, cyclic_permutation_matrix, run_trial, EndLink, Family, ProtocolSpec, SimMode,
    SpinInput,
};
use chainport::verify::check_outcome_support;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SizeLimit = 3,
    NoCorrection = 4,
    ValidationFailed = 5,
    Parse = 6,
    Io = 7,
    Internal = 99,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpFamily {
    TwoWayVaa = 0,
    Chain = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpEndLink {
    Z = 0,
    X = 1,
    Y = 2,
    Auto = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpMode {
    Full = 0,
    Compact = 1,
}

/// Opaque protocol configuration.
pub struct CpSpec(ProtocolSpec);

/// Opaque correction table.
pub struct CpTable(CorrectionTable);

/// Scalar results of one sampled trial.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct CpTrialSummary {
    /// Probability of the observed readout combination.
    pub prob: f64,
    pub fidelity_before: f64,
    /// Valid only when `corrected` is nonzero.
    pub fidelity_after: f64,
    pub corrected: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_for(err: &Error) -> CpStatus {
    match err {
        Error::SizeLimit { .. } => CpStatus::SizeLimit,
        Error::NoPauliCorrection { .. } => CpStatus::NoCorrection,
        Error::ValidationFailure { .. } | Error::OddDifference(_) => CpStatus::ValidationFailed,
        Error::Parse(_) | Error::Json(_) => CpStatus::Parse,
        Error::Io(_) => CpStatus::Io,
        Error::InvalidSpec(_)
        | Error::DimensionMismatch { .. }
        | Error::FingerprintMismatch { .. }
        | Error::MissingEntry(_)
        | Error::ZeroNorm => CpStatus::InvalidArgument,
        _ => CpStatus::Internal,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (CpStatus, String)>) -> CpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CpStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CpStatus::Internal
        }
    }
}

fn lift(err: Error) -> (CpStatus, String) {
    (status_for(&err), err.to_string())
}

fn null(what: &str) -> (CpStatus, String) {
    (CpStatus::NullPointer, format!("{what} is null"))
}

/// Message describing the last failure on this thread, or NULL.
#[no_mangle]
pub extern "C" fn cp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cp_spec_new(
    n: usize,
    family: CpFamily,
    end_link: CpEndLink,
    mode: CpMode,
    out: *mut *mut CpSpec,
) -> CpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let family = match family {
            CpFamily::TwoWayVaa => Family::TwoWayVaa,
            CpFamily::Chain => Family::Chain,
        };
        let end_link = match end_link {
            CpEndLink::Z => EndLink::Z,
            CpEndLink::X => EndLink::X,
            CpEndLink::Y => EndLink::Y,
            CpEndLink::Auto => EndLink::Auto,
        };
        let mode = match mode {
            CpMode::Full => SimMode::Full,
            CpMode::Compact => SimMode::Compact,
        };
        let spec = ProtocolSpec::new(n, family, end_link, mode).map_err(lift)?;
        *out = Box::into_raw(Box::new(CpSpec(spec)));
        Ok(())
    })
}

/// # Safety
/// `spec` must be NULL or a handle from `cp_spec_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_spec_free(spec: *mut CpSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Number of spin sites of the configuration, 0 for NULL.
///
/// # Safety
/// `spec` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_spec_sites(spec: *const CpSpec) -> usize {
    spec.as_ref().map_or(0, |s| s.0.n)
}

/// Derives the Pauli correction table for `spec`.
///
/// # Safety
/// `spec` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_table_derive(spec: *const CpSpec, out: *mut *mut CpTable) -> CpStatus {
    guard(|| {
        let spec = spec.as_ref().ok_or_else(|| null("spec"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let table = derive_table(&spec.0).map_err(lift)?;
        *out = Box::into_raw(Box::new(CpTable(table)));
        Ok(())
    })
}

/// Parses a correction table from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_table_from_json(json: *const c_char, out: *mut *mut CpTable) -> CpStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text =
            CStr::from_ptr(json).to_str().map_err(|e| (CpStatus::Parse, format!("table text is not UTF-8: {e}")))?;
        let table = CorrectionTable::from_json(text).map_err(lift)?;
        *out = Box::into_raw(Box::new(CpTable(table)));
        Ok(())
    })
}

/// Serializes a table to JSON; release the string with `cp_string_free`.
///
/// # Safety
/// `table` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_table_to_json(table: *const CpTable, out: *mut *mut c_char) -> CpStatus {
    guard(|| {
        let table = table.as_ref().ok_or_else(|| null("table"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let json = table.0.to_json().map_err(lift)?;
        *out = CString::new(json).map_err(|e| (CpStatus::Internal, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Number of entries in the table, 0 for NULL.
///
/// # Safety
/// `table` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_table_len(table: *const CpTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.len())
}

/// Looks up the correction for difference vector `d` of length `n`.
/// Writes one ASCII label ('I', 'X', 'Y' or 'Z') per site into `labels`,
/// which must hold `n` bytes.
///
/// # Safety
/// `d` and `labels` must point to `n` readable and writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cp_table_lookup(table: *const CpTable, d: *const u8, n: usize, labels: *mut u8) -> CpStatus {
    guard(|| {
        let table = table.as_ref().ok_or_else(|| null("table"))?;
        if d.is_null() || labels.is_null() {
            return Err(null("buffer"));
        }
        let key = std::slice::from_raw_parts(d, n);
        let found = table.0.get(key).ok_or_else(|| lift(Error::MissingEntry(key.to_vec())))?;
        let dst = std::slice::from_raw_parts_mut(labels, n);
        for (slot, label) in dst.iter_mut().zip(found) {
            *slot = label.as_char() as u8;
        }
        Ok(())
    })
}

/// # Safety
/// `table` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cp_table_free(table: *mut CpTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn product_input(amplitudes: *const f64, n: usize) -> Result<SpinInput, (CpStatus, String)> {
    if amplitudes.is_null() {
        return Err(null("amplitudes"));
    }
    let a = std::slice::from_raw_parts(amplitudes, 4 * n);
    let qubits = a
        .chunks_exact(4)
        .map(|c| {
            let q = [C64::new(c[0], c[1]), C64::new(c[2], c[3])];
            let norm = (q[0].norm_sqr() + q[1].norm_sqr()).sqrt();
            if !norm.is_finite() || norm == 0.0 {
                return Err(lift(Error::ZeroNorm));
            }
            Ok([q[0] / norm, q[1] / norm])
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SpinInput::Product(qubits))
}

/// Runs one sampled trial on a product input.
///
/// `amplitudes` holds `4 * n` doubles, `re0 im0 re1 im1` per site, where `n`
/// is the site count of `spec`; each site is renormalized. `table` may be
/// NULL, in which case no correction is applied. The observed difference
/// vector is written to `differences` (`n` bytes) when it is not NULL.
///
/// # Safety
/// All non-NULL pointers must be valid for the sizes above.
#[no_mangle]
pub unsafe extern "C" fn cp_run_trial(
    spec: *const CpSpec,
    table: *const CpTable,
    amplitudes: *const f64,
    seed: u64,
    differences: *mut u8,
    out: *mut CpTrialSummary,
) -> CpStatus {
    guard(|| {
        let spec = spec.as_ref().ok_or_else(|| null("spec"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let n = spec.0.n;
        let input = product_input(amplitudes, n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trial = run_trial(&spec.0, &input, &mut rng, table.as_ref().map(|t| &t.0)).map_err(lift)?;
        if !differences.is_null() {
            std::slice::from_raw_parts_mut(differences, n).copy_from_slice(&trial.outcome.difference_values());
        }
        *out = CpTrialSummary {
            prob: trial.prob,
            fidelity_before: trial.fidelity_before,
            fidelity_after: trial.fidelity_after.unwrap_or(0.0),
            corrected: trial.fidelity_after.is_some() as u8,
        };
        Ok(())
    })
}

/// Channel fidelity between the all-zero-difference branch operator and the
/// cyclic spin permutation.
///
/// # Safety
/// `spec` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_zero_branch_fidelity(spec: *const CpSpec, out: *mut f64) -> CpStatus {
    guard(|| {
        let spec = spec.as_ref().ok_or_else(|| null("spec"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ops = branch_kraus(&spec.0).map_err(lift)?;
        let (_, k) = ops
            .iter()
            .find(|(d, _)| d.iter().all(|&v| v == 0))
            .ok_or_else(|| (CpStatus::Internal, "no all-zero branch".to_string()))?;
        *out = channel_fidelity(k, &cyclic_permutation_matrix(spec.0.n));
        Ok(())
    })
}

/// Sets `*out` to 1 if every reachable difference is in {0, 2}, else 0.
///
/// # Safety
/// `amplitudes` as for `cp_run_trial`; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cp_check_outcome_support(
    spec: *const CpSpec,
    amplitudes: *const f64,
    out: *mut u8,
) -> CpStatus {
    guard(|| {
        let spec = spec.as_ref().ok_or_else(|| null("spec"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let input = product_input(amplitudes, spec.0.n)?;
        *out = check_outcome_support(&spec.0, &input).map_err(lift)? as u8;
        Ok(())
    })
}
