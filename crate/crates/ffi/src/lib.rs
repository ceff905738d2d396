//! C interface to the capsys library.
//!
//! Bodies and systoles are opaque handles created and freed by this library.
//! Every fallible function returns a [`CapsysStatus`]; on failure the message
//! is available from [`capsys_last_error`] on the same thread. Panics are
//! caught at the boundary and reported as [`CapsysStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use capsys::capacities::{self, IndexBoundFlavor};
use capsys::dual_solver::{self, SolveConfig, SystoleResult};
use capsys::{Body, BodySpec, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CapsysStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidBody = 3,
    Parse = 4,
    Numerical = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Index bound hypothesis for [`capsys_index_bound`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CapsysIndexFlavor {
    General = 0,
    CentrallySymmetric = 1,
    S1Invariant = 2,
}

/// Solver settings exposed to C; the remaining knobs keep their defaults.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapsysSolveConfig {
    /// Truncation order N.
    pub modes: usize,
    /// Quadrature samples M; 0 means 8N.
    pub grid: usize,
    pub starts: usize,
    pub seed: u64,
    /// Relative accuracy claimed for numeric values.
    pub accuracy: f64,
}

/// Opaque convex body.
pub struct CapsysBody(Body);

/// Opaque reconstructed systole.
pub struct CapsysSystole(SystoleResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> CapsysStatus {
    match e {
        Error::Json(_) => CapsysStatus::Parse,
        Error::InvalidBody(_)
        | Error::NonSpanning { .. }
        | Error::OriginNotInterior
        | Error::OddDimension(_) => CapsysStatus::InvalidBody,
        Error::NonPositiveAction(_)
        | Error::Degenerate(_)
        | Error::LinearProgram(_)
        | Error::SequenceTooShort { .. } => CapsysStatus::Numerical,
        _ => CapsysStatus::InvalidArgument,
    }
}

struct Fail(CapsysStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CapsysStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording failures and panics in the thread-local error slot.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CapsysStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CapsysStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CapsysStatus::Panic
        }
    }
}

unsafe fn read_slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn body_ref<'a>(p: *const CapsysBody) -> Result<&'a Body, Fail> {
    p.as_ref().map(|b| &b.0).ok_or_else(|| null("body"))
}

unsafe fn systole_ref<'a>(p: *const CapsysSystole) -> Result<&'a SystoleResult, Fail> {
    p.as_ref().map(|s| &s.0).ok_or_else(|| null("systole"))
}

fn to_config(c: &CapsysSolveConfig) -> Result<SolveConfig, Fail> {
    let cfg = SolveConfig {
        modes: c.modes,
        grid: (c.grid != 0).then_some(c.grid),
        starts: c.starts,
        seed: c.seed,
        accuracy: c.accuracy,
        ..SolveConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn capsys_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn capsys_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default solver settings.
#[no_mangle]
pub extern "C" fn capsys_solve_config_default() -> CapsysSolveConfig {
    let d = SolveConfig::default();
    CapsysSolveConfig {
        modes: d.modes,
        grid: 0,
        starts: d.starts,
        seed: d.seed,
        accuracy: d.accuracy,
    }
}

/// Builds a body from a JSON body specification.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn capsys_body_from_json(
    json: *const c_char,
    out: *mut *mut CapsysBody,
) -> CapsysStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Fail(CapsysStatus::Parse, format!("body JSON is not UTF-8: {e}")))?;
        let spec: BodySpec = serde_json::from_str(text).map_err(Error::from)?;
        *out = Box::into_raw(Box::new(CapsysBody(spec.build()?)));
        Ok(())
    })
}

/// Builds the ellipsoid `E(a_1, ..., a_n)` in `R^2n`.
///
/// # Safety
/// `a` must point to `n` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn capsys_body_ellipsoid(
    a: *const f64,
    n: usize,
    out: *mut *mut CapsysBody,
) -> CapsysStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let a = read_slice(a, n, "a")?;
        *out = Box::into_raw(Box::new(CapsysBody(Body::ellipsoid(a)?)));
        Ok(())
    })
}

/// Releases a body; null is ignored.
///
/// # Safety
/// `body` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn capsys_body_free(body: *mut CapsysBody) {
    if !body.is_null() {
        drop(Box::from_raw(body));
    }
}

/// Ambient dimension `2n`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn capsys_body_dim(body: *const CapsysBody, out: *mut usize) -> CapsysStatus {
    guard(|| {
        *out_ref(out, "out")? = body_ref(body)?.dim();
        Ok(())
    })
}

/// Support function `h_K(u)`.
///
/// # Safety
/// `u` must point to `len` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn capsys_body_support(
    body: *const CapsysBody,
    u: *const f64,
    len: usize,
    out: *mut f64,
) -> CapsysStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = body_ref(body)?.support(read_slice(u, len, "u")?)?;
        Ok(())
    })
}

/// Numeric first capacity: the best dual value over all starts.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn capsys_c1_numeric(
    body: *const CapsysBody,
    config: *const CapsysSolveConfig,
    out: *mut f64,
) -> CapsysStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let cfg = to_config(config.as_ref().ok_or_else(|| null("config"))?)?;
        *out = capacities::c1_numeric(body_ref(body)?, &cfg)?;
        Ok(())
    })
}

/// Minimizes and reconstructs the best systole.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn capsys_systole_solve(
    body: *const CapsysBody,
    config: *const CapsysSolveConfig,
    out: *mut *mut CapsysSystole,
) -> CapsysStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let cfg = to_config(config.as_ref().ok_or_else(|| null("config"))?)?;
        let best = dual_solver::solve_systoles(body_ref(body)?, &cfg)?
            .into_iter()
            .next()
            .ok_or_else(|| Fail(CapsysStatus::Numerical, "no solver runs".into()))?;
        *out = Box::into_raw(Box::new(CapsysSystole(best)));
        Ok(())
    })
}

/// Releases a systole; null is ignored.
///
/// # Safety
/// `systole` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn capsys_systole_free(systole: *mut CapsysSystole) {
    if !systole.is_null() {
        drop(Box::from_raw(systole));
    }
}

/// Action, inclusion residual and boundary residual of a systole. Any output
/// pointer may be null.
///
/// # Safety
/// `systole` must be valid; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn capsys_systole_summary(
    systole: *const CapsysSystole,
    action: *mut f64,
    inclusion_residual: *mut f64,
    boundary_residual: *mut f64,
) -> CapsysStatus {
    guard(|| {
        let s = systole_ref(systole)?;
        for (p, v) in [
            (action, s.action),
            (inclusion_residual, s.inclusion_residual),
            (boundary_residual, s.boundary_residual),
        ] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copies the loop samples, row-major `samples x dim` in block coordinates
/// `(x_1..x_n, y_1..y_n)`. With `buf` null only the sizes are written.
///
/// # Safety
/// `buf` must hold `buf_len` doubles when non-null; other pointers valid.
#[no_mangle]
pub unsafe extern "C" fn capsys_systole_samples(
    systole: *const CapsysSystole,
    buf: *mut f64,
    buf_len: usize,
    samples: *mut usize,
    dim: *mut usize,
) -> CapsysStatus {
    guard(|| {
        let g = &systole_ref(systole)?.gamma;
        *out_ref(samples, "samples")? = g.len();
        *out_ref(dim, "dim")? = g.dim();
        if buf.is_null() {
            return Ok(());
        }
        let need = g.len() * g.dim();
        if buf_len < need {
            return Err(Fail(
                CapsysStatus::BufferTooSmall,
                format!("buffer holds {buf_len} values, {need} needed"),
            ));
        }
        let dst = slice::from_raw_parts_mut(buf, need);
        for (row, p) in dst.chunks_exact_mut(g.dim()).zip(g.samples()) {
            row.copy_from_slice(p);
        }
        Ok(())
    })
}

/// First `m` Gutt-Hutchings capacities of `E(a_1, ..., a_n)`.
///
/// # Safety
/// `a` must hold `n` doubles and `out` must hold `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn capsys_ellipsoid_capacities(
    a: *const f64,
    n: usize,
    m: usize,
    out: *mut f64,
) -> CapsysStatus {
    guard(|| {
        let a = read_slice(a, n, "a")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let seq = capacities::ellipsoid_sequence(a, m)?;
        slice::from_raw_parts_mut(out, m).copy_from_slice(&seq.values);
        Ok(())
    })
}

/// Systolic S1-index and generalized Zoll flag of `E(a_1, ..., a_n)`.
///
/// # Safety
/// `a` must hold `n` doubles; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn capsys_ellipsoid_index(
    a: *const f64,
    n: usize,
    index: *mut usize,
    zoll: *mut bool,
) -> CapsysStatus {
    guard(|| {
        let index = out_ref(index, "index")?;
        let zoll = out_ref(zoll, "zoll")?;
        let a = read_slice(a, n, "a")?;
        let seq = capacities::ellipsoid_sequence(a, n + 1)?;
        *index = capacities::sys_index(&seq).index;
        *zoll = capacities::is_generalized_zoll(&seq, n)?;
        Ok(())
    })
}

/// Upper bound for the systolic S1-index in dimension `2n`.
#[no_mangle]
pub extern "C" fn capsys_index_bound(n: usize, flavor: CapsysIndexFlavor) -> usize {
    let f = match flavor {
        CapsysIndexFlavor::General => IndexBoundFlavor::General,
        CapsysIndexFlavor::CentrallySymmetric => IndexBoundFlavor::CentrallySymmetric,
        CapsysIndexFlavor::S1Invariant => IndexBoundFlavor::S1Invariant,
    };
    capacities::index_bound(n, f)
}
