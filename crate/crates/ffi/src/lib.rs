//! C ABI over `urnlab`.
//!
//! Every function returns a [`UrnStatus`]. On failure the message is kept in
//! thread-local storage and read back with [`urnlab_last_error`]. Panics are
//! caught at the boundary and reported as `URN_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use urnlab::asymptotics::second_eigenvalue;
use urnlab::meanfield::{equilibria_2d, Stability};
use urnlab::polya::beta_moment;
use urnlab::rng::{stream_rng, UrnRng};
use urnlab::urn::{AdditionModel, DrawingRule, RuleKind, UrnEngine, UrnState};
use urnlab::{ShapeFunction, UrnError};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UrnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DegenerateRule = 3,
    ModelContract = 4,
    MissingShapeData = 5,
    OutOfScope = 6,
    RegimeMismatch = 7,
    BufferTooSmall = 8,
    Panic = 9,
    Internal = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UrnModelKind {
    /// `D = I_d`; `p` is ignored.
    Identity = 0,
    /// Adaptive allocation with success probabilities `p`.
    Finance = 1,
    /// Deterministic `H` built from `p`.
    Balanced = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UrnStability {
    Attractive = 0,
    Repulsive = 1,
    Degenerate = 2,
    Unclassified = 3,
}

/// Opaque urn with its own random stream.
pub struct UrnHandle {
    engine: UrnEngine,
    rng: UrnRng,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &UrnError) -> UrnStatus {
    match e {
        UrnError::DegenerateRule | UrnError::DegenerateMeanField(_) => UrnStatus::DegenerateRule,
        UrnError::ModelContract(_) => UrnStatus::ModelContract,
        UrnError::MissingShapeData { .. } => UrnStatus::MissingShapeData,
        UrnError::Scope(_) => UrnStatus::OutOfScope,
        UrnError::RegimeMismatch(_) => UrnStatus::RegimeMismatch,
        UrnError::InvalidArgument { .. } | UrnError::Config(_) => UrnStatus::InvalidArgument,
        _ => UrnStatus::Internal,
    }
}

struct Fail(UrnStatus, String);

impl From<UrnError> for Fail {
    fn from(e: UrnError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> UrnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UrnStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside urnlab".into());
            UrnStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(UrnStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn shape_arg(spec: *const c_char) -> Result<ShapeFunction, Fail> {
    if spec.is_null() {
        return Err(null("f_spec"));
    }
    let s = CStr::from_ptr(spec)
        .to_str()
        .map_err(|_| Fail(UrnStatus::InvalidArgument, "f_spec is not UTF-8".into()))?;
    Ok(ShapeFunction::parse(s)?)
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn urnlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Creates an urn with the reinforced-frequency rule.
///
/// # Safety
/// `y0` points to `d` doubles, `p` to `d` doubles unless `model` is
/// `Identity`, `f_spec` is a NUL-terminated string and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn urnlab_urn_new(
    y0: *const f64,
    d: usize,
    f_spec: *const c_char,
    model: UrnModelKind,
    p: *const f64,
    seed: u64,
    out: *mut *mut UrnHandle,
) -> UrnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let y = slice_arg(y0, d, "y0")?.to_vec();
        let f = shape_arg(f_spec)?;
        let model = match model {
            UrnModelKind::Identity => AdditionModel::identity(d)?,
            UrnModelKind::Finance => AdditionModel::finance(slice_arg(p, d, "p")?.to_vec())?,
            UrnModelKind::Balanced => {
                AdditionModel::balanced(urnlab::finance::limit_h(slice_arg(p, d, "p")?))?
            }
        };
        let engine = UrnEngine::new(
            UrnState::new(y)?,
            DrawingRule::new(RuleKind::SkewedFrequency, f)?,
            model,
        )?;
        *out = Box::into_raw(Box::new(UrnHandle {
            engine,
            rng: stream_rng(seed, 0),
        }));
        Ok(())
    })
}

/// Advances `steps` draws. `last_drawn` (nullable) receives the zero-based
/// colour of the final draw.
///
/// # Safety
/// `urn` comes from [`urnlab_urn_new`] and has not been freed.
#[no_mangle]
pub unsafe extern "C" fn urnlab_urn_advance(
    urn: *mut UrnHandle,
    steps: u64,
    last_drawn: *mut usize,
) -> UrnStatus {
    guard(|| {
        let h = urn.as_mut().ok_or_else(|| null("urn"))?;
        let mut drawn = 0;
        for _ in 0..steps {
            drawn = h.engine.advance(&mut h.rng)?;
        }
        if !last_drawn.is_null() && steps > 0 {
            *last_drawn = drawn;
        }
        Ok(())
    })
}

/// Writes `Ỹ_n` into `out[0..len]`; `len` must equal the number of colours.
///
/// # Safety
/// `urn` is live and `out` points to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn urnlab_urn_normalized(
    urn: *const UrnHandle,
    out: *mut f64,
    len: usize,
) -> UrnStatus {
    guard(|| {
        let h = urn.as_ref().ok_or_else(|| null("urn"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let y = h.engine.state().normalized();
        if len < y.len() {
            return Err(Fail(
                UrnStatus::BufferTooSmall,
                format!("need {} slots, got {len}", y.len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, y.len()).copy_from_slice(&y);
        Ok(())
    })
}

/// Number of draws so far.
///
/// # Safety
/// `urn` is live and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn urnlab_urn_steps(urn: *const UrnHandle, out: *mut u64) -> UrnStatus {
    guard(|| {
        let h = urn.as_ref().ok_or_else(|| null("urn"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = h.engine.state().n;
        Ok(())
    })
}

/// # Safety
/// `urn` is NULL or a live handle; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn urnlab_urn_free(urn: *mut UrnHandle) {
    if !urn.is_null() {
        drop(Box::from_raw(urn));
    }
}

/// Two-colour equilibria: first coordinates into `roots`, labels into
/// `stability`, count into `count`. Fails with `BUFFER_TOO_SMALL` (and still
/// sets `count`) when `cap` is short.
///
/// # Safety
/// `roots` and `stability` point to `cap` writable slots; `count` is writable.
#[no_mangle]
pub unsafe extern "C" fn urnlab_equilibria_2d(
    f_spec: *const c_char,
    p1: f64,
    p2: f64,
    roots: *mut f64,
    stability: *mut UrnStability,
    cap: usize,
    count: *mut usize,
) -> UrnStatus {
    guard(|| {
        if roots.is_null() || stability.is_null() || count.is_null() {
            return Err(null("roots/stability/count"));
        }
        let report = equilibria_2d(&shape_arg(f_spec)?, p1, p2)?;
        *count = report.points.len();
        if cap < report.points.len() {
            return Err(Fail(
                UrnStatus::BufferTooSmall,
                format!("{} equilibria, buffer holds {cap}", report.points.len()),
            ));
        }
        for (k, e) in report.points.iter().enumerate() {
            *roots.add(k) = e.y[0];
            *stability.add(k) = match e.stability {
                Stability::Attractive => UrnStability::Attractive,
                Stability::Repulsive => UrnStability::Repulsive,
                Stability::Degenerate => UrnStability::Degenerate,
                Stability::Unclassified => UrnStability::Unclassified,
            };
        }
        Ok(())
    })
}

/// `λ` at the two-colour root `y_star1`.
///
/// # Safety
/// `f_spec` is a NUL-terminated string and `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn urnlab_second_eigenvalue(
    f_spec: *const c_char,
    p1: f64,
    p2: f64,
    y_star1: f64,
    out: *mut f64,
) -> UrnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = second_eigenvalue(&shape_arg(f_spec)?, p1, p2, y_star1).lambda;
        Ok(())
    })
}

/// `E[X^k]` for `X ~ Beta(a, b)`.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn urnlab_beta_moment(k: u32, a: f64, b: f64, out: *mut f64) -> UrnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = beta_moment(k, a, b)?;
        Ok(())
    })
}
