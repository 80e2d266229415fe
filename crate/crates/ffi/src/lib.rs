//! C interface to the calculus engine.
//!
//! Objects are opaque handles created by `lc_*_new`/`lc_*_parse` style
//! functions and released with the matching `lc_*_free`. Every fallible call
//! returns an `LcStatus`; on failure `lc_last_error_message` describes the
//! most recent error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use leafcalc::calculus;
use leafcalc::expr::Expr;
use leafcalc::foliation::{Domain, FoliationModule};
use leafcalc::polysym::{ClosedFormSymbol, PolyhomSymbol, Symbol};
use leafcalc::quantize::{axis_frequencies, estimate_order, quantize_dense, GridFunction, GridOperator, LinearOp, PeriodicGrid};
use leafcalc::scenario;
use leafcalc::spectra;
use leafcalc::Error;
use num_complex::Complex64;

/// Result codes shared by every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Input = 4,
    Dimension = 5,
    Ring = 6,
    Ellipticity = 7,
    Positivity = 8,
    NotSelfAdjoint = 9,
    DenseCap = 10,
    Aliasing = 11,
    Escape = 12,
    Config = 13,
    Io = 14,
    Stage = 15,
    Panic = 16,
}

/// A symbol `a(x, xi)`.
pub struct LcSymbol {
    inner: Arc<dyn Symbol>,
}

/// A periodic grid.
pub struct LcGrid {
    inner: PeriodicGrid,
}

/// A dense operator on a grid.
pub struct LcOperator {
    inner: GridOperator,
}

/// A foliation given by generating vector fields.
pub struct LcFoliation {
    inner: FoliationModule,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LcStatus {
    match e {
        Error::Parse { .. } => LcStatus::Parse,
        Error::Input(_) => LcStatus::Input,
        Error::Dimension { .. } => LcStatus::Dimension,
        Error::Ring(_) => LcStatus::Ring,
        Error::Ellipticity { .. } => LcStatus::Ellipticity,
        Error::Positivity { .. } => LcStatus::Positivity,
        Error::NotSelfAdjoint { .. } => LcStatus::NotSelfAdjoint,
        Error::DenseCap { .. } => LcStatus::DenseCap,
        Error::Aliasing { .. } => LcStatus::Aliasing,
        Error::Escape { .. } => LcStatus::Escape,
        Error::Config(_) => LcStatus::Config,
        Error::Io(_) => LcStatus::Io,
        Error::Stage { .. } => LcStatus::Stage,
    }
}

enum Failure {
    Null(&'static str),
    Utf8(&'static str),
    Engine(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure::Engine(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LcStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            LcStatus::NullPointer
        }
        Ok(Err(Failure::Utf8(what))) => {
            set_last_error(format!("invalid UTF-8 in {what}"));
            LcStatus::InvalidUtf8
        }
        Ok(Err(Failure::Engine(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic".into());
            LcStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn strings<'a>(p: *const *const c_char, len: usize, what: &'static str) -> Result<Vec<&'a str>, Failure> {
    slice(p, len, what)?.iter().map(|s| text(*s, what)).collect()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Polyhomogeneous symbol from `n_terms` homogeneous terms of degrees
/// `order, order - 1, ...`.
///
/// # Safety
/// `terms` must point to `n_terms` NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_symbol_parse(
    order: i32,
    terms: *const *const c_char,
    n_terms: usize,
    dim: usize,
    out: *mut *mut LcSymbol,
) -> LcStatus {
    guard(|| {
        let terms = strings(terms, n_terms, "terms")?;
        let s = PolyhomSymbol::parse(order, &terms, dim, dim)?;
        store(out, LcSymbol { inner: Arc::new(s) })
    })
}

/// Symbol given by a closed form together with its principal part.
///
/// # Safety
/// `expr` and `principal` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_symbol_closed_form(
    order: i32,
    expr: *const c_char,
    principal: *const c_char,
    dim: usize,
    out: *mut *mut LcSymbol,
) -> LcStatus {
    guard(|| {
        let s = ClosedFormSymbol::parse(order, text(expr, "expr")?, text(principal, "principal")?, dim, dim)?;
        store(out, LcSymbol { inner: Arc::new(s) })
    })
}

/// `a(x, xi)` for `x`, `xi` of the symbol's dimension.
///
/// # Safety
/// `x` and `xi` must hold `dim` doubles; `re` and `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_symbol_eval(
    symbol: *const LcSymbol,
    x: *const f64,
    xi: *const f64,
    dim: usize,
    re: *mut f64,
    im: *mut f64,
) -> LcStatus {
    guard(|| {
        let s = handle(symbol, "symbol")?;
        if dim != s.inner.x_dim() || dim != s.inner.xi_dim() {
            return Err(Error::Dimension {
                expected: s.inner.x_dim(),
                found: dim,
            }
            .into());
        }
        let v = s.inner.value(slice(x, dim, "x")?, slice(xi, dim, "xi")?);
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::Input("symbol is singular at this point".into()).into());
        }
        *slice_mut(re, 1, "re")?.first_mut().ok_or(Failure::Null("re"))? = v.re;
        *slice_mut(im, 1, "im")?.first_mut().ok_or(Failure::Null("im"))? = v.im;
        Ok(())
    })
}

/// # Safety
/// `symbol` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lc_symbol_free(symbol: *mut LcSymbol) {
    if !symbol.is_null() {
        drop(Box::from_raw(symbol));
    }
}

/// Grid of `points^dim` nodes starting at `origin` on every axis.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_grid_new(dim: usize, points: usize, origin: f64, out: *mut *mut LcGrid) -> LcStatus {
    guard(|| {
        let g = PeriodicGrid::new(dim, points)?.with_origin(origin);
        store(out, LcGrid { inner: g })
    })
}

/// Number of grid nodes, or 0 for NULL.
///
/// # Safety
/// `grid` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lc_grid_len(grid: *const LcGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.inner.len())
}

/// # Safety
/// `grid` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lc_grid_free(grid: *mut LcGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Dense `Op(a)` on a grid.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_operator_quantize(symbol: *const LcSymbol, grid: *const LcGrid, out: *mut *mut LcOperator) -> LcStatus {
    guard(|| {
        let s = handle(symbol, "symbol")?;
        let g = handle(grid, "grid")?;
        store(
            out,
            LcOperator {
                inner: quantize_dense(s.inner.as_ref(), &g.inner)?,
            },
        )
    })
}

/// Applies an operator to `len` complex values given as separate real and
/// imaginary arrays.
///
/// # Safety
/// Input arrays must hold `len` doubles and output arrays must be writable
/// for `len` doubles; `im_in` may be NULL for real input.
#[no_mangle]
pub unsafe extern "C" fn lc_operator_apply(
    op: *const LcOperator,
    re_in: *const f64,
    im_in: *const f64,
    re_out: *mut f64,
    im_out: *mut f64,
    len: usize,
) -> LcStatus {
    guard(|| {
        let op = handle(op, "operator")?;
        let n = op.inner.grid().len();
        if len != n {
            return Err(Error::Dimension { expected: n, found: len }.into());
        }
        let re = slice(re_in, len, "re_in")?;
        let im = if im_in.is_null() { None } else { Some(slice(im_in, len, "im_in")?) };
        let f = GridFunction::new((0..len).map(|i| Complex64::new(re[i], im.map_or(0.0, |v| v[i]))).collect());
        let g = op.inner.apply(&f)?;
        let ro = slice_mut(re_out, len, "re_out")?;
        let io = slice_mut(im_out, len, "im_out")?;
        for (i, v) in g.values.iter().enumerate() {
            ro[i] = v.re;
            io[i] = v.im;
        }
        Ok(())
    })
}

/// `a b` as a new operator.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_operator_compose(a: *const LcOperator, b: *const LcOperator, out: *mut *mut LcOperator) -> LcStatus {
    guard(|| {
        let c = handle(a, "a")?.inner.compose(&handle(b, "b")?.inner)?;
        store(out, LcOperator { inner: c })
    })
}

/// Grid adjoint as a new operator.
///
/// # Safety
/// `op` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_operator_adjoint(op: *const LcOperator, out: *mut *mut LcOperator) -> LcStatus {
    guard(|| {
        let a = handle(op, "operator")?.inner.adjoint();
        store(out, LcOperator { inner: a })
    })
}

/// Largest entry of `|A - A^*|`.
///
/// # Safety
/// `op` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_operator_hermitian_defect(op: *const LcOperator, out: *mut f64) -> LcStatus {
    guard(|| {
        let d = handle(op, "operator")?.inner.hermitian_defect();
        *out.as_mut().ok_or(Failure::Null("out"))? = d;
        Ok(())
    })
}

/// Order estimate from plane waves `k e_1` for the `n` frequencies in `ks`.
///
/// # Safety
/// `ks` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_operator_estimate_order(op: *const LcOperator, ks: *const i64, n: usize, out: *mut f64) -> LcStatus {
    guard(|| {
        let op = handle(op, "operator")?;
        let freqs = axis_frequencies(op.inner.grid().dim(), slice(ks, n, "ks")?);
        let v = estimate_order(&op.inner, &freqs)?;
        *out.as_mut().ok_or(Failure::Null("out"))? = v;
        Ok(())
    })
}

/// Lowest `count` eigenvalues of a Hermitian operator, ascending; `written`
/// receives how many were stored.
///
/// # Safety
/// `values` must be writable for `count` doubles; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_operator_spectrum(op: *const LcOperator, count: usize, values: *mut f64, written: *mut usize) -> LcStatus {
    guard(|| {
        let ev = spectra::spectrum(&handle(op, "operator")?.inner, count)?;
        let dst = slice_mut(values, count, "values")?;
        dst[..ev.len()].copy_from_slice(&ev);
        *written.as_mut().ok_or(Failure::Null("written"))? = ev.len();
        Ok(())
    })
}

/// # Safety
/// `op` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lc_operator_free(op: *mut LcOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Foliation generated by `n_generators` fields with `dim` components each,
/// stored row by row in `components`. With NULL bounds the domain is the
/// torus, otherwise the box `[lower, upper]`.
///
/// # Safety
/// `components` must hold `n_generators * dim` strings; bounds must be NULL
/// or hold `dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_foliation_parse(
    dim: usize,
    lower: *const f64,
    upper: *const f64,
    components: *const *const c_char,
    n_generators: usize,
    out: *mut *mut LcFoliation,
) -> LcStatus {
    guard(|| {
        let domain = if lower.is_null() && upper.is_null() {
            Domain::Torus { dim }
        } else {
            Domain::Box {
                lower: slice(lower, dim, "lower")?.to_vec(),
                upper: slice(upper, dim, "upper")?.to_vec(),
            }
        };
        let all = strings(components, n_generators * dim, "components")?;
        let gens: Vec<Vec<&str>> = all.chunks(dim.max(1)).map(<[&str]>::to_vec).collect();
        store(
            out,
            LcFoliation {
                inner: FoliationModule::parse(domain, &gens)?,
            },
        )
    })
}

/// `dim F_x` with degree cap `cap`.
///
/// # Safety
/// `x` must hold the foliation's dimension of doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_foliation_fiber_dimension(f: *const LcFoliation, x: *const f64, cap: u32, out: *mut usize) -> LcStatus {
    guard(|| {
        let f = handle(f, "foliation")?;
        let d = f.inner.fiber_dimension(slice(x, f.inner.dim(), "x")?, cap)?;
        *out.as_mut().ok_or(Failure::Null("out"))? = d;
        Ok(())
    })
}

/// Dimension of the leaf through `x`.
///
/// # Safety
/// `x` must hold the foliation's dimension of doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_foliation_leaf_dimension(f: *const LcFoliation, x: *const f64, out: *mut usize) -> LcStatus {
    guard(|| {
        let f = handle(f, "foliation")?;
        let d = f.inner.leaf_tangent_dim(slice(x, f.inner.dim(), "x")?)?;
        *out.as_mut().ok_or(Failure::Null("out"))? = d;
        Ok(())
    })
}

/// `sum_k X_k^* X_k` on a grid; `cutoff` may be NULL on a torus.
///
/// # Safety
/// Handles must be live; `cutoff` must be NULL or NUL-terminated; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn lc_foliation_laplacian(
    f: *const LcFoliation,
    grid: *const LcGrid,
    cutoff: *const c_char,
    out: *mut *mut LcOperator,
) -> LcStatus {
    guard(|| {
        let f = handle(f, "foliation")?;
        let g = handle(grid, "grid")?;
        let chi = if cutoff.is_null() {
            None
        } else {
            Some(Expr::parse(text(cutoff, "cutoff")?)?)
        };
        let lap = calculus::laplacian(&f.inner, &g.inner, chi.as_ref())?;
        store(out, LcOperator { inner: lap.element.op })
    })
}

/// # Safety
/// `f` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lc_foliation_free(f: *mut LcFoliation) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Runs a bundled scenario. `passed` receives the overall verdict and
/// `report`, when not NULL, a JSON report to release with `lc_string_free`.
///
/// # Safety
/// `name` must be NUL-terminated; `passed` must be writable; `report` must
/// be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn lc_run_bundled(name: *const c_char, passed: *mut bool, report: *mut *mut c_char) -> LcStatus {
    guard(|| {
        let config = scenario::bundled(text(name, "name")?)?;
        let r = scenario::run(&config)?;
        *passed.as_mut().ok_or(Failure::Null("passed"))? = r.passed();
        if !report.is_null() {
            let json = CString::new(r.to_json()).map_err(|_| Failure::Utf8("report"))?;
            *report = json.into_raw();
        }
        Ok(())
    })
}
