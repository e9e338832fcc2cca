//! C ABI over `synthdesign`.
//!
//! Handles (`SdPanel`, `SdDesign`) are opaque and owned by the caller once
//! returned; release them with the matching `*_free` function. Every
//! fallible call returns an `SdStatus`; on failure the message is
//! available from `sd_last_error_message` on the same thread until the
//! next failing call. Strings returned through `char **` out-parameters
//! are freed with `sd_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use synthdesign::estimators::{self, Method};
use synthdesign::inference::{self, Refit, Scheme, TestOptions};
use synthdesign::objectives::{self, ClosedFormInputs};
use synthdesign::{
    mip, selector, Design, DesignProblem, Error, Panel, SearchMode, Variant, WeightConstraints,
};

/// Status codes; the nonzero values 2, 3 and 4 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdStatus {
    Ok = 0,
    /// Invalid arguments or problem settings.
    Usage = 2,
    /// Malformed or inconsistent data.
    Data = 3,
    /// A solver failed to certify its solution.
    Solver = 4,
    /// A required pointer was null or a string was not UTF-8.
    InvalidPointer = 5,
    /// Internal panic caught at the boundary.
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdVariant {
    PerUnit = 0,
    TwoWay = 1,
    OneWay = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdMethod {
    PerUnit = 0,
    TwoWay = 1,
    OneWay = 2,
    SyntheticControlRandom = 3,
    DiffInMeansRandom = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdSearchMode {
    Auto = 0,
    Exact = 1,
    Local = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdScheme {
    Iid = 0,
    MovingBlock = 1,
}

/// Settings for `sd_select_design` and `sd_export_mps`. Start from
/// `sd_design_options_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SdDesignOptions {
    pub variant: SdVariant,
    pub k: usize,
    /// Ridge penalty, > 0.
    pub lambda: f64,
    pub nonnegative: bool,
    pub mode: SdSearchMode,
    /// Largest subset count exact mode will enumerate.
    pub enum_limit: u64,
    pub restarts: usize,
    pub seed: u64,
}

/// Result of `sd_permutation_test`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SdTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub critical_value: f64,
    pub n_draws: usize,
    pub reject: bool,
}

pub struct SdPanel {
    inner: Panel,
}

pub struct SdDesign {
    inner: Design,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SdStatus {
    match e.exit_code() {
        2 => SdStatus::Usage,
        3 => SdStatus::Data,
        _ => SdStatus::Solver,
    }
}

/// Boundary failure: a status plus message.
struct Fail(SdStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SdStatus::InvalidPointer, format!("{what} is null"))
}

/// Runs `f`, turning errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SdStatus::Ok,
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
            set_error(format!("internal panic: {msg}"));
            SdStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SdStatus::InvalidPointer, format!("{what} is not UTF-8")))
}

/// Output pointer checked before any work is done.
struct Out<T>(*mut T);

impl<T> Out<T> {
    unsafe fn set(self, value: T) -> Result<(), Fail> {
        self.0.write(value);
        Ok(())
    }
}

fn slot<T>(p: *mut T) -> Result<Out<T>, Fail> {
    if p.is_null() {
        Err(null("out"))
    } else {
        Ok(Out(p))
    }
}

unsafe fn put_string(out: Out<*mut c_char>, s: String) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|_| Fail(SdStatus::Data, "string contains NUL".into()))?;
    out.set(c.into_raw())
}

impl From<SdVariant> for Variant {
    fn from(v: SdVariant) -> Self {
        match v {
            SdVariant::PerUnit => Variant::PerUnit,
            SdVariant::TwoWay => Variant::TwoWay,
            SdVariant::OneWay => Variant::OneWay,
        }
    }
}

impl From<SdMethod> for Method {
    fn from(m: SdMethod) -> Self {
        match m {
            SdMethod::PerUnit => Method::PerUnit,
            SdMethod::TwoWay => Method::TwoWay,
            SdMethod::OneWay => Method::OneWay,
            SdMethod::SyntheticControlRandom => Method::SyntheticControlRandom,
            SdMethod::DiffInMeansRandom => Method::DiffInMeansRandom,
        }
    }
}

fn problem(o: &SdDesignOptions) -> DesignProblem {
    let cons = if o.nonnegative {
        WeightConstraints::SIMPLEX
    } else {
        WeightConstraints::SIGNED
    };
    let mode = match o.mode {
        SdSearchMode::Auto => SearchMode::Auto,
        SdSearchMode::Exact => SearchMode::ExactEnum,
        SdSearchMode::Local => SearchMode::LocalSearch,
    };
    let mut p = DesignProblem::new(o.variant.into(), o.k, o.lambda)
        .with_constraints(cons)
        .with_mode(mode)
        .with_seed(o.seed);
    p.enum_limit = o.enum_limit as u128;
    p.restarts = o.restarts;
    p
}

/// Message for the most recent failure on this thread, or null. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a wide panel CSV (header of period labels, one row per unit).
///
/// # Safety
/// `csv` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_panel_from_csv(
    csv: *const c_char,
    t_pre: usize,
    out: *mut *mut SdPanel,
) -> SdStatus {
    guard(|| {
        let out = slot(out)?;
        let text = as_str(csv, "csv")?;
        let inner = synthdesign::load_panel(text, t_pre)?;
        out.set(Box::into_raw(Box::new(SdPanel { inner })))
    })
}

/// Builds a panel from row-major values (`n_units × n_periods`).
///
/// # Safety
/// `values` must point to `n_units * n_periods` doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sd_panel_from_values(
    values: *const f64,
    n_units: usize,
    n_periods: usize,
    t_pre: usize,
    out: *mut *mut SdPanel,
) -> SdStatus {
    guard(|| {
        let out = slot(out)?;
        if values.is_null() {
            return Err(null("values"));
        }
        let len = n_units
            .checked_mul(n_periods)
            .ok_or_else(|| Fail(SdStatus::Usage, "panel size overflows".into()))?;
        let data = std::slice::from_raw_parts(values, len);
        let m = nalgebra::DMatrix::from_row_slice(n_units, n_periods, data);
        let inner = Panel::from_matrix(m, t_pre)?;
        out.set(Box::into_raw(Box::new(SdPanel { inner })))
    })
}

/// # Safety
/// `panel` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn sd_panel_n_units(panel: *const SdPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.inner.n_units())
}

/// # Safety
/// `panel` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn sd_panel_n_periods(panel: *const SdPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.inner.n_periods())
}

/// # Safety
/// `panel` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sd_panel_free(panel: *mut SdPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// Defaults: two-way, K = 1, λ = 0.01, nonnegative weights, auto mode,
/// enumeration limit 200000, 20 restarts, seed 0.
#[no_mangle]
pub extern "C" fn sd_design_options_default() -> SdDesignOptions {
    SdDesignOptions {
        variant: SdVariant::TwoWay,
        k: 1,
        lambda: 0.01,
        nonnegative: true,
        mode: SdSearchMode::Auto,
        enum_limit: 200_000,
        restarts: 20,
        seed: 0,
    }
}

/// # Safety
/// `panel` and `options` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_select_design(
    panel: *const SdPanel,
    options: *const SdDesignOptions,
    out: *mut *mut SdDesign,
) -> SdStatus {
    guard(|| {
        let out = slot(out)?;
        let panel = as_ref(panel, "panel")?;
        let options = as_ref(options, "options")?;
        let inner = synthdesign::select_design(&panel.inner, &problem(options))?;
        out.set(Box::into_raw(Box::new(SdDesign { inner })))
    })
}

/// Number of treated units.
///
/// # Safety
/// `design` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sd_design_k(design: *const SdDesign) -> usize {
    design.as_ref().map_or(0, |d| d.inner.k())
}

/// Copies the treated unit indices (ascending, 0-based) into `out`,
/// which must hold at least `sd_design_k` entries.
///
/// # Safety
/// `out` must point to `len` writable entries.
#[no_mangle]
pub unsafe extern "C" fn sd_design_treated(
    design: *const SdDesign,
    out: *mut usize,
    len: usize,
) -> SdStatus {
    guard(|| {
        let d = &as_ref(design, "design")?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        if len < d.k() {
            return Err(Fail(
                SdStatus::Usage,
                format!("buffer holds {len} entries, need {}", d.k()),
            ));
        }
        std::slice::from_raw_parts_mut(out, d.k()).copy_from_slice(d.treated());
        Ok(())
    })
}

/// # Safety
/// `design` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_design_objective(design: *const SdDesign, out: *mut f64) -> SdStatus {
    guard(|| {
        let out = slot(out)?;
        let d = &as_ref(design, "design")?.inner;
        let j = d
            .objective
            .ok_or_else(|| Fail(SdStatus::Usage, "design has no objective".into()))?;
        out.set(j)
    })
}

/// Serializes the design (treated set, weights, objective) as JSON.
///
/// # Safety
/// `design` must be valid; free `*out` with `sd_string_free`.
#[no_mangle]
pub unsafe extern "C" fn sd_design_to_json(
    design: *const SdDesign,
    out: *mut *mut c_char,
) -> SdStatus {
    guard(|| {
        let out = slot(out)?;
        let d = &as_ref(design, "design")?.inner;
        put_string(out, d.to_json()?)
    })
}

/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_design_from_json(
    json: *const c_char,
    out: *mut *mut SdDesign,
) -> SdStatus {
    guard(|| {
        let out = slot(out)?;
        let inner = Design::from_json(as_str(json, "json")?)?;
        out.set(Box::into_raw(Box::new(SdDesign { inner })))
    })
}

/// # Safety
/// `design` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sd_design_free(design: *mut SdDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

fn estimate(
    panel: &Panel,
    design: &Design,
    method: Method,
) -> Result<estimators::EffectEstimate, Fail> {
    let fitted = match (&design.weights, method.variant()) {
        (_, None) => true,
        (Some(_), Some(v)) => design.variant == Some(v),
        (None, Some(_)) => false,
    };
    if fitted {
        return Ok(estimators::estimate(panel, design, method)?);
    }
    let lambda = design.lambda.ok_or_else(|| {
        Fail(
            SdStatus::Usage,
            "design has no penalty for refitting weights".into(),
        )
    })?;
    let cons = design.constraints.unwrap_or_default();
    Ok(estimators::fit_and_estimate(
        panel, design, method, lambda, &cons,
    )?)
}

/// ATET over the panel's post-cutoff periods. Weights are refitted when
/// the design carries none for `method`.
///
/// # Safety
/// Handles must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_estimate_atet(
    panel: *const SdPanel,
    design: *const SdDesign,
    method: SdMethod,
    out: *mut f64,
) -> SdStatus {
    guard(|| {
        let out = slot(out)?;
        let p = &as_ref(panel, "panel")?.inner;
        let d = &as_ref(design, "design")?.inner;
        out.set(estimate(p, d, method.into())?.atet)
    })
}

/// Permutation test of the sharp null for the design's treated set.
/// `refit_design` re-selects the treated set on every permuted sample.
///
/// # Safety
/// Handles must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sd_permutation_test(
    panel: *const SdPanel,
    design: *const SdDesign,
    method: SdMethod,
    scheme: SdScheme,
    n_draws: usize,
    alpha: f64,
    seed: u64,
    refit_design: bool,
    out: *mut SdTestResult,
) -> SdStatus {
    guard(|| {
        let out = slot(out)?;
        let p = &as_ref(panel, "panel")?.inner;
        let d = &as_ref(design, "design")?.inner;
        let opts = TestOptions {
            scheme: match scheme {
                SdScheme::Iid => Scheme::Iid,
                SdScheme::MovingBlock => Scheme::MovingBlock,
            },
            n_draws,
            alpha,
            seed,
            refit: if refit_design {
                Refit::Design
            } else {
                Refit::Weights
            },
        };
        let t = inference::permutation_test_with(p, d, method.into(), &opts)?;
        out.set(SdTestResult {
            statistic: t.observed_stat,
            p_value: t.p_value,
            critical_value: t.critical_value,
            n_draws: t.n_draws,
            reject: t.reject,
        })
    })
}

/// Writes the mixed-integer model for the options as free MPS text.
///
/// # Safety
/// `panel` and `options` must be valid; free `*out` with `sd_string_free`.
#[no_mangle]
pub unsafe extern "C" fn sd_export_mps(
    panel: *const SdPanel,
    options: *const SdDesignOptions,
    out: *mut *mut c_char,
) -> SdStatus {
    guard(|| {
        let out = slot(out)?;
        let p = &as_ref(panel, "panel")?.inner;
        let o = as_ref(options, "options")?;
        let (_, text) = mip::export_mip(p, &problem(o))?;
        put_string(out, text)
    })
}

/// Single-period closed-form objective of a treated set with free signs.
///
/// # Safety
/// `a` must hold `n` values and `treated` `k` indices.
#[no_mangle]
pub unsafe extern "C" fn sd_closed_form_objective(
    variant: SdVariant,
    a: *const f64,
    n: usize,
    treated: *const usize,
    k: usize,
    sigma2: f64,
    out: *mut f64,
) -> SdStatus {
    guard(|| {
        let out = slot(out)?;
        if a.is_null() || treated.is_null() {
            return Err(null("input"));
        }
        let a = std::slice::from_raw_parts(a, n).to_vec();
        let treated = std::slice::from_raw_parts(treated, k);
        let cf = ClosedFormInputs::new(a, sigma2, treated)?;
        out.set(objectives::closed_form(variant.into(), &cf))
    })
}

/// Number of treated sets of size `k` among `n` units, saturating at
/// `UINT64_MAX`.
#[no_mangle]
pub extern "C" fn sd_subset_count(n: usize, k: usize) -> u64 {
    u64::try_from(selector::binomial(n, k)).unwrap_or(u64::MAX)
}
