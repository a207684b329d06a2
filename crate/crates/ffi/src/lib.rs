//! C interface to `inforelax`.
//!
//! Every fallible function returns an [`InfrStatus`]; on failure the message
//! is kept per thread and read back with [`infr_last_error`]. Models and
//! design results are opaque handles owned by the caller and released with
//! the matching `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use inforelax::infomatrix::{build_quadratic, InformationWeights};
use inforelax::mri::{self, AcquisitionSettings, DesignSpec, MriParameters, Norm};
use inforelax::relax::{self, DesignOptions, DesignResult, QuadraticProgram};
use inforelax::sdp::SolverOptions;
use inforelax::ssmodel::{fisher_information, ModelDocument, ParameterizedModel};
use inforelax::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidModel = 3,
    SolverFailed = 4,
    Infeasible = 5,
    ExtractionFailed = 6,
    Internal = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfrNorm {
    L2 = 0,
    L1 = 1,
}

/// Solver and constraint settings for [`infr_design`] and [`infr_certify`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct InfrDesignConfig {
    pub norm: InfrNorm,
    pub rate_bound: f64,
    /// `||u||_2` bound for `L2`, `Σ u_t` bound for `L1`.
    pub budget: f64,
    pub rel_gap_tol: f64,
    pub max_iters: u32,
    pub threads: u32,
}

/// Opaque model handle.
pub struct InfrModel {
    model: ParameterizedModel,
}

/// Opaque design result handle.
pub struct InfrDesign {
    result: DesignResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> InfrStatus {
    match e {
        Error::Model(_) => InfrStatus::InvalidModel,
        Error::Solver(_) | Error::Numeric(_) => InfrStatus::SolverFailed,
        Error::Infeasible(_) => InfrStatus::Infeasible,
        Error::Extraction { .. } => InfrStatus::ExtractionFailed,
        Error::Internal(_) => InfrStatus::Internal,
        _ => InfrStatus::InvalidArgument,
    }
}

struct Fail(InfrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(InfrStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> InfrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            InfrStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            InfrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(InfrStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn model_arg<'a>(m: *const InfrModel) -> Result<&'a ParameterizedModel, Fail> {
    m.as_ref().map(|h| &h.model).ok_or_else(|| null("model"))
}

unsafe fn design_arg<'a>(d: *const InfrDesign) -> Result<&'a DesignResult, Fail> {
    d.as_ref().map(|h| &h.result).ok_or_else(|| null("design"))
}

fn put_model(out: *mut *mut InfrModel, model: ParameterizedModel) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    unsafe { *out = Box::into_raw(Box::new(InfrModel { model })) };
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full message length in bytes, or 0
/// when the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn infr_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            0
        }
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Defaults: l2 norm, rate 1, budget 4, tolerance 1e-8, 100 iterations, 1 thread.
#[no_mangle]
pub extern "C" fn infr_design_config_default() -> InfrDesignConfig {
    InfrDesignConfig {
        norm: InfrNorm::L2,
        rate_bound: 1.0,
        budget: 4.0,
        rel_gap_tol: 1e-8,
        max_iters: 100,
        threads: 1,
    }
}

/// Parses a model document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn infr_model_from_json(json: *const c_char, out: *mut *mut InfrModel) -> InfrStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let model = ModelDocument::from_json(text)?.into_model()?;
        put_model(out, model)
    })
}

/// The injection model at default parameters. `theta` is a comma separated
/// list of uncertain parameters, or null for `kPL` alone.
///
/// # Safety
/// `theta` must be null or NUL-terminated, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn infr_model_mri(theta: *const c_char, out: *mut *mut InfrModel) -> InfrStatus {
    guard(|| {
        let names: Vec<String> = if theta.is_null() {
            DesignSpec::new(Norm::L2).theta_names
        } else {
            str_arg(theta, "theta")?
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        };
        let model = mri::build_combined_model(&MriParameters::default(), &AcquisitionSettings::default(), &names)?;
        put_model(out, model)
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn infr_model_free(model: *mut InfrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Length of the stacked input vector, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn infr_model_input_len(model: *const InfrModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.input_len())
}

/// Number of parameters, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn infr_model_num_params(model: *const InfrModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.p())
}

/// Writes the p×p information matrix for input `u` row-major into `out`,
/// which must hold `out_len >= p*p` values.
///
/// # Safety
/// Pointers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn infr_fisher_information(
    model: *const InfrModel,
    u: *const f64,
    u_len: usize,
    out: *mut f64,
    out_len: usize,
) -> InfrStatus {
    guard(|| {
        let m = model_arg(model)?;
        let u = slice_arg(u, u_len, "u")?;
        let p = m.p();
        if out.is_null() {
            return Err(null("out"));
        }
        if out_len < p * p {
            return Err(Fail(InfrStatus::InvalidArgument, format!("out needs {} values, got {out_len}", p * p)));
        }
        let f = fisher_information(m, u)?;
        for i in 0..p {
            for j in 0..p {
                *out.add(i * p + j) = f[(i, j)];
            }
        }
        Ok(())
    })
}

fn program(m: &ParameterizedModel, cfg: &InfrDesignConfig) -> Result<(QuadraticProgram, DesignOptions), Fail> {
    let mut spec = DesignSpec::new(match cfg.norm {
        InfrNorm::L2 => Norm::L2,
        InfrNorm::L1 => Norm::L1,
    });
    spec.rate_bound = cfg.rate_bound;
    spec.l2_budget = cfg.budget;
    spec.l1_budget = cfg.budget;
    spec.validate()?;
    let obj = build_quadratic(m, &InformationWeights::identity(m.p()))?;
    let qp = mri::budget_program(obj, &spec)?;
    let solver = SolverOptions {
        rel_gap_tol: cfg.rel_gap_tol,
        feas_tol: cfg.rel_gap_tol,
        max_iters: cfg.max_iters as usize,
        threads: cfg.threads as usize,
        ..Default::default()
    };
    solver.validate()?;
    Ok((
        qp,
        DesignOptions {
            solver,
            ..Default::default()
        },
    ))
}

/// Maximizes the information trace under the rate bound and budget.
///
/// # Safety
/// `model` must be a live handle, `cfg` and `out` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn infr_design(
    model: *const InfrModel,
    cfg: *const InfrDesignConfig,
    out: *mut *mut InfrDesign,
) -> InfrStatus {
    guard(|| {
        let m = model_arg(model)?;
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (qp, opts) = program(m, cfg)?;
        let result = relax::design(&qp, &opts)?;
        *out = Box::into_raw(Box::new(InfrDesign { result }));
        Ok(())
    })
}

/// # Safety
/// `design` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn infr_design_free(design: *mut InfrDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

/// Upper bound on the optimum, NaN for a null handle.
///
/// # Safety
/// `design` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn infr_design_value(design: *const InfrDesign) -> f64 {
    design.as_ref().map_or(f64::NAN, |d| d.result.relaxation_value)
}

/// 1 when a global maximizer was recovered.
///
/// # Safety
/// `design` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn infr_design_exact(design: *const InfrDesign) -> i32 {
    design.as_ref().map_or(0, |d| d.result.exact as i32)
}

/// Candidate value over the bound, NaN when there is none.
///
/// # Safety
/// `design` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn infr_design_ratio(design: *const InfrDesign) -> f64 {
    design
        .as_ref()
        .and_then(|d| d.result.ratio)
        .unwrap_or(f64::NAN)
}

/// Copies the recovered input into `out`. Fails with `InvalidArgument` when
/// the relaxation was not exact.
///
/// # Safety
/// `out` must hold `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn infr_design_input(design: *const InfrDesign, out: *mut f64, out_len: usize) -> InfrStatus {
    guard(|| {
        let d = design_arg(design)?;
        let u = d
            .extracted_u
            .as_ref()
            .ok_or_else(|| Fail(InfrStatus::InvalidArgument, "no input was recovered".into()))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if out_len < u.len() {
            return Err(Fail(InfrStatus::InvalidArgument, format!("out needs {} values, got {out_len}", u.len())));
        }
        ptr::copy_nonoverlapping(u.as_ptr(), out, u.len());
        Ok(())
    })
}

/// Bounds the optimum by the relaxation and evaluates `candidate`, writing
/// `value <= optimum <= bound`. An infeasible candidate gives `Infeasible`.
///
/// # Safety
/// Pointers must be valid; `candidate` holds `len` values.
#[no_mangle]
pub unsafe extern "C" fn infr_certify(
    model: *const InfrModel,
    cfg: *const InfrDesignConfig,
    candidate: *const f64,
    len: usize,
    value: *mut f64,
    bound: *mut f64,
) -> InfrStatus {
    guard(|| {
        let m = model_arg(model)?;
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let u = slice_arg(candidate, len, "candidate")?;
        if value.is_null() || bound.is_null() {
            return Err(null("value/bound"));
        }
        let (qp, opts) = program(m, cfg)?;
        let viol = qp.violations(u, relax::CERTIFY_TOL)?;
        if !viol.is_empty() {
            return Err(Error::Infeasible(viol).into());
        }
        let upper = relax::design(&qp, &opts)?.relaxation_value;
        let cert = relax::certify(&qp, u, upper)?;
        *value = cert.candidate_value.unwrap_or(f64::NAN);
        *bound = upper;
        Ok(())
    })
}
