//! C ABI for `pdomd`.
//!
//! Every fallible call returns a [`PdStatus`]; on failure a human-readable message is
//! kept per thread and can be fetched with [`pd_last_error_message`]. Objects cross the
//! boundary as opaque handles that the caller releases with the matching `*_free`.
//! Arrays are passed as pointer plus length; matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pdomd::cli::{build_problem, parse_config_str, BuiltProblem};
use pdomd::problems::build_synthetic_problem;
use pdomd::telemetry::{export_record, ExportFormat};
use pdomd::{AlgorithmParams, DecisionSet, Error, Geometry, ObservationBatch, RunRecord, Solver, Variant};

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    /// Calls made out of order, e.g. two decisions without an observation between them.
    Protocol = 5,
    Unsupported = 6,
    /// Configuration rejected.
    Config = 7,
    /// Solver, oracle or I/O failure.
    Runtime = 8,
    /// A Rust panic was caught at the boundary.
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdGeometry {
    Euclidean = 0,
    NegativeEntropy = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdVariant {
    General = 0,
    Simplex = 1,
}

/// Step-size schedule.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdParams {
    pub v: f64,
    pub alpha: f64,
    pub theta: f64,
    pub horizon: usize,
    pub drift_window: usize,
}

/// Decision set handle.
pub struct PdDecisionSet(DecisionSet);

/// Online solver handle.
pub struct PdSolver(Solver);

/// Built-in problem handle.
pub struct PdProblem(BuiltProblem);

/// Run record handle.
pub struct PdRecord(RunRecord);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Message of the last failed call on this thread, or null if the last call succeeded.
///
/// The pointer stays valid until the next `pd_*` call on the same thread.
#[no_mangle]
pub extern "C" fn pd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

fn status_of(err: &Error) -> PdStatus {
    match err {
        Error::DimensionMismatch { .. } => PdStatus::DimensionMismatch,
        Error::NonFinite { .. } => PdStatus::NonFinite,
        Error::NonPositive { .. } | Error::InvalidParameter(_) => PdStatus::InvalidArgument,
        Error::Protocol(_) => PdStatus::Protocol,
        Error::Unsupported(_) => PdStatus::Unsupported,
        Error::Config { .. } => PdStatus::Config,
        _ => PdStatus::Runtime,
    }
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// Runs `body`, recording any failure (including a panic) as the thread's last error.
fn guard<F>(body: F) -> PdStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => PdStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_last_error(format!("`{name}` is null"));
            PdStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_last_error(msg);
            PdStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("panic inside pdomd".into());
            PdStatus::Panic
        }
    }
}

/// Handle-returning variant of [`guard`]; null on failure.
fn guard_handle<T, F>(body: F) -> *mut T
where
    F: FnOnce() -> Result<T, Failure>,
{
    let mut out = None;
    let status = guard(|| {
        out = Some(body()?);
        Ok(())
    });
    match (status, out) {
        (PdStatus::Ok, Some(v)) => Box::into_raw(Box::new(v)),
        _ => ptr::null_mut(),
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize, name: &'static str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize, name: &'static str) -> Result<&'a mut [f64], Failure> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn handle<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn handle_mut<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

fn copy_out(src: &[f64], dst: &mut [f64]) -> Result<(), Failure> {
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch { expected: src.len(), found: dst.len() }.into());
    }
    dst.copy_from_slice(src);
    Ok(())
}

fn rows(flat: &[f64], count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count).map(|i| flat[i * dim..(i + 1) * dim].to_vec()).collect()
}

impl From<PdGeometry> for Geometry {
    fn from(g: PdGeometry) -> Self {
        match g {
            PdGeometry::Euclidean => Geometry::Euclidean,
            PdGeometry::NegativeEntropy => Geometry::NegativeEntropy,
        }
    }
}

impl From<PdVariant> for Variant {
    fn from(v: PdVariant) -> Self {
        match v {
            PdVariant::General => Variant::General,
            PdVariant::Simplex => Variant::Simplex,
        }
    }
}

impl From<&AlgorithmParams> for PdParams {
    fn from(p: &AlgorithmParams) -> Self {
        Self { v: p.v, alpha: p.alpha, theta: p.theta, horizon: p.horizon, drift_window: p.drift_window }
    }
}

impl From<&PdParams> for AlgorithmParams {
    fn from(p: &PdParams) -> Self {
        Self { v: p.v, alpha: p.alpha, theta: p.theta, horizon: p.horizon, drift_window: p.drift_window }
    }
}

/// Default schedule for horizon `horizon`.
///
/// # Safety
/// `out` must point to writable memory for one [`PdParams`].
#[no_mangle]
pub unsafe extern "C" fn pd_parameter_schedule(horizon: usize, variant: PdVariant, out: *mut PdParams) -> PdStatus {
    guard(|| {
        let out = handle_mut(out, "out")?;
        *out = PdParams::from(&pdomd::parameter_schedule(horizon, variant.into())?);
        Ok(())
    })
}

/// Bregman divergence `D(x, y)` of `n`-vectors.
///
/// # Safety
/// `x` and `y` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pd_bregman_divergence(
    geometry: PdGeometry,
    x: *const f64,
    y: *const f64,
    n: usize,
    out: *mut f64,
) -> PdStatus {
    guard(|| {
        let x = slice(x, n, "x")?;
        let y = slice(y, n, "y")?;
        let out = handle_mut(out, "out")?;
        *out = Geometry::from(geometry).divergence(x, y)?;
        Ok(())
    })
}

/// Probability simplex of dimension `dim`.
#[no_mangle]
pub extern "C" fn pd_set_simplex(dim: usize) -> *mut PdDecisionSet {
    guard_handle(|| Ok(PdDecisionSet(DecisionSet::simplex(dim)?)))
}

/// Box `[lower, upper]` of dimension `dim`.
///
/// # Safety
/// `lower` and `upper` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn pd_set_box(lower: *const f64, upper: *const f64, dim: usize) -> *mut PdDecisionSet {
    guard_handle(|| {
        let lower = slice(lower, dim, "lower")?;
        let upper = slice(upper, dim, "upper")?;
        Ok(PdDecisionSet(DecisionSet::new_box(lower.to_vec(), upper.to_vec())?))
    })
}

/// # Safety
/// `set` must come from `pd_set_*` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pd_set_free(set: *mut PdDecisionSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// `argmin_{μ∈set} ⟨p, μ⟩ + αD(μ, y)`, written to `out`.
///
/// # Safety
/// `y`, `p` and `out` must hold `n` doubles; `set` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pd_mirror_step(
    geometry: PdGeometry,
    set: *const PdDecisionSet,
    y: *const f64,
    p: *const f64,
    n: usize,
    alpha: f64,
    out: *mut f64,
) -> PdStatus {
    guard(|| {
        let set = handle(set, "set")?;
        let y = slice(y, n, "y")?;
        let p = slice(p, n, "p")?;
        let out = slice_mut(out, n, "out")?;
        let mu = pdomd::geometry::mirror_step(geometry.into(), &set.0, y, p, alpha)?;
        copy_out(&mu, out)
    })
}

/// Solver over a copy of `set` with `num_ineq` inequality and `num_eq` equality
/// constraints; `targets` holds the `num_eq` right-hand sides.
///
/// # Safety
/// `set` and `params` must be valid; `targets` must hold `num_eq` doubles.
#[no_mangle]
pub unsafe extern "C" fn pd_solver_new(
    geometry: PdGeometry,
    set: *const PdDecisionSet,
    num_ineq: usize,
    targets: *const f64,
    num_eq: usize,
    params: *const PdParams,
    variant: PdVariant,
) -> *mut PdSolver {
    guard_handle(|| {
        let set = handle(set, "set")?;
        let targets = slice(targets, num_eq, "targets")?;
        let params = handle(params, "params")?;
        let solver = Solver::new(
            geometry.into(),
            set.0.clone(),
            num_ineq,
            targets.to_vec(),
            params.into(),
            variant.into(),
        )?;
        Ok(PdSolver(solver))
    })
}

/// # Safety
/// `solver` must come from [`pd_solver_new`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pd_solver_free(solver: *mut PdSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// Index of the slot the next decision belongs to.
///
/// # Safety
/// `solver` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn pd_solver_slot(solver: *const PdSolver) -> usize {
    solver.as_ref().map_or(0, |s| s.0.slot())
}

/// Chooses the decision for the current slot and updates the multipliers.
///
/// `drift` may be null.
///
/// # Safety
/// `decision` must hold `n` doubles, `n` equal to the set dimension.
#[no_mangle]
pub unsafe extern "C" fn pd_solver_decide(
    solver: *mut PdSolver,
    decision: *mut f64,
    n: usize,
    drift: *mut f64,
) -> PdStatus {
    guard(|| {
        let solver = handle_mut(solver, "solver")?;
        let out = slice_mut(decision, n, "decision")?;
        if n != solver.0.decision_set().dim() {
            return Err(Error::DimensionMismatch { expected: solver.0.decision_set().dim(), found: n }.into());
        }
        let outcome = solver.0.decide()?;
        copy_out(&outcome.decision, out)?;
        if let Some(d) = drift.as_mut() {
            *d = outcome.drift;
        }
        Ok(())
    })
}

/// Feeds the current slot's functions evaluated at the decided point.
///
/// `ineq_grads` is `num_ineq × n` and `eq_vectors` is `num_eq × n`, both row-major.
///
/// # Safety
/// Every pointer must hold the stated number of doubles.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn pd_solver_observe(
    solver: *mut PdSolver,
    objective_value: f64,
    objective_grad: *const f64,
    n: usize,
    ineq_values: *const f64,
    ineq_grads: *const f64,
    num_ineq: usize,
    eq_vectors: *const f64,
    num_eq: usize,
) -> PdStatus {
    guard(|| {
        let solver = handle_mut(solver, "solver")?;
        let grad = slice(objective_grad, n, "objective_grad")?;
        let values = slice(ineq_values, num_ineq, "ineq_values")?;
        let ineq_flat = slice(ineq_grads, num_ineq * n, "ineq_grads")?;
        let eq_flat = slice(eq_vectors, num_eq * n, "eq_vectors")?;
        let batch = ObservationBatch {
            slot: solver.0.slot(),
            objective_value,
            objective_grad: grad.to_vec(),
            ineq_values: values.to_vec(),
            ineq_grads: rows(ineq_flat, num_ineq, n),
            eq_vectors: rows(eq_flat, num_eq, n),
        };
        solver.0.observe(batch)?;
        Ok(())
    })
}

/// Copies the current multipliers `Q` (length `num_ineq`) and `H` (length `num_eq`).
///
/// # Safety
/// `q` and `h` must hold the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn pd_solver_duals(
    solver: *const PdSolver,
    q: *mut f64,
    num_ineq: usize,
    h: *mut f64,
    num_eq: usize,
) -> PdStatus {
    guard(|| {
        let solver = handle(solver, "solver")?;
        let duals = solver.0.duals();
        copy_out(&duals.q, slice_mut(q, num_ineq, "q")?)?;
        copy_out(&duals.h, slice_mut(h, num_eq, "h")?)
    })
}

/// Synthetic linear problem on the `d`-simplex.
#[no_mangle]
pub extern "C" fn pd_problem_synthetic(d: usize, num_ineq: usize, num_eq: usize, seed: u64) -> *mut PdProblem {
    guard_handle(|| Ok(PdProblem(BuiltProblem::Synthetic(build_synthetic_problem(d, num_ineq, num_eq, seed)?))))
}

/// Problem described by a JSON experiment configuration, built for `horizon` slots.
///
/// # Safety
/// `config_json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pd_problem_from_config(config_json: *const c_char, horizon: usize) -> *mut PdProblem {
    guard_handle(|| {
        if config_json.is_null() {
            return Err(Failure::Null("config_json"));
        }
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|e| Failure::Invalid(format!("config is not UTF-8: {e}")))?;
        let config = parse_config_str(text)?;
        Ok(PdProblem(build_problem(&config, horizon)?))
    })
}

/// # Safety
/// `problem` must come from `pd_problem_*` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pd_problem_free(problem: *mut PdProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Decision dimension of the problem (0 for null).
///
/// # Safety
/// `problem` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pd_problem_dim(problem: *const PdProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.0.as_dyn().dim())
}

/// Runs the solver on `problem` for `horizon` slots; null on failure.
///
/// # Safety
/// `problem` and `params` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pd_run(
    problem: *const PdProblem,
    horizon: usize,
    params: *const PdParams,
    variant: PdVariant,
    geometry: PdGeometry,
    seed: u64,
) -> *mut PdRecord {
    guard_handle(|| {
        let problem = handle(problem, "problem")?;
        let params = AlgorithmParams::from(handle(params, "params")?);
        let record = pdomd::run(problem.0.as_dyn(), horizon, &params, variant.into(), geometry.into(), seed)?;
        Ok(PdRecord(record))
    })
}

/// # Safety
/// `record` must come from [`pd_run`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pd_record_free(record: *mut PdRecord) {
    if !record.is_null() {
        drop(Box::from_raw(record));
    }
}

/// Number of slots in the record (0 for null).
///
/// # Safety
/// `record` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pd_record_len(record: *const PdRecord) -> usize {
    record.as_ref().map_or(0, |r| r.0.len())
}

/// Decision of slot `t` and its post-update dual norms; `q_norm` and `h_norm` may be null.
///
/// # Safety
/// `decision` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn pd_record_slot(
    record: *const PdRecord,
    t: usize,
    decision: *mut f64,
    n: usize,
    q_norm: *mut f64,
    h_norm: *mut f64,
) -> PdStatus {
    guard(|| {
        let record = handle(record, "record")?;
        let slot = record
            .0
            .slots
            .get(t)
            .ok_or_else(|| Failure::Invalid(format!("slot {t} is out of range (record has {})", record.0.len())))?;
        copy_out(&slot.mu, slice_mut(decision, n, "decision")?)?;
        if let Some(q) = q_norm.as_mut() {
            *q = slot.q_norm;
        }
        if let Some(h) = h_norm.as_mut() {
            *h = slot.h_norm;
        }
        Ok(())
    })
}

/// Writes the record to `path`; the extension (`.csv` or `.json`) picks the format.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pd_record_export(record: *const PdRecord, path: *const c_char) -> PdStatus {
    guard(|| {
        let record = handle(record, "record")?;
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|e| Failure::Invalid(format!("path is not UTF-8: {e}")))?;
        let format = ExportFormat::from_path(std::path::Path::new(path))
            .ok_or_else(|| Failure::Invalid(format!("{path}: expected a .csv or .json extension")))?;
        export_record(&record.0, format, path)?;
        Ok(())
    })
}
