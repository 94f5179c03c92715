//! C ABI for the solver library: opaque handles, integer status codes, and a
//! thread-local error message. Every entry point catches Rust panics and
//! reports them as a status instead of unwinding across the boundary.
//!
//! Interior data crosses the boundary in canonical cell order with the three
//! magnetization components stored consecutively per cell, so a field on a
//! grid with N interior cells occupies exactly 3 N doubles.

// Marshalling loops couple a flat component buffer with a strided C buffer at
// one running index; explicit indexing reads better than zipped chains there.
#![allow(clippy::needless_range_loop)]

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use llg_core::dynamics::{ManufacturedCase, ModelConfig, ModelVariant, SpaceTimeFn};
use llg_core::grid::{GridSpec, VectorField};
use llg_core::helmholtz::HelmholtzSolver;
use llg_core::integrator::{integrate, Integrator};
use llg_core::tableau;
use llg_core::verification::errors_vs_exact;
use llg_core::Error;

/// Result of every fallible call. Non-zero codes leave a description
/// retrievable with [`llg_last_error_message`].
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LlgStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Arguments were structurally valid but semantically rejected.
    InvalidArgument = 2,
    /// The computation itself failed (diverged run, failed solve).
    NumericalFailure = 3,
    /// A panic was caught at the boundary; state may be stale but memory is
    /// intact.
    Panic = 4,
}

/// Which right-hand side the integrator advances.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LlgModel {
    /// Full model: precession, damping, and the diffusion split.
    Full = 0,
    /// Damping-limit model with the averaged gradient term.
    DampingOnly = 1,
    /// Heat flow only; the explicit part is identically zero.
    PureDiffusion = 2,
}

/// Pointwise vector function of space and time supplied by the caller:
/// `f(pos, t, out, user_data)` writes three doubles to `out`. Callbacks run
/// on the thread that called [`llg_integrate`] and must not unwind.
pub type LlgSpaceTimeFn =
    Option<unsafe extern "C" fn(pos: *const f64, t: f64, out: *mut f64, user_data: *mut c_void)>;

/// Model selection and coefficients for [`llg_integrate`]. Null callbacks
/// mean the corresponding term is zero.
#[repr(C)]
pub struct LlgModelParams {
    pub model: LlgModel,
    /// Damping coefficient α ≥ 0.
    pub alpha: f64,
    /// Artificial diffusion coefficient β > 0.
    pub beta: f64,
    /// Exchange coefficient ε ≥ 0.
    pub epsilon: f64,
    /// Applied field f(x, t), or null for none.
    pub applied_field: LlgSpaceTimeFn,
    pub applied_field_data: *mut c_void,
    /// Forcing term g(x, t), or null for none.
    pub source: LlgSpaceTimeFn,
    pub source_data: *mut c_void,
}

/// Opaque magnetization field handle.
pub struct LlgField {
    inner: VectorField,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("error message had NUL").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn null_arg(name: &str) -> LlgStatus {
    set_error(format!("argument `{name}` must not be null"));
    LlgStatus::NullArgument
}

fn from_error(e: Error) -> LlgStatus {
    let status = match e {
        Error::Solver(_) | Error::Diverged { .. } => LlgStatus::NumericalFailure,
        _ => LlgStatus::InvalidArgument,
    };
    set_error(e.to_string());
    status
}

fn panicked() -> LlgStatus {
    set_error("internal panic caught at the C boundary".into());
    LlgStatus::Panic
}

/// Runs a fallible body with panic containment.
fn guarded(body: impl FnOnce() -> Result<(), LlgStatus>) -> LlgStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => LlgStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => panicked(),
    }
}

/// Library version as a static NUL-terminated string; never null, never
/// freed by the caller.
#[no_mangle]
pub extern "C" fn llg_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Copies the description of the most recent failure on this thread into
/// `buf` (NUL-terminated, truncated to `cap` bytes) and returns the full
/// message length excluding the NUL. Passing a null `buf` or zero `cap`
/// just queries the length.
///
/// # Safety
/// `buf` must be null or point to at least `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn llg_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let borrow = slot.borrow();
        let msg = match borrow.as_ref() {
            Some(m) => m.as_bytes(),
            None => b"",
        };
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates a zero field on the cell-centered unit-domain grid with `n` cells
/// per axis in `dim` dimensions (`dim` must be 1 or 3, `n` at least 2) and
/// stores the handle in `*out`.
///
/// # Safety
/// `out` must point to writable storage for one pointer. The returned handle
/// must be released with [`llg_field_destroy`].
#[no_mangle]
pub unsafe extern "C" fn llg_field_create(dim: u32, n: u32, out: *mut *mut LlgField) -> LlgStatus {
    if out.is_null() {
        return null_arg("out");
    }
    guarded(|| {
        let grid = GridSpec::new(dim as usize, n as usize).map_err(from_error)?;
        let handle = Box::new(LlgField {
            inner: VectorField::zeros(grid),
        });
        *out = Box::into_raw(handle);
        Ok(())
    })
}

/// Releases a field handle. A null handle is a no-op.
///
/// # Safety
/// `field` must be a handle from [`llg_field_create`] that has not been
/// destroyed already.
#[no_mangle]
pub unsafe extern "C" fn llg_field_destroy(field: *mut LlgField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Number of interior cells of the field's grid, or 0 for a null handle.
///
/// # Safety
/// `field` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn llg_field_cells(field: *const LlgField) -> usize {
    if field.is_null() {
        0
    } else {
        (*field).inner.grid().cells()
    }
}

/// Fills the interior with seeded uniform noise on [−1, 1) per component and
/// mirrors the ghost layers. The same seed always produces the same field.
///
/// # Safety
/// `field` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn llg_field_fill_random(field: *mut LlgField, seed: u64) -> LlgStatus {
    if field.is_null() {
        return null_arg("field");
    }
    guarded(|| {
        let f = &mut (*field).inner;
        *f = VectorField::random_uniform(f.grid(), seed);
        Ok(())
    })
}

/// Sets every interior cell to the vector `value` (three doubles) and
/// mirrors the ghost layers.
///
/// # Safety
/// `field` must be a live handle and `value` must point to three doubles.
#[no_mangle]
pub unsafe extern "C" fn llg_field_fill_constant(
    field: *mut LlgField,
    value: *const f64,
) -> LlgStatus {
    if field.is_null() {
        return null_arg("field");
    }
    if value.is_null() {
        return null_arg("value");
    }
    guarded(|| {
        let v = [*value, *value.add(1), *value.add(2)];
        let f = &mut (*field).inner;
        *f = VectorField::constant(f.grid(), v);
        Ok(())
    })
}

/// Copies the interior into `data` as consecutive (m₀, m₁, m₂) triples in
/// canonical cell order. `len` must be exactly 3 × cell count.
///
/// # Safety
/// `field` must be a live handle; `data` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn llg_field_copy_interior(
    field: *const LlgField,
    data: *mut f64,
    len: usize,
) -> LlgStatus {
    if field.is_null() {
        return null_arg("field");
    }
    if data.is_null() {
        return null_arg("data");
    }
    guarded(|| {
        let f = &(*field).inner;
        let cells = f.grid().cells();
        if len != 3 * cells {
            set_error(format!(
                "len {len} does not match 3 × {cells} interior values"
            ));
            return Err(LlgStatus::InvalidArgument);
        }
        for (rank, idx) in f.grid().interior_cells().into_iter().enumerate() {
            let v = f.vec_at(idx);
            for c in 0..3 {
                *data.add(3 * rank + c) = v[c];
            }
        }
        Ok(())
    })
}

/// Overwrites the interior from consecutive (m₀, m₁, m₂) triples in
/// canonical cell order and mirrors the ghost layers. `len` must be exactly
/// 3 × cell count and every value must be finite.
///
/// # Safety
/// `field` must be a live handle; `data` must point to `len` readable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn llg_field_set_interior(
    field: *mut LlgField,
    data: *const f64,
    len: usize,
) -> LlgStatus {
    if field.is_null() {
        return null_arg("field");
    }
    if data.is_null() {
        return null_arg("data");
    }
    guarded(|| {
        let f = &mut (*field).inner;
        let cells = f.grid().cells();
        if len != 3 * cells {
            set_error(format!(
                "len {len} does not match 3 × {cells} interior values"
            ));
            return Err(LlgStatus::InvalidArgument);
        }
        let values = std::slice::from_raw_parts(data, len);
        if values.iter().any(|v| !v.is_finite()) {
            set_error("field values must be finite".into());
            return Err(LlgStatus::InvalidArgument);
        }
        for (rank, idx) in f.grid().interior_cells().into_iter().enumerate() {
            for c in 0..3 {
                *f.at_mut(c, idx) = values[3 * rank + c];
            }
        }
        f.fill_ghosts();
        Ok(())
    })
}

/// Writes the discrete ℓ², ℓ∞, and H¹ norms of the field into any non-null
/// output pointers.
///
/// # Safety
/// `field` must be a live handle; each output must be null or point to one
/// writable double.
#[no_mangle]
pub unsafe extern "C" fn llg_field_norms(
    field: *const LlgField,
    l2: *mut f64,
    linf: *mut f64,
    h1: *mut f64,
) -> LlgStatus {
    if field.is_null() {
        return null_arg("field");
    }
    guarded(|| {
        let f = &(*field).inner;
        if !l2.is_null() {
            *l2 = f.l2_norm();
        }
        if !linf.is_null() {
            *linf = f.linf_norm();
        }
        if !h1.is_null() {
            *h1 = f.h1_norm();
        }
        Ok(())
    })
}

/// Solves the implicit stage system (I − σ Δ_h) u = rhs with homogeneous
/// Neumann boundaries, writing u into `out`. The two fields must share a
/// grid and σ must be nonnegative and finite.
///
/// # Safety
/// `rhs` and `out` must be distinct live handles.
#[no_mangle]
pub unsafe extern "C" fn llg_helmholtz_solve(
    rhs: *const LlgField,
    sigma: f64,
    out: *mut LlgField,
) -> LlgStatus {
    if rhs.is_null() {
        return null_arg("rhs");
    }
    if out.is_null() {
        return null_arg("out");
    }
    guarded(|| {
        let r = &(*rhs).inner;
        let o = &mut (*out).inner;
        if r.grid() != o.grid() {
            set_error("rhs and out live on different grids".into());
            return Err(LlgStatus::InvalidArgument);
        }
        let solver = HelmholtzSolver::new(r.grid());
        solver.solve(sigma, r, o).map_err(from_error)
    })
}

/// User callback plus its context pointer. The pointer is forwarded verbatim
/// on the calling thread only, which is what makes the Send/Sync assertion
/// sound for the single-threaded integration loop.
struct Callback {
    f: unsafe extern "C" fn(*const f64, f64, *mut f64, *mut c_void),
    data: *mut c_void,
}

unsafe impl Send for Callback {}
unsafe impl Sync for Callback {}

fn wrap_callback(cb: LlgSpaceTimeFn, data: *mut c_void) -> Option<SpaceTimeFn> {
    cb.map(|f| {
        let call = Callback { f, data };
        let wrapped: SpaceTimeFn = Arc::new(move |pos: [f64; 3], t: f64| {
            // Borrow the whole struct so the closure captures it intact and
            // inherits its Send + Sync assertions instead of capturing the
            // raw pointer field on its own.
            let call = &call;
            let mut out = [0.0; 3];
            unsafe { (call.f)(pos.as_ptr(), t, out.as_mut_ptr(), call.data) };
            out
        });
        wrapped
    })
}

fn model_config(p: &LlgModelParams) -> ModelConfig {
    let variant = match p.model {
        LlgModel::Full => ModelVariant::FullLL,
        LlgModel::DampingOnly => ModelVariant::DampingOnly,
        LlgModel::PureDiffusion => ModelVariant::PureDiffusion,
    };
    let mut cfg = ModelConfig::new(variant);
    cfg.alpha = p.alpha;
    cfg.beta = p.beta;
    cfg.epsilon = p.epsilon;
    cfg.field = wrap_callback(p.applied_field, p.applied_field_data);
    cfg.source = wrap_callback(p.source, p.source_data);
    cfg
}

/// Advances `state` in place from `t0` to `t_final` with steps as close to
/// `dt` as an integer step count allows. Callbacks in `params` are invoked
/// on the calling thread only.
///
/// # Safety
/// `params` must point to a valid parameter struct, `state` must be a live
/// handle, and any non-null callback must be callable with the documented
/// signature for the duration of this call and must not unwind.
#[no_mangle]
pub unsafe extern "C" fn llg_integrate(
    params: *const LlgModelParams,
    state: *mut LlgField,
    t0: f64,
    t_final: f64,
    dt: f64,
) -> LlgStatus {
    if params.is_null() {
        return null_arg("params");
    }
    if state.is_null() {
        return null_arg("state");
    }
    guarded(|| {
        let cfg = model_config(&*params);
        let f = &mut (*state).inner;
        let mut intg = Integrator::new(f.grid(), cfg, tableau::reference()).map_err(from_error)?;
        let out = integrate(&mut intg, f, t0, t_final, dt, 0).map_err(from_error)?;
        *f = out.state;
        Ok(())
    })
}

/// Runs the built-in manufactured-solution problem for `dim` ∈ {1, 3} on an
/// n-cell grid from t = 0 to `t_final` and writes the (ℓ∞, ℓ², H¹) errors
/// against the closed-form solution into `out_errors`.
///
/// # Safety
/// `out_errors` must point to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn llg_manufactured_errors(
    dim: u32,
    alpha: f64,
    beta: f64,
    epsilon: f64,
    n: u32,
    t_final: f64,
    dt: f64,
    out_errors: *mut f64,
) -> LlgStatus {
    if out_errors.is_null() {
        return null_arg("out_errors");
    }
    guarded(|| {
        let grid = GridSpec::new(dim as usize, n as usize).map_err(from_error)?;
        let case = ManufacturedCase::new(dim as usize, alpha, epsilon).map_err(from_error)?;
        let mut cfg = ModelConfig::full();
        cfg.alpha = alpha;
        cfg.beta = beta;
        cfg.epsilon = epsilon;
        cfg.source = Some(case.source_fn());
        let mut intg = Integrator::new(grid, cfg, tableau::reference()).map_err(from_error)?;
        let m0 = case.exact_field(grid, 0.0);
        let out = integrate(&mut intg, &m0, 0.0, t_final, dt, 0).map_err(from_error)?;
        let errs = errors_vs_exact(&case, &out.state, t_final);
        for (i, e) in errs.into_iter().enumerate() {
            *out_errors.add(i) = e;
        }
        Ok(())
    })
}
