//! C interface to the skelqbx solver.
//!
//! Objects are opaque heap handles created by `skq_*_new` functions and
//! released with the matching `skq_*_free`. Every fallible call returns a
//! status code (`SKQ_OK` on success); the message of the most recent
//! failure on the calling thread is available from
//! [`skq_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use skelqbx::assembly::{apply_dense, OperatorSpec};
use skelqbx::geometry::{build_circle, build_sphere, build_starfish, build_torus, Dim, Discretization, Side};
use skelqbx::skeletonization::SkelParams;
use skelqbx::solver::{FastSolver, Levels};
use skelqbx::Error;

pub const SKQ_OK: i32 = 0;
// 1..=13 mirror the library's error codes.
pub const SKQ_ERR_INVALID_PARAMETER: i32 = 1;
pub const SKQ_ERR_SINGULAR_EVALUATION: i32 = 2;
pub const SKQ_ERR_CENTER_COLLISION: i32 = 3;
pub const SKQ_ERR_ACCURACY_VIOLATION: i32 = 4;
pub const SKQ_ERR_GEOMETRY: i32 = 5;
pub const SKQ_ERR_NON_FINITE: i32 = 6;
pub const SKQ_ERR_TREE_DEPTH: i32 = 7;
pub const SKQ_ERR_SINGULAR_BLOCK: i32 = 8;
pub const SKQ_ERR_SINGULAR_REDUCED: i32 = 9;
pub const SKQ_ERR_DIMENSION: i32 = 10;
pub const SKQ_ERR_CONFIG: i32 = 11;
pub const SKQ_ERR_IO: i32 = 12;
pub const SKQ_ERR_CSV: i32 = 13;
pub const SKQ_ERR_NULL_POINTER: i32 = 100;
pub const SKQ_ERR_PANIC: i32 = 101;

pub const SKQ_LAYER_SINGLE: i32 = 0;
pub const SKQ_LAYER_DOUBLE: i32 = 1;

/// Nodes, weights, normals and QBX centers of a panel discretization.
pub struct SkqDiscretization {
    disc: Discretization,
}

/// Compressed factorization of a layer-potential operator.
pub struct SkqSolver {
    solver: FastSolver,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(code: i32, msg: &str) -> i32 {
    set_error(msg);
    code
}

/// Run `f`, turning library errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (i32, String)>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SKQ_OK
        }
        Ok(Err((code, msg))) => fail(code, &msg),
        Err(_) => fail(SKQ_ERR_PANIC, "internal panic"),
    }
}

fn lib_err(e: Error) -> (i32, String) {
    (e.code(), e.to_string())
}

fn null_err(what: &str) -> (i32, String) {
    (SKQ_ERR_NULL_POINTER, format!("{what} is null"))
}

fn operator(dim: Dim, layer: i32, p_qbx: usize) -> Result<OperatorSpec, (i32, String)> {
    match layer {
        SKQ_LAYER_SINGLE => Ok(OperatorSpec::single_layer(dim, p_qbx)),
        SKQ_LAYER_DOUBLE => Ok(OperatorSpec::interior_double_layer(dim, p_qbx)),
        _ => Err((SKQ_ERR_INVALID_PARAMETER, format!("unknown layer {layer}"))),
    }
}

/// # Safety
/// `ptr` must be null or point to `len` readable doubles.
unsafe fn input<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], (i32, String)> {
    if ptr.is_null() {
        return Err(null_err(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or point to `len` writable doubles.
unsafe fn output<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], (i32, String)> {
    if ptr.is_null() {
        return Err(null_err(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

fn expect_len(len: usize, n: usize) -> Result<(), (i32, String)> {
    if len != n {
        return Err(lib_err(Error::Dimension { expected: n, got: len }));
    }
    Ok(())
}

/// # Safety
/// `out` must be null or valid for one pointer write.
unsafe fn emit_disc(out: *mut *mut SkqDiscretization, build: impl FnOnce() -> skelqbx::Result<Discretization>, qbx_scale: f64) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null_err("out"));
        }
        let disc = build().and_then(|d| d.attach_qbx_centers(Side::Interior, qbx_scale)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SkqDiscretization { disc }));
        Ok(())
    })
}

/// Message of the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn skq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn skq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Starfish curve `r(t) = 1 + amplitude sin((arms + 1) t)` with `panels`
/// Gauss-Legendre panels of `order` nodes.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn skq_starfish_new(amplitude: f64, arms: u32, panels: usize, order: usize, qbx_scale: f64, out: *mut *mut SkqDiscretization) -> i32 {
    emit_disc(out, || build_starfish(amplitude, arms, panels, order), qbx_scale)
}

/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn skq_circle_new(radius: f64, panels: usize, order: usize, qbx_scale: f64, out: *mut *mut SkqDiscretization) -> i32 {
    emit_disc(out, || build_circle(radius, panels, order), qbx_scale)
}

/// Torus with `panels_u x panels_v` panels of `order x order` nodes.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn skq_torus_new(
    major: f64,
    minor: f64,
    panels_u: usize,
    panels_v: usize,
    order: usize,
    qbx_scale: f64,
    out: *mut *mut SkqDiscretization,
) -> i32 {
    emit_disc(out, || build_torus(major, minor, panels_u, panels_v, order), qbx_scale)
}

/// Cubed sphere with `n_edge x n_edge` panels per face.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn skq_sphere_new(radius: f64, n_edge: usize, order: usize, qbx_scale: f64, out: *mut *mut SkqDiscretization) -> i32 {
    emit_disc(out, || build_sphere(radius, n_edge, order), qbx_scale)
}

/// Number of nodes, 0 for a null handle.
///
/// # Safety
/// `disc` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn skq_discretization_len(disc: *const SkqDiscretization) -> usize {
    disc.as_ref().map_or(0, |d| d.disc.len())
}

/// Copy node coordinates as `x0 y0 z0 x1 ...` into `xyz` (`3 * len` doubles).
///
/// # Safety
/// `disc` must be a live handle and `xyz` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn skq_discretization_nodes(disc: *const SkqDiscretization, xyz: *mut f64, len: usize) -> i32 {
    guard(|| {
        let d = &disc.as_ref().ok_or_else(|| null_err("disc"))?.disc;
        expect_len(len, 3 * d.len())?;
        let out = output(xyz, len, "xyz")?;
        for (chunk, p) in out.chunks_exact_mut(3).zip(&d.nodes) {
            chunk.copy_from_slice(p);
        }
        Ok(())
    })
}

/// Copy quadrature weights into `w` (`len` doubles).
///
/// # Safety
/// `disc` must be a live handle and `w` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn skq_discretization_weights(disc: *const SkqDiscretization, w: *mut f64, len: usize) -> i32 {
    guard(|| {
        let d = &disc.as_ref().ok_or_else(|| null_err("disc"))?.disc;
        expect_len(len, d.len())?;
        output(w, len, "w")?.copy_from_slice(&d.weights);
        Ok(())
    })
}

/// # Safety
/// `disc` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn skq_discretization_free(disc: *mut SkqDiscretization) {
    if !disc.is_null() {
        drop(Box::from_raw(disc));
    }
}

/// Dense reference product `y = A v` by direct QBX evaluation.
///
/// # Safety
/// `disc` must be a live handle; `v` and `y` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn skq_dense_apply(disc: *const SkqDiscretization, layer: i32, p_qbx: usize, v: *const f64, y: *mut f64, len: usize) -> i32 {
    guard(|| {
        let d = &disc.as_ref().ok_or_else(|| null_err("disc"))?.disc;
        let spec = operator(d.dim, layer, p_qbx)?;
        expect_len(len, d.len())?;
        let out = apply_dense(&spec, d, input(v, len, "v")?).map_err(lib_err)?;
        output(y, len, "y")?.copy_from_slice(&out);
        Ok(())
    })
}

/// Compress the operator on `disc`. The solver keeps its own copy of the
/// geometry, so `disc` may be freed afterwards.
///
/// # Safety
/// `disc` must be a live handle and `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn skq_solver_new(
    disc: *const SkqDiscretization,
    layer: i32,
    p_qbx: usize,
    alpha: f64,
    proxy_count: usize,
    tol: f64,
    leaf_panels: usize,
    out: *mut *mut SkqSolver,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null_err("out"));
        }
        let d = &disc.as_ref().ok_or_else(|| null_err("disc"))?.disc;
        let spec = operator(d.dim, layer, p_qbx)?;
        let params = SkelParams::new(alpha, proxy_count, tol);
        let solver = FastSolver::new(&spec, d, leaf_panels, &params, Levels::Multi).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SkqSolver { solver }));
        Ok(())
    })
}

/// Number of unknowns, 0 for a null handle.
///
/// # Safety
/// `solver` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn skq_solver_len(solver: *const SkqSolver) -> usize {
    solver.as_ref().map_or(0, |s| s.solver.disc.len())
}

/// Solve `A x = b`.
///
/// # Safety
/// `solver` must be a live handle; `b` and `x` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn skq_solver_solve(solver: *const SkqSolver, b: *const f64, x: *mut f64, len: usize) -> i32 {
    guard(|| {
        let s = &solver.as_ref().ok_or_else(|| null_err("solver"))?.solver;
        let sol = s.solve(input(b, len, "b")?).map_err(lib_err)?;
        output(x, len, "x")?.copy_from_slice(&sol);
        Ok(())
    })
}

/// Compressed product `y = A v`.
///
/// # Safety
/// `solver` must be a live handle; `v` and `y` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn skq_solver_apply(solver: *const SkqSolver, v: *const f64, y: *mut f64, len: usize) -> i32 {
    guard(|| {
        let s = &solver.as_ref().ok_or_else(|| null_err("solver"))?.solver;
        let out = s.apply(input(v, len, "v")?).map_err(lib_err)?;
        output(y, len, "y")?.copy_from_slice(&out);
        Ok(())
    })
}

/// # Safety
/// `solver` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn skq_solver_free(solver: *mut SkqSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}
